#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "xtm/backbone_vae.hpp"
#include "xtm/corpus_io.hpp"
#include "xtm/embedding_store.hpp"
#include "xtm/error.hpp"
#include "xtm/eval_metrics.hpp"
#include "xtm/llm_client.hpp"
#include "xtm/llm_refiner.hpp"
#include "xtm/mmd_align.hpp"
#include "xtm/optimizer.hpp"
#include "xtm/qa_doc_align.hpp"

namespace xtm {

struct LossRecord {
  int epoch = 0;
  double l_phase1 = 0.0;
  double l_mmd = 0.0;
  double l_doc = 0.0;
  double j = 0.0;
};

struct EnhanceState {
  ModelState model;
  std::vector<RefinedTopic> refined;
  std::vector<MmdTarget> mmd;
  AlignmentTargets targets;
  int epoch = 0;
  std::vector<LossRecord> loss_log;
  std::vector<int> refinement_epochs;
  std::vector<std::string> warnings;
};

/// Everything Phase 2 reads but never modifies.
struct EnhanceInputs {
  const Corpus& corpus;
  const LlmClient& llm;
  const EncoderProvider& encoder;
  const EmbeddingTable& table;
};

struct EnhanceOptions {
  RefineOptions refine;
  Phase1Loss phase1 = default_phase1_loss();
  std::function<void(int epoch)> on_epoch_begin;
  std::function<void(const EnhanceState&)> on_step;
};

struct CompositeTerms {
  double phase1 = 0.0;
  double mmd = 0.0;
  double doc = 0.0;  // mean KL over the batch
  double j = 0.0;
};

/// J = L_phase1 + lambda_mmd * L_MMD + lambda_qa * L_doc on one batch.
/// Gradients of J are added into `grad`.
inline CompositeTerms composite_loss(Batch batch, const Mat& noise, const EnhanceState& st, const EnhanceInputs& in,
                                     const TrainConfig& cfg, Params& grad,
                                     const Phase1Loss& phase1 = default_phase1_loss()) {
  CompositeTerms t;
  ThetaTerm doc_term = [&](std::size_t pos, const Vec& theta, Vec& g) -> double {
    const auto* row = st.targets.find(batch[pos]->id);
    if (row == nullptr) return 0.0;
    return doc_kl(theta, st.targets.theta_hat.row(*row).transpose(), &g);
  };
  const bool use_doc = !st.targets.empty() && cfg.lambda_qa != 0.0;
  const auto bl = phase1(batch, noise, st.model, grad, use_doc ? &doc_term : nullptr, cfg.lambda_qa);
  t.phase1 = bl.phase1;
  t.doc = bl.theta_term;

  if (!st.mmd.empty()) {
    const auto m = mmd_loss(st.model, in.corpus.vocab1, in.corpus.vocab2, in.table, st.mmd,
                            static_cast<std::size_t>(cfg.top_n));
    t.mmd = m.loss;
    if (cfg.lambda_mmd != 0.0)
      for (int l = 0; l < 2; ++l) grad.beta_logits[l] += cfg.lambda_mmd * m.grad_beta[l];
  }
  t.j = t.phase1 + cfg.lambda_mmd * t.mmd + cfg.lambda_qa * t.doc;

  const std::pair<const char*, double> named[] = {{"l_phase1", t.phase1}, {"l_mmd", t.mmd}, {"l_doc", t.doc}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteLoss, name);
  return t;
}

namespace detail {

inline void refresh_refinement(EnhanceState& st, const EnhanceInputs& in, const TrainConfig& cfg,
                               const KernelConfig& kernel, const Mat& doc_vecs, const std::vector<std::string>& ids,
                               const EnhanceOptions& opts, int epoch) {
  const auto& v1 = in.corpus.vocab1;
  const auto& v2 = in.corpus.vocab2;
  auto outcome = refine_topics(in.llm, candidate_pools(st.model, v1, v2), cfg.rounds,
                               static_cast<std::size_t>(cfg.top_m), opts.refine);
  st.refinement_epochs.push_back(epoch);
  for (auto& w : outcome.warnings) st.warnings.push_back("epoch " + std::to_string(epoch) + ": " + w);
  if (outcome.rounds_ok == 0) {
    st.warnings.push_back("epoch " + std::to_string(epoch) +
                          ": every refinement round failed, keeping the previous refined sets");
    if (st.refined.empty()) st.refined = std::move(outcome.topics);
  } else {
    st.refined = std::move(outcome.topics);
  }

  auto built = build_mmd_targets(st.model, v1, v2, in.table, st.refined, kernel, static_cast<std::size_t>(cfg.top_n));
  st.mmd = std::move(built.targets);
  for (auto& w : built.warnings) st.warnings.push_back(std::move(w));

  auto topics = topic_matrix(st.refined, st.model.topics(), in.encoder, in.table);
  for (auto& w : topics.warnings) st.warnings.push_back(std::move(w));
  try {
    st.targets = build_targets(doc_vecs, ids, topics, cfg.tau);
  } catch (const Error& e) {
    if (e.code() != Errc::NoTopicsEmbeddable) throw;
    st.targets = {};
    st.warnings.push_back("epoch " + std::to_string(epoch) + ": " + e.what());
  }
}

}  // namespace detail

/// Phase 2. A refinement step runs before the first gradient step and then
/// at every epoch e with e % refine_every == 0; each one rebuilds the refined
/// distributions, bandwidths, topic embeddings and theta_hat targets.
inline EnhanceState enhance(const ModelState& model, const EnhanceInputs& in, TrainConfig cfg,
                            const EnhanceOptions& opts = {}) {
  cfg.topics = model.topics();
  cfg.hidden_dim = model.hidden();
  cfg.validate();
  if (model.vocab_size(Lang::L1) != in.corpus.vocab1.size() || model.vocab_size(Lang::L2) != in.corpus.vocab2.size())
    throw Error(Errc::ShapeMismatch, "model vocabulary sizes do not match the corpus");
  const auto kernel = parse_kernel_spec(cfg.kernel);

  EnhanceState st;
  st.model = model;
  st.model.config = cfg;

  std::vector<std::string> ids;
  for (const auto& d : in.corpus.docs) ids.push_back(d.id);
  const Mat doc_vecs = document_matrix(in.corpus, in.encoder, in.table);

  if (opts.on_epoch_begin) opts.on_epoch_begin(0);
  detail::refresh_refinement(st, in, cfg, kernel, doc_vecs, ids, opts, 0);

  Adam<Params> opt(st.model.params, AdamOptions{.lr = cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<const BowDocument*> batch_docs;
  for (int e = 0; e < cfg.epochs; ++e) {
    st.epoch = e;
    if (e > 0) {
      if (opts.on_epoch_begin) opts.on_epoch_begin(e);
      if (e % cfg.refine_every == 0) detail::refresh_refinement(st, in, cfg, kernel, doc_vecs, ids, opts, e);
    }
    const auto batches = make_batches(in.corpus.docs.size(), cfg.batch_size, rng);
    LossRecord rec{e, 0.0, 0.0, 0.0, 0.0};
    for (const auto& b : batches) {
      batch_docs.clear();
      for (auto d : b) batch_docs.push_back(&in.corpus.docs[d]);
      const Mat noise = draw_noise(batch_docs.size(), cfg.topics, rng);
      Params grad = zeros_like(st.model.params);
      const auto t = composite_loss(batch_docs, noise, st, in, cfg, grad, opts.phase1);
      if (!all_finite(grad)) throw Error(Errc::NonFiniteLoss, "gradient at epoch " + std::to_string(e));
      opt.step(st.model.params, grad);
      rec.l_phase1 += t.phase1;
      rec.l_mmd += t.mmd;
      rec.l_doc += t.doc;
      rec.j += t.j;
      if (opts.on_step) opts.on_step(st);
    }
    const double nb = static_cast<double>(batches.size());
    rec.l_phase1 /= nb;
    rec.l_mmd /= nb;
    rec.l_doc /= nb;
    rec.j /= nb;
    st.loss_log.push_back(rec);
  }
  st.epoch = cfg.epochs;
  return st;
}

inline void write_loss_log(std::ostream& out, const std::vector<LossRecord>& log) {
  out << "epoch,l_phase1,l_mmd,l_doc,j\n";
  out << std::setprecision(17);
  for (const auto& r : log) out << r.epoch << ',' << r.l_phase1 << ',' << r.l_mmd << ',' << r.l_doc << ',' << r.j << '\n';
}

// ---------------------------------------------------------------------------
// Sensitivity sweeps over rounds (R) and refinement frequency (f)

struct SweepCell {
  int rounds = 1;
  int refine_every = 1;
  bool operator==(const SweepCell&) const = default;
};

/// Cartesian product in input order with duplicate cells removed.
inline std::vector<SweepCell> expand_grid(const std::vector<int>& rounds, const std::vector<int>& refine_every) {
  std::vector<SweepCell> cells;
  std::set<std::pair<int, int>> seen;
  for (int r : rounds)
    for (int f : refine_every)
      if (seen.emplace(r, f).second) cells.push_back({r, f});
  return cells;
}

struct SweepRow {
  SweepCell cell;
  double cnpmi = 0.0;
  double tu = 0.0;
  double tq = 0.0;
  std::optional<std::string> error;
};

inline std::vector<SweepRow> sweep(const ModelState& model, const EnhanceInputs& in, const TrainConfig& base,
                                   const std::vector<SweepCell>& grid, const RefStats& ref, std::size_t top_c = 15,
                                   const EnhanceOptions& opts = {}) {
  if (grid.empty()) throw Error(Errc::BadConfig, "empty sweep grid");
  std::vector<SweepRow> rows;
  for (const auto& cell : grid) {
    SweepRow row{cell, 0.0, 0.0, 0.0, std::nullopt};
    try {
      TrainConfig cfg = base;
      cfg.rounds = cell.rounds;
      cfg.refine_every = cell.refine_every;
      const auto st = enhance(model, in, cfg, opts);
      const auto topics = model_topics(st.model, in.corpus.vocab1, in.corpus.vocab2, top_c);
      const auto c = cnpmi(topics, ref, top_c);
      row.cnpmi = c.overall;
      row.tu = topic_uniqueness(topics, top_c);
      row.tq = topic_quality(row.cnpmi, row.tu);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Failed cells keep their (r, f) with empty metric fields.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "r,f,cnpmi,tu,tq\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.cell.rounds << ',' << r.cell.refine_every;
    if (r.error)
      out << ",,,\n";
    else
      out << ',' << r.cnpmi << ',' << r.tu << ',' << r.tq << '\n';
  }
}

}  // namespace xtm
