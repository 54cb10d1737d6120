#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xtm/backbone_vae.hpp"
#include "xtm/embedding_store.hpp"
#include "xtm/error.hpp"
#include "xtm/math.hpp"
#include "xtm/refined_topic.hpp"

namespace xtm {

/// A finite distribution over embedded words: row i of `points` carries
/// weight `weights[i]`. Rows are unit norm and weights sum to one.
struct WeightedSample {
  std::vector<std::string> tokens;
  std::vector<Lang> langs;
  Mat points;
  Vec weights;

  std::size_t size() const { return tokens.size(); }

  void validate() const {
    if (tokens.empty()) throw Error(Errc::EmptySupport, "weighted sample is empty");
    if (points.rows() != static_cast<Eigen::Index>(tokens.size()) || weights.size() != points.rows())
      throw Error(Errc::ShapeMismatch, "points and weights disagree");
    if (std::abs(weights.sum() - 1.0) > 1e-9) throw Error(Errc::ShapeMismatch, "weights do not sum to 1");
  }
};

/// One candidate point of a raw/refined support before normalization.
struct SupportEntry {
  std::string token;
  Lang lang;
  std::size_t vocab_index;  // unused for refined entries
  double mass;              // probability or vote count
};

struct BuiltSample {
  WeightedSample sample;
  std::vector<SupportEntry> kept;     // aligned with sample rows
  std::vector<std::string> dropped;   // tokens without embeddings
  double total_mass = 0.0;
};

/// Drops entries without embeddings, then normalizes the remaining masses.
inline BuiltSample normalize_support(const std::vector<SupportEntry>& entries, const EmbeddingTable& table) {
  BuiltSample b;
  std::vector<Vec> rows;
  for (const auto& e : entries) {
    if (auto v = table.word(e.token)) {
      rows.push_back(std::move(*v));
      b.kept.push_back(e);
      b.total_mass += e.mass;
    } else {
      b.dropped.push_back(e.token);
    }
  }
  if (b.kept.empty() || !(b.total_mass > 0.0)) throw Error(Errc::EmptySupport, "no embedded words in support");
  auto& s = b.sample;
  s.points.resize(static_cast<Eigen::Index>(rows.size()), table.dim());
  s.weights.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.points.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    s.weights[static_cast<Eigen::Index>(i)] = b.kept[i].mass / b.total_mass;
    s.tokens.push_back(b.kept[i].token);
    s.langs.push_back(b.kept[i].lang);
  }
  return b;
}

/// Raw topic distribution: top-N decoder probabilities of each language,
/// concatenated and normalized by their total.
inline BuiltSample build_raw_distribution(const ModelState& s, const Vocabulary& v1, const Vocabulary& v2,
                                          const EmbeddingTable& table, int k, std::size_t n) {
  std::vector<SupportEntry> entries;
  for (Lang lang : {Lang::L1, Lang::L2}) {
    const Vec beta = topic_word_dist(s, lang, k);
    const auto& vocab = lang == Lang::L1 ? v1 : v2;
    for (auto i : top_word_indices(beta, n))
      entries.push_back({vocab.token(i), lang, i, beta[static_cast<Eigen::Index>(i)]});
  }
  return normalize_support(entries, table);
}

/// Refined target distribution: per-language vote counts of the selected
/// words, normalized over their union.
inline BuiltSample build_refined_distribution(const RefinedTopic& refined, const EmbeddingTable& table) {
  std::vector<SupportEntry> entries;
  for (Lang lang : {Lang::L1, Lang::L2}) {
    const auto& votes = refined.votes(lang_index(lang));
    for (const auto& w : refined.selected(lang_index(lang))) {
      auto it = votes.find(w);
      const double c = it == votes.end() ? 0.0 : static_cast<double>(it->second.count);
      if (c > 0.0) entries.push_back({w, lang, 0, c});
    }
  }
  return normalize_support(entries, table);
}

struct KernelConfig {
  enum class Mode { MedianHeuristic, Fixed, Multi };
  Mode mode = Mode::MedianHeuristic;
  std::vector<double> sigma2;  // Fixed: one value; Multi: the list
  double epsilon = 1e-6;

  void validate() const {
    if (!(epsilon > 0.0)) throw Error(Errc::BadConfig, "kernel epsilon must be > 0");
    if (mode != Mode::MedianHeuristic) {
      if (sigma2.empty()) throw Error(Errc::BadConfig, "kernel needs at least one bandwidth");
      for (double s : sigma2)
        if (!(s > 0.0) || !std::isfinite(s)) throw Error(Errc::BadConfig, "kernel bandwidths must be > 0");
      if (mode == Mode::Fixed && sigma2.size() != 1) throw Error(Errc::BadConfig, "fixed kernel takes one bandwidth");
    }
  }
};

/// "median" | "fixed:<v>" | "multi:<v1,v2,...>"
inline KernelConfig parse_kernel_spec(const std::string& spec) {
  KernelConfig k;
  if (spec == "median") return k;
  auto colon = spec.find(':');
  if (colon == std::string::npos) throw Error(Errc::BadConfig, "bad kernel spec " + spec);
  const auto head = spec.substr(0, colon);
  if (head == "fixed") {
    k.mode = KernelConfig::Mode::Fixed;
  } else if (head == "multi") {
    k.mode = KernelConfig::Mode::Multi;
  } else {
    throw Error(Errc::BadConfig, "bad kernel spec " + spec);
  }
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      k.sigma2.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::BadConfig, "bad kernel bandwidth '" + item + "'");
    }
  }
  k.validate();
  return k;
}

/// Squared cosine distance between unit vectors: (1 - x.y)^2.
inline double cosine_distance_sq(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) {
  double dot = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  const double d = 1.0 - dot;
  return d * d;
}

inline Mat gaussian_gram(const Mat& X, const Mat& Y, double sigma2) {
  Mat G(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.rows(); ++j)
      G(i, j) = std::exp(-cosine_distance_sq(X.row(i).transpose(), Y.row(j).transpose()) / (2.0 * sigma2));
  return G;
}

struct Bandwidth {
  double sigma2 = 0.0;
  bool degenerate = false;
};

/// Median of squared cosine distances over all unordered pairs of the
/// combined support, floored at epsilon.
inline Bandwidth median_bandwidth(const WeightedSample& P, const WeightedSample& Q, double epsilon = 1e-6) {
  const Eigen::Index n = P.points.rows() + Q.points.rows();
  if (n < 2) throw Error(Errc::DegenerateSupport, "combined support needs two points");
  Mat all(n, P.points.cols());
  all << P.points, Q.points;
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d2.push_back(cosine_distance_sq(all.row(i).transpose(), all.row(j).transpose()));
  const double m = median(std::move(d2));
  if (!(m > epsilon)) return {epsilon, true};
  return {m, false};
}

inline std::vector<double> resolve_bandwidths(const KernelConfig& k, const WeightedSample& P, const WeightedSample& Q) {
  if (k.mode == KernelConfig::Mode::MedianHeuristic) return {median_bandwidth(P, Q, k.epsilon).sigma2};
  return k.sigma2;
}

namespace detail {

/// Total order on samples so that MMD(P, Q) and MMD(Q, P) evaluate the same
/// floating point expression.
inline bool sample_less(const WeightedSample& a, const WeightedSample& b) {
  if (a.points.rows() != b.points.rows()) return a.points.rows() < b.points.rows();
  if (a.points.cols() != b.points.cols()) return a.points.cols() < b.points.cols();
  for (Eigen::Index i = 0; i < a.weights.size(); ++i)
    if (a.weights[i] != b.weights[i]) return a.weights[i] < b.weights[i];
  for (Eigen::Index i = 0; i < a.points.size(); ++i)
    if (a.points.data()[i] != b.points.data()[i]) return a.points.data()[i] < b.points.data()[i];
  return false;
}

inline double mmd_single(const WeightedSample& P, const WeightedSample& Q, double sigma2) {
  const double xx = P.weights.dot(gaussian_gram(P.points, P.points, sigma2) * P.weights);
  const double yy = Q.weights.dot(gaussian_gram(Q.points, Q.points, sigma2) * Q.weights);
  const double xy = P.weights.dot(gaussian_gram(P.points, Q.points, sigma2) * Q.weights);
  return xx + yy - 2.0 * xy;
}

}  // namespace detail

/// Biased weighted quadratic estimator of squared MMD with a Gaussian kernel
/// on cosine distances, averaged over the bandwidth list; clamped at zero.
inline double mmd_squared(const WeightedSample& P, const WeightedSample& Q, const std::vector<double>& sigma2s) {
  if (sigma2s.empty()) throw Error(Errc::BadConfig, "no bandwidths");
  const bool swap = detail::sample_less(Q, P);
  const auto& A = swap ? Q : P;
  const auto& B = swap ? P : Q;
  double total = 0.0;
  for (double s2 : sigma2s) total += detail::mmd_single(A, B, s2);
  return std::max(0.0, total / static_cast<double>(sigma2s.size()));
}

inline double mmd_squared(const WeightedSample& P, const WeightedSample& Q, const KernelConfig& k) {
  return mmd_squared(P, Q, resolve_bandwidths(k, P, Q));
}

/// d MMD^2 / d weights of P, with Q held fixed.
inline Vec mmd_grad_weights(const WeightedSample& P, const WeightedSample& Q, const std::vector<double>& sigma2s) {
  Vec g = Vec::Zero(P.weights.size());
  for (double s2 : sigma2s)
    g += 2.0 * gaussian_gram(P.points, P.points, s2) * P.weights - 2.0 * gaussian_gram(P.points, Q.points, s2) * Q.weights;
  return g / static_cast<double>(sigma2s.size());
}

/// Refined target and frozen bandwidths for one topic, rebuilt at every
/// refinement step.
struct MmdTarget {
  bool active = false;
  WeightedSample refined;
  std::vector<double> sigma2;
  bool degenerate_bandwidth = false;
};

struct MmdTargetsBuild {
  std::vector<MmdTarget> targets;
  std::vector<std::string> warnings;
};

inline MmdTargetsBuild build_mmd_targets(const ModelState& s, const Vocabulary& v1, const Vocabulary& v2,
                                         const EmbeddingTable& table, const std::vector<RefinedTopic>& refined,
                                         const KernelConfig& kernel, std::size_t n) {
  MmdTargetsBuild out;
  out.targets.resize(static_cast<std::size_t>(s.topics()));
  for (const auto& rt : refined) {
    if (rt.failed || rt.topic_id < 0 || rt.topic_id >= s.topics()) continue;
    auto& t = out.targets[static_cast<std::size_t>(rt.topic_id)];
    try {
      auto ref = build_refined_distribution(rt, table);
      auto raw = build_raw_distribution(s, v1, v2, table, rt.topic_id, n);
      for (const auto& d : ref.dropped)
        out.warnings.push_back("topic " + std::to_string(rt.topic_id) + ": refined word without embedding: " + d);
      if (kernel.mode == KernelConfig::Mode::MedianHeuristic) {
        const auto bw = median_bandwidth(raw.sample, ref.sample, kernel.epsilon);
        t.sigma2 = {bw.sigma2};
        t.degenerate_bandwidth = bw.degenerate;
      } else {
        t.sigma2 = kernel.sigma2;
      }
      t.refined = std::move(ref.sample);
      t.active = true;
    } catch (const Error& e) {
      if (e.code() != Errc::EmptySupport) throw;
      out.warnings.push_back("topic " + std::to_string(rt.topic_id) + ": " + e.what());
    }
  }
  return out;
}

struct MmdLoss {
  double loss = 0.0;
  std::vector<double> per_topic;
  std::array<Mat, 2> grad_beta;  // d loss / d beta logits, per language
};

/// Mean over all K topics of MMD^2(raw_k, refined_k). Inactive topics add
/// zero. Gradients flow through the raw weights only; the top-N support is
/// held fixed within the step.
inline MmdLoss mmd_loss(const ModelState& s, const Vocabulary& v1, const Vocabulary& v2, const EmbeddingTable& table,
                        const std::vector<MmdTarget>& targets, std::size_t n) {
  const int K = s.topics();
  MmdLoss out;
  out.per_topic.assign(static_cast<std::size_t>(K), 0.0);
  for (int l = 0; l < 2; ++l) out.grad_beta[l] = Mat::Zero(s.params.beta_logits[l].rows(), K);
  for (int k = 0; k < K && static_cast<std::size_t>(k) < targets.size(); ++k) {
    const auto& t = targets[static_cast<std::size_t>(k)];
    if (!t.active) continue;
    BuiltSample raw;
    try {
      raw = build_raw_distribution(s, v1, v2, table, k, n);
    } catch (const Error& e) {
      if (e.code() != Errc::EmptySupport) throw;
      continue;
    }
    const double val = mmd_squared(raw.sample, t.refined, t.sigma2);
    out.per_topic[static_cast<std::size_t>(k)] = val;
    out.loss += val / K;

    // weights w_i = b_i / S over the kept words; chain to the column softmax.
    const Vec g_w = mmd_grad_weights(raw.sample, t.refined, t.sigma2) / K;
    const double S = raw.total_mass;
    double gw_dot_b = 0.0;
    for (std::size_t i = 0; i < raw.kept.size(); ++i) gw_dot_b += g_w[static_cast<Eigen::Index>(i)] * raw.kept[i].mass;
    std::array<Vec, 2> g_b = {Vec::Zero(s.params.beta_logits[0].rows()), Vec::Zero(s.params.beta_logits[1].rows())};
    for (std::size_t i = 0; i < raw.kept.size(); ++i) {
      const auto& e = raw.kept[i];
      g_b[lang_index(e.lang)][static_cast<Eigen::Index>(e.vocab_index)] +=
          g_w[static_cast<Eigen::Index>(i)] / S - gw_dot_b / (S * S);
    }
    for (Lang lang : {Lang::L1, Lang::L2}) {
      const int l = lang_index(lang);
      const Vec beta = topic_word_dist(s, lang, k);
      out.grad_beta[l].col(k) += softmax_backward(beta, g_b[l]);
    }
  }
  return out;
}

}  // namespace xtm
