#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xtm/backbone_vae.hpp"
#include "xtm/checkpoint.hpp"
#include "xtm/corpus_io.hpp"
#include "xtm/embedding_store.hpp"
#include "xtm/enhance_trainer.hpp"
#include "xtm/error.hpp"
#include "xtm/eval_metrics.hpp"
#include "xtm/llm_client.hpp"
#include "xtm/net.hpp"

namespace xtm::cli {

struct Options {
  TrainConfig train;
  std::string corpus, vocab1, vocab2;
  std::string checkpoint;
  std::string out;
  std::string embeddings, doc_embeddings;
  std::string llm_fixture;
  std::string enc_mode = "mean";
  std::string enc_fixture;
  std::string ref_pairs;
  std::string dump_targets;
  std::string classify_train, classify_test;
  std::string rate;
  std::string dataset = "ec_news";
  std::string ratings_out;
  int rate_runs = 1;
  int top_c = 15;
  std::vector<int> grid_rounds{1, 3, 5};
  std::vector<int> grid_refine_every{2, 4, 8};
  std::string config;
};

namespace detail {

inline std::vector<CLI::Option*>& needed_options() {
  thread_local std::vector<CLI::Option*> opts;
  return opts;
}

/// Marks an option as required once the config overlay has been applied, so
/// a config file can supply it.
inline CLI::Option* needed(CLI::Option* opt) {
  opt->type_name(opt->get_type_name() + " REQUIRED");
  needed_options().push_back(opt);
  return opt;
}

inline void add_train_flags(CLI::App* app, TrainConfig& c) {
  app->add_option("--topics", c.topics, "number of topics K")->capture_default_str();
  app->add_option("--hidden-dim", c.hidden_dim, "encoder hidden width")->capture_default_str();
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--batch-size", c.batch_size)->capture_default_str();
  app->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  app->add_option("--seed", c.seed)->capture_default_str();
}

inline void add_enhance_flags(CLI::App* app, TrainConfig& c) {
  app->add_option("--top-n", c.top_n, "raw candidate words per language in the MMD target")->capture_default_str();
  app->add_option("--top-m", c.top_m, "refined words kept per language")->capture_default_str();
  app->add_option("--rounds", c.rounds, "self-consistency rounds R")->capture_default_str();
  app->add_option("--refine-every", c.refine_every, "refinement frequency f (epochs)")->capture_default_str();
  app->add_option("--lambda-mmd", c.lambda_mmd)->capture_default_str();
  app->add_option("--lambda-qa", c.lambda_qa)->capture_default_str();
  app->add_option("--tau", c.tau, "theta_hat temperature")->capture_default_str();
  app->add_option("--kernel", c.kernel, "median | fixed:<v> | multi:<v,..>")->capture_default_str();
}

inline void add_inputs(CLI::App* app, Options& o, bool corpus) {
  if (corpus) needed(app->add_option("--corpus", o.corpus, "JSON-lines corpus"))->check(CLI::ExistingFile);
  needed(app->add_option("--vocab1", o.vocab1, "L1 vocabulary"))->check(CLI::ExistingFile);
  needed(app->add_option("--vocab2", o.vocab2, "L2 vocabulary"))->check(CLI::ExistingFile);
}

inline void add_providers(CLI::App* app, Options& o) {
  needed(app->add_option("--embeddings", o.embeddings, "word embeddings (word2vec text)"))->check(CLI::ExistingFile);
  app->add_option("--doc-embeddings", o.doc_embeddings, "precomputed document embeddings (JSON-lines)")
      ->check(CLI::ExistingFile);
  app->add_option("--llm-fixture", o.llm_fixture, "directory of canned LLM replies")->check(CLI::ExistingDirectory);
  app->add_option("--enc-mode", o.enc_mode)->check(CLI::IsMember({"fixture", "mean", "remote"}))->capture_default_str();
  app->add_option("--enc-fixture", o.enc_fixture, "directory of canned encoder replies")
      ->check(CLI::ExistingDirectory);
}

/// Fills options the command line left unset from a JSON object whose keys
/// are flag names without the leading dashes.
inline void apply_config(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::UsageError, "cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::UsageError, "config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(Errc::UsageError, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto* opt = app->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") throw Error(Errc::UsageError, "unknown config key " + key);
    if (opt->count() > 0) continue;
    std::vector<std::string> parts;
    auto as_text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) parts.push_back(as_text(v));
    else
      parts.push_back(as_text(value));
    try {
      opt->add_result(parts);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw Error(Errc::UsageError, "config key " + key + ": " + e.what());
    }
  }
}

inline std::unique_ptr<LlmClient> make_llm(const Options& o) {
  if (!o.llm_fixture.empty()) return std::make_unique<FixtureLlm>(o.llm_fixture);
  if (auto endpoint = env_var("XTM_LLM_ENDPOINT")) return std::make_unique<RemoteLlm>(*endpoint, env_var("XTM_LLM_API_KEY"));
  throw Error(Errc::NoLlmProvider, "no LLM provider configured");
}

inline EncoderProvider make_encoder(const Options& o) {
  if (o.enc_mode == "mean") return EncoderProvider::mean_of_words();
  if (o.enc_mode == "fixture") {
    if (o.enc_fixture.empty()) throw Error(Errc::UsageError, "--enc-mode fixture needs --enc-fixture");
    return EncoderProvider::fixture(o.enc_fixture);
  }
  auto endpoint = env_var("XTM_ENC_ENDPOINT");
  if (!endpoint) throw Error(Errc::ProviderError, "--enc-mode remote needs XTM_ENC_ENDPOINT");
  return EncoderProvider::remote(*endpoint);
}

inline Corpus read_corpus(const std::string& path, const Options& o) {
  return load_corpus(path, load_vocab(o.vocab1), load_vocab(o.vocab2));
}

inline EmbeddingTable read_table(const Options& o) {
  auto table = load_word_embeddings(o.embeddings);
  if (!o.doc_embeddings.empty()) load_doc_embeddings(o.doc_embeddings, table);
  return table;
}

template <class F>
void with_output(const std::string& path, std::ostream& fallback, F&& write) {
  if (path.empty() || path == "-") {
    write(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot write " + path);
  write(f);
  if (!f) throw Error(Errc::IoError, "write failed for " + path);
}

inline std::string loss_log_path(const std::string& checkpoint) {
  std::filesystem::path p(checkpoint);
  return (p.parent_path() / (p.stem().string() + ".loss.csv")).string();
}

inline void check_vocab(const ModelState& s, const Corpus& c) {
  if (s.vocab_size(Lang::L1) != c.vocab1.size() || s.vocab_size(Lang::L2) != c.vocab2.size())
    throw Error(Errc::ShapeMismatch, "checkpoint vocabulary sizes do not match the vocabularies");
}

inline std::vector<BowDocument> labeled_docs(const Corpus& c, Lang lang, std::vector<int>& labels) {
  std::vector<BowDocument> docs;
  for (const auto& d : c.docs)
    if (d.lang == lang && d.label) {
      docs.push_back(d);
      labels.push_back(*d.label);
    }
  return docs;
}

inline RatingContext rating_context(const std::string& dataset) {
  if (dataset == "ec_news") return RatingContext::ec_news();
  if (dataset == "amazon_review") return RatingContext::amazon_review();
  if (dataset == "rakuten_amazon") return RatingContext::rakuten_amazon();
  return RatingContext::generic(dataset);
}

inline void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// ---------------------------------------------------------------------------

inline void cmd_train(const Options& o, std::ostream& err) {
  o.train.validate();
  const auto corpus = read_corpus(o.corpus, o);
  Phase1Log log;
  const auto model = train_phase1(corpus, o.train, &log);
  save_checkpoint(o.out, model);
  if (!log.epoch_loss.empty()) err << "final epoch loss " << log.epoch_loss.back() << '\n';
}

inline void cmd_enhance(const Options& o, std::ostream& err) {
  o.train.validate();
  const auto llm = make_llm(o);
  const auto encoder = make_encoder(o);
  parse_kernel_spec(o.train.kernel);
  const auto corpus = read_corpus(o.corpus, o);
  const auto table = read_table(o);
  const auto model = load_checkpoint(o.checkpoint);
  check_vocab(model, corpus);

  const auto st = enhance(model, {corpus, *llm, encoder, table}, o.train);
  print_warnings(st.warnings, err);
  save_checkpoint(o.out, st.model);
  with_output(loss_log_path(o.out), err, [&](std::ostream& f) { write_loss_log(f, st.loss_log); });
  if (!o.dump_targets.empty())
    with_output(o.dump_targets, err, [&](std::ostream& f) {
      for (std::size_t d = 0; d < st.targets.doc_ids.size(); ++d) {
        nlohmann::ordered_json j;
        j["id"] = st.targets.doc_ids[d];
        const Vec row = st.targets.theta_hat.row(static_cast<Eigen::Index>(d)).transpose();
        j["theta_hat"] = std::vector<double>(row.data(), row.data() + row.size());
        f << j.dump() << '\n';
      }
    });
}

inline void cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.top_c < 1) throw Error(Errc::UsageError, "--top-c must be >= 1");
  std::unique_ptr<LlmClient> llm;
  if (!o.rate.empty()) llm = make_llm(o);
  const auto model = load_checkpoint(o.checkpoint);
  const auto ref = read_corpus(o.ref_pairs, o);
  check_vocab(model, ref);
  const auto topics = model_topics(model, ref.vocab1, ref.vocab2, static_cast<std::size_t>(o.top_c));
  const auto c = cnpmi(topics, RefStats::from_corpus(ref), static_cast<std::size_t>(o.top_c));
  if (std::find(c.truncated.begin(), c.truncated.end(), true) != c.truncated.end()) err << "warning: some topic lists are shorter than " << o.top_c << '\n';
  auto report = MetricsReport::make(c, topic_uniqueness(topics, static_cast<std::size_t>(o.top_c)));

  if (!o.classify_train.empty()) {
    if (o.classify_test.empty()) throw Error(Errc::UsageError, "--classify-train needs --classify-test");
    const auto train = read_corpus(o.classify_train, o);
    const auto test = read_corpus(o.classify_test, o);
    for (Lang lang : {Lang::L1, Lang::L2}) {
      std::vector<int> y_train, y_same, y_other;
      const auto d_train = labeled_docs(train, lang, y_train);
      const auto d_same = labeled_docs(test, lang, y_same);
      const auto d_other = labeled_docs(test, other(lang), y_other);
      if (d_train.empty()) continue;
      const auto r = classify_eval(infer_thetas(d_train, model), y_train, infer_thetas(d_same, model), y_same,
                                   infer_thetas(d_other, model), y_other);
      auto& cls = report.classification;
      (lang == Lang::L1 ? cls.intra_l1 : cls.intra_l2) = r.intra;
      (lang == Lang::L1 ? cls.cross_l1 : cls.cross_l2) = r.cross;
    }
  }

  if (llm) {
    const auto kind = o.rate == "intra" ? RatingKind::Intra : RatingKind::Cross;
    const auto ratings = llm_rate_topics(topics, *llm, kind, rating_context(o.dataset), o.rate_runs);
    with_output(o.ratings_out, err, [&](std::ostream& f) {
      f << "topic,kind,lang,mean\n" << std::setprecision(17);
      for (const auto& r : ratings)
        f << r.topic << ',' << (r.kind == RatingKind::Intra ? "intra" : "cross") << ','
          << (r.lang ? lang_tag(*r.lang) : "") << ',' << r.mean << '\n';
    });
  }

  with_output(o.out, out, [&](std::ostream& f) { f << report.to_json().dump(2) << '\n'; });
}

inline void cmd_export(const Options& o, std::ostream& out) {
  if (o.top_c < 1) throw Error(Errc::UsageError, "--top-c must be >= 1");
  const auto model = load_checkpoint(o.checkpoint);
  const auto v1 = load_vocab(o.vocab1);
  const auto v2 = load_vocab(o.vocab2);
  if (model.vocab_size(Lang::L1) != v1.size() || model.vocab_size(Lang::L2) != v2.size())
    throw Error(Errc::ShapeMismatch, "checkpoint vocabulary sizes do not match the vocabularies");
  const auto topics = model_topics(model, v1, v2, static_cast<std::size_t>(o.top_c));
  with_output(o.out, out, [&](std::ostream& f) {
    for (std::size_t k = 0; k < topics.size(); ++k) {
      nlohmann::ordered_json j;
      j["topic"] = k;
      j["l1"] = topics[k].l1;
      j["l2"] = topics[k].l2;
      f << j.dump() << '\n';
    }
  });
}

inline void cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  o.train.validate();
  const auto grid = expand_grid(o.grid_rounds, o.grid_refine_every);
  for (const auto& cell : grid)
    if (cell.rounds < 1 || cell.refine_every < 1) throw Error(Errc::BadConfig, "grid values must be >= 1");
  const auto llm = make_llm(o);
  const auto encoder = make_encoder(o);
  parse_kernel_spec(o.train.kernel);
  const auto corpus = read_corpus(o.corpus, o);
  const auto table = read_table(o);
  const auto model = load_checkpoint(o.checkpoint);
  check_vocab(model, corpus);
  const auto ref = o.ref_pairs.empty() ? corpus : read_corpus(o.ref_pairs, o);

  const auto rows = sweep(model, {corpus, *llm, encoder, table}, o.train, grid, RefStats::from_corpus(ref),
                          static_cast<std::size_t>(o.top_c));
  for (const auto& r : rows)
    if (r.error) err << "warning: cell r=" << r.cell.rounds << " f=" << r.cell.refine_every << ": " << *r.error << '\n';
  with_output(o.out, out, [&](std::ostream& f) { write_sweep_csv(f, rows); });
}

}  // namespace detail

/// Entry point: 0 on success, 1 on a module error, 2 on a usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  detail::needed_options().clear();
  CLI::App app{"Cross-lingual topic modeling with LLM-refined topics", "xtm"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train-backbone", "train the bilingual VAE backbone");
  auto* enh = app.add_subcommand("enhance", "refine topics with an LLM and fine-tune");
  auto* eval = app.add_subcommand("eval", "CNPMI / TU / TQ, classification and ratings");
  auto* exp = app.add_subcommand("export-topics", "top words per topic as JSON-lines");
  auto* swp = app.add_subcommand("sweep", "grid over rounds and refinement frequency");

  for (auto* sub : {train, enh, eval, exp, swp}) {
    sub->add_option("--config", o.config, "JSON file of flag values; command-line flags win")
        ->check(CLI::ExistingFile);
  }

  detail::add_inputs(train, o, true);
  detail::add_train_flags(train, o.train);
  detail::needed(train->add_option("--out", o.out, "checkpoint path"));

  for (auto* sub : {enh, swp}) {
    detail::add_inputs(sub, o, true);
    detail::add_train_flags(sub, o.train);
    detail::add_enhance_flags(sub, o.train);
    detail::add_providers(sub, o);
    detail::needed(sub->add_option("--checkpoint", o.checkpoint, "backbone checkpoint"))->check(CLI::ExistingFile);
  }
  detail::needed(enh->add_option("--out", o.out, "checkpoint path; the loss log is written next to it"));
  enh->add_option("--dump-targets", o.dump_targets, "write theta_hat rows as JSON-lines");
  swp->add_option("--ref-pairs", o.ref_pairs, "reference corpus (defaults to --corpus)")->check(CLI::ExistingFile);
  swp->add_option("--top-c", o.top_c, "top words per language for CNPMI / TU")->capture_default_str();
  swp->add_option("--grid-rounds", o.grid_rounds)->delimiter(',')->capture_default_str();
  swp->add_option("--grid-refine-every", o.grid_refine_every)->delimiter(',')->capture_default_str();
  swp->add_option("--out", o.out, "CSV path (default stdout)");

  detail::add_inputs(eval, o, false);
  detail::needed(eval->add_option("--checkpoint", o.checkpoint))->check(CLI::ExistingFile);
  detail::needed(eval->add_option("--ref-pairs", o.ref_pairs, "reference corpus with linked pairs"))->check(CLI::ExistingFile);
  eval->add_option("--top-c", o.top_c, "top words per language for CNPMI / TU")->capture_default_str();
  eval->add_option("--classify-train", o.classify_train, "labeled corpus for classifier training")
      ->check(CLI::ExistingFile);
  eval->add_option("--classify-test", o.classify_test, "labeled corpus for classifier testing")
      ->check(CLI::ExistingFile);
  eval->add_option("--rate", o.rate, "LLM topic ratings")->check(CLI::IsMember({"intra", "cross"}));
  eval->add_option("--rate-runs", o.rate_runs)->check(CLI::PositiveNumber)->capture_default_str();
  eval->add_option("--dataset", o.dataset, "ec_news | amazon_review | rakuten_amazon | free-text description")
      ->capture_default_str();
  eval->add_option("--ratings-out", o.ratings_out, "ratings CSV (default stderr)");
  eval->add_option("--llm-fixture", o.llm_fixture, "directory of canned LLM replies")->check(CLI::ExistingDirectory);
  eval->add_option("--out", o.out, "report path (default stdout)");

  detail::add_inputs(exp, o, false);
  detail::needed(exp->add_option("--checkpoint", o.checkpoint))->check(CLI::ExistingFile);
  exp->add_option("--top-c", o.top_c, "words per language")->capture_default_str();
  exp->add_option("--out", o.out, "JSON-lines path (default stdout)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e, out, err);
      err << "UsageError: " << e.what() << "\n\n" << app.help();
      return 2;
    }
    CLI::App* sub = app.get_subcommands().front();
    if (!o.config.empty()) detail::apply_config(sub, o.config);
    for (auto* opt : detail::needed_options())
      if (sub->get_option_no_throw(opt->get_name()) == opt && opt->count() == 0)
        throw Error(Errc::UsageError, opt->get_name() + " is required");

    if (sub == train) detail::cmd_train(o, err);
    else if (sub == enh) detail::cmd_enhance(o, err);
    else if (sub == eval) detail::cmd_eval(o, out, err);
    else if (sub == exp) detail::cmd_export(o, out);
    else detail::cmd_sweep(o, out, err);
    return 0;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return e.code() == Errc::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace xtm::cli
