// Acceptance criteria for the whole pipeline, runnable with fixture providers
// only. Prints one PASS/FAIL line per criterion; exit status is the number of
// failures.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "support.hpp"
#include "xtm/cli.hpp"
#include "xtm/enhance_trainer.hpp"
#include "xtm/eval_metrics.hpp"
#include "xtm/llm_refiner.hpp"
#include "xtm/synthetic.hpp"

using namespace xtm;
namespace ts = testing_support;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream note;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      if (ok) note << what;
      ok = false;
    }
  }
};

template <class F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::UsageError;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// ---------------------------------------------------------------------------

void tq_table(Check& c) {
  const double rows[][3] = {{0.082, 0.830, 0.068}, {-0.013, 0.192, 0.000}, {0.037, 0.930, 0.034}};
  for (const auto& r : rows)
    c.expect(std::abs(topic_quality(r[0], r[1]) - r[2]) <= 0.0005,
             "tq(" + fmt(r[0]) + ", " + fmt(r[1]) + ") = " + fmt(topic_quality(r[0], r[1])));
}

void mmd_oracle(Check& c) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 8);
    const auto P = ts::random_sample(rng, 1 + static_cast<int>(rng() % 10), dim);
    const auto Q = ts::random_sample(rng, 1 + static_cast<int>(rng() % 10), dim);
    const auto p = P.to_sample(), q = Q.to_sample();
    const auto k = parse_kernel_spec("median");
    const double s2 = resolve_bandwidths(k, p, q)[0];
    const double ours = mmd_squared(p, q, std::vector<double>{s2});
    worst = std::max(worst, std::abs(ours - std::max(0.0, ts::mmd_brute(P.points, P.weights, Q.points, Q.weights, s2))));
    c.expect(mmd_squared(p, p, k) < 1e-12, "MMD(P,P) not ~0");
    c.expect(mmd_squared(p, q, k) == mmd_squared(q, p, k), "asymmetric MMD");
  }
  c.expect(worst <= 1e-9, "max deviation " + fmt(worst));
}

void gradient_suite(Check& c) {
  const auto corpus = ts::tiny_corpus(20, 6);
  const auto table = ts::random_table(corpus, 6);
  const auto enc = EncoderProvider::mean_of_words();
  auto cfg = ts::tiny_config(3, 8);
  cfg.top_n = 3;  // 3 words per language: 6-point supports
  cfg.top_m = 3;
  cfg.lambda_mmd = 2.0;
  cfg.lambda_qa = 0.5;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);

  EnhanceState st;
  st.model = init_model(corpus, cfg);
  for (int l = 0; l < 2; ++l)
    st.model.params.beta_logits[l] = st.model.params.beta_logits[l].unaryExpr([&](double) { return n(rng); });
  for (int k = 0; k < 3; ++k) {
    std::vector<std::pair<std::string, int>> l1, l2;
    for (int i = 0; i < 3; ++i) {
      l1.emplace_back("a" + std::to_string(k * 3 + i), 3 - i);
      l2.emplace_back("b" + std::to_string(k * 3 + i + 1), 1 + i);
    }
    st.refined.push_back(ts::refined_topic(k, l1, l2));
  }
  st.mmd = build_mmd_targets(st.model, corpus.vocab1, corpus.vocab2, table, st.refined, parse_kernel_spec("median"), 3)
               .targets;
  st.targets = build_targets(corpus, st.refined, 3, enc, table, cfg.tau);
  FunctionLlm unused([](const std::string&, int) { return std::string(); });
  const EnhanceInputs in{corpus, unused, enc, table};

  std::vector<const BowDocument*> batch;
  for (std::size_t i = 0; i < corpus.docs.size(); i += 2) batch.push_back(&corpus.docs[i]);
  const Mat noise = draw_noise(batch.size(), 3, rng);

  auto check = [&](const std::string& name, const Params& analytic, const std::function<double()>& f) {
    for (double h : {1e-4, 1e-5}) {
      const auto gp = ts::gradient_pair(st.model.params, analytic, f, h);
      const double rel = ts::relative_error(gp.analytic, gp.numeric);
      c.expect(rel < 1e-4, name + " rel err " + fmt(rel) + " at h=" + fmt(h));
    }
  };
  auto run = [&](const TrainConfig& tc, Params& g) { return composite_loss(batch, noise, st, in, tc, g); };

  TrainConfig tm_only = cfg;
  tm_only.lambda_mmd = 0.0;
  tm_only.lambda_qa = 0.0;
  Params g_tm = zeros_like(st.model.params);
  run(tm_only, g_tm);
  check("L_TM", g_tm, [&] {
    Params s = zeros_like(st.model.params);
    return run(tm_only, s).phase1;
  });

  const auto m = mmd_loss(st.model, corpus.vocab1, corpus.vocab2, table, st.mmd, 3);
  Params g_mmd = zeros_like(st.model.params);
  for (int l = 0; l < 2; ++l) g_mmd.beta_logits[l] = m.grad_beta[l];
  check("L_MMD", g_mmd, [&] { return mmd_loss(st.model, corpus.vocab1, corpus.vocab2, table, st.mmd, 3).loss; });

  TrainConfig doc_unit = tm_only;
  doc_unit.lambda_qa = 1.0;
  Params g_doc = zeros_like(st.model.params);
  run(doc_unit, g_doc);
  axpy(g_doc, g_tm, -1.0);
  check("L_doc", g_doc, [&] {
    Params s = zeros_like(st.model.params);
    return run(doc_unit, s).doc;
  });

  Params g_j = zeros_like(st.model.params);
  run(cfg, g_j);
  check("J", g_j, [&] {
    Params s = zeros_like(st.model.params);
    return run(cfg, s).j;
  });
}

void normalization(Check& c) {
  const auto corpus = ts::tiny_corpus(20, 8);
  const auto table = ts::random_table(corpus, 6);
  const auto enc = EncoderProvider::mean_of_words();
  auto cfg = ts::tiny_config(3, 8);
  cfg.epochs = 5;
  cfg.top_n = 5;
  cfg.rounds = 2;
  cfg.refine_every = 2;
  cfg.lambda_mmd = 50.0;
  cfg.lambda_qa = 5.0;

  double worst = 0.0;
  int steps = 0;
  auto inspect = [&](const ModelState& s) {
    ++steps;
    for (const auto& d : corpus.docs) worst = std::max(worst, std::abs(infer_theta(d, s).sum() - 1.0));
    std::mt19937_64 rng(static_cast<std::uint64_t>(steps));
    const Mat noise = draw_noise(1, s.topics(), rng);
    worst = std::max(worst, std::abs(doc_forward(corpus.docs[0], s, noise.row(0).transpose()).theta.sum() - 1.0));
    for (Lang l : {Lang::L1, Lang::L2})
      for (int k = 0; k < s.topics(); ++k) worst = std::max(worst, std::abs(topic_word_dist(s, l, k).sum() - 1.0));
  };
  const auto model = train_phase1(corpus, cfg, nullptr, inspect);

  FunctionLlm echo([](const std::string& prompt, int) {
    const auto pools = detail::prompt_pools(prompt, {});
    std::string out;
    for (std::size_t k = 0; k < pools.size(); ++k) {
      out += "Topic " + std::to_string(k) + ": t\n";
      for (int l = 0; l < 2; ++l) {
        out += l == 0 ? "EN:" : "CN:";
        for (std::size_t i = 0; i < 15; ++i) out += (i ? " - " : " ") + pools[k][l * 15 + i];
        out += '\n';
      }
    }
    return out;
  });
  EnhanceOptions opts;
  opts.on_step = [&](const EnhanceState& st) { inspect(st.model); };
  const auto st = enhance(model, {corpus, echo, enc, table}, cfg, opts);
  c.expect(worst <= 1e-6, "max simplex deviation " + fmt(worst));
  c.expect(steps == 2 * 5 * 4, "unexpected step count " + std::to_string(steps));

  const auto ref = RefStats::from_corpus(corpus);
  for (const auto* s : {&model, &st.model}) {
    const auto topics = model_topics(*s, corpus.vocab1, corpus.vocab2, 15);
    const auto r = MetricsReport::make(cnpmi(topics, ref), topic_uniqueness(topics));
    c.expect(r.tq == std::max(0.0, r.cnpmi) * r.tu, "report tq mismatch");
  }
  const auto rows = sweep(model, {corpus, echo, enc, table}, cfg, expand_grid({1}, {1, 2}), ref, 15);
  for (const auto& r : rows) c.expect(!r.error && r.tq == std::max(0.0, r.cnpmi) * r.tu, "sweep tq mismatch");
}

void vote_oracle(Check& c) {
  std::mt19937_64 rng(77);
  int ties = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int R = 1 + static_cast<int>(rng() % 5);
    std::vector<RefinementRound> rounds(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
      rounds[r].round_index = r + 1;
      for (auto* list : {&rounds[r].words_l1, &rounds[r].words_l2}) {
        std::set<std::string> seen;
        const int n = 3 + static_cast<int>(rng() % 13);
        while (static_cast<int>(list->size()) < n) {
          auto w = "w" + std::to_string(rng() % 20);
          if (seen.insert(w).second) list->push_back(w);
        }
      }
    }
    const auto tv = aggregate_votes(rounds);
    const auto brute = ts::recount(rounds);
    for (int l = 0; l < 2; ++l) {
      const auto& votes = l == 0 ? tv.l1 : tv.l2;
      c.expect(votes.size() == brute.tally[l].size(), "vote table size");
      std::map<int, int> per_count;
      for (const auto& [w, cf] : brute.tally[l]) {
        auto it = votes.find(w);
        c.expect(it != votes.end() && it->second.count == cf.first && it->second.first_round == cf.second,
                 "vote count for " + w);
        ++per_count[cf.first];
      }
      for (auto [cnt, n] : per_count) ties += n > 1;
      c.expect(rank_votes(votes, 15) == ts::brute_top_m(brute.tally[l], 15), "top-M selection");
    }
    auto shuffled = rounds;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    c.expect(select_top_m(aggregate_votes(shuffled), 15, 0) == select_top_m(tv, 15, 0), "permutation changed result");
  }
  c.expect(ties > 0, "no tie cases generated");
}

void npmi_oracle(Check& c) {
  // 4 pairs: x in pairs {0,1}, y in pairs {0,1,2}.
  std::vector<BowDocument> docs;
  const bool has_x[] = {true, true, false, false}, has_y[] = {true, true, true, false};
  for (int p = 0; p < 4; ++p)
    for (int l = 0; l < 2; ++l) {
      BowDocument d;
      d.id = (l == 0 ? "s" : "t") + std::to_string(p);
      d.lang = static_cast<Lang>(l);
      d.pair_id = "p" + std::to_string(p);
      d.bow.push_back({0, 1});
      if (l == 0 ? has_x[p] : has_y[p]) d.bow.push_back({1, 1});
      docs.push_back(d);
    }
  const auto stats = RefStats::from_corpus(make_corpus(docs, Vocabulary({"f", "x"}), Vocabulary({"f", "y"})));
  const double v = npmi_pair("x", "y", stats);
  c.expect(std::abs(v - std::log(4.0 / 3.0) / std::log(2.0)) <= 1e-6, "npmi(x,y) = " + fmt(v));

  std::mt19937_64 rng(31);
  std::vector<std::string> v1, v2;
  for (int i = 0; i < 8; ++i) {
    v1.push_back("u" + std::to_string(i));
    v2.push_back("v" + std::to_string(i));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const int n_pairs = 1 + static_cast<int>(rng() % 10);
    std::vector<ts::PairDocs> pairs(static_cast<std::size_t>(n_pairs));
    std::vector<BowDocument> rd;
    for (int p = 0; p < n_pairs; ++p)
      for (int l = 0; l < 2; ++l) {
        BowDocument d;
        d.id = (l == 0 ? "s" : "t") + std::to_string(p);
        d.lang = static_cast<Lang>(l);
        d.pair_id = "p" + std::to_string(p);
        for (std::uint32_t i = 0; i < 8; ++i)
          if (rng() % 2 == 0 || (i == 0 && d.bow.empty())) {
            d.bow.push_back({i, 1});
            (l == 0 ? pairs[p].l1 : pairs[p].l2).insert((l == 0 ? v1 : v2)[i]);
          }
        if (d.bow.empty()) {
          d.bow.push_back({7, 1});
          (l == 0 ? pairs[p].l1 : pairs[p].l2).insert((l == 0 ? v1 : v2)[7]);
        }
        rd.push_back(d);
      }
    const auto rs = RefStats::from_corpus(make_corpus(rd, Vocabulary(v1), Vocabulary(v2)));
    std::vector<TopicWords> topics;
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> raw;
    for (int k = 0; k < 3; ++k) {
      TopicWords t;
      for (int i = 0; i < 4; ++i) {
        t.l1.push_back(v1[rng() % 8]);
        t.l2.push_back(v2[rng() % 8]);
      }
      raw.emplace_back(t.l1, t.l2);
      topics.push_back(t);
    }
    const double ours = cnpmi(topics, rs, 4).overall, brute = ts::brute_cnpmi(pairs, raw, 4);
    c.expect(std::abs(ours - brute) <= 1e-9, "cnpmi " + fmt(ours) + " vs " + fmt(brute));
  }

  const int K = 5;
  std::vector<TopicWords> same(K, TopicWords{{"a", "b", "c"}, {"d", "e", "f"}});
  std::vector<TopicWords> disjoint;
  for (int k = 0; k < K; ++k) disjoint.push_back({{"a" + std::to_string(k)}, {"b" + std::to_string(k)}});
  c.expect(topic_uniqueness(same) == 1.0 / K, "TU(identical) = " + fmt(topic_uniqueness(same)));
  c.expect(topic_uniqueness(disjoint) == 1.0, "TU(disjoint) = " + fmt(topic_uniqueness(disjoint)));
}

void schedule(Check& c) {
  const auto corpus = ts::tiny_corpus(20, 4);
  const auto table = ts::random_table(corpus, 4);
  const auto enc = EncoderProvider::mean_of_words();
  auto cfg = ts::tiny_config(3, 4);
  cfg.epochs = 30;
  cfg.refine_every = 10;
  cfg.rounds = 3;
  cfg.batch_size = 8;
  cfg.lambda_mmd = 1.0;
  cfg.lambda_qa = 1.0;

  // Fixture directory with a canned reply per round for this corpus' vocab.
  const auto dir = ts::temp_dir("schedule");
  for (int r = 1; r <= cfg.rounds; ++r) {
    std::ofstream f(dir / ("default.r" + std::to_string(r) + ".txt"));
    for (int k = 0; k < 3; ++k) {
      f << "Topic " << k << ": t\nEN:";
      for (int i = 0; i < 15; ++i) f << (i ? " - " : " ") << "a" << (i + k + r) % 20;
      f << "\nCN:";
      for (int i = 0; i < 15; ++i) f << (i ? " - " : " ") << "b" << (i + 2 * k) % 20;
      f << '\n';
    }
  }
  const FixtureLlm fixture(dir.string());
  int epoch = -1;
  std::map<int, int> calls;
  FunctionLlm counting([&](const std::string& p, int round) {
    ++calls[epoch];
    return fixture.complete(p, round);
  });
  EnhanceOptions opts;
  opts.on_epoch_begin = [&](int e) { epoch = e; };
  const auto st = enhance(init_model(corpus, cfg), {corpus, counting, enc, table}, cfg, opts);
  c.expect(calls == std::map<int, int>{{0, 3}, {10, 3}, {20, 3}}, "unexpected LLM call pattern");
  c.expect(st.refinement_epochs == std::vector<int>{0, 10, 20}, "refinement epochs");
  fs::remove_all(dir);
}

void synthetic_efficacy(Check& c) {
  const auto data = make_synthetic();  // 4 planted topics, |V| = 200, 400 docs per language, 100 pairs
  const auto& corpus = data.corpus;
  const auto enc = EncoderProvider::mean_of_words();
  const auto llm = oracle_llm(data);

  TrainConfig cfg;
  cfg.topics = 4;
  cfg.hidden_dim = 64;
  cfg.epochs = 40;
  cfg.batch_size = 64;
  cfg.learning_rate = 2e-3;
  cfg.seed = 3;
  const auto phase1 = train_phase1(corpus, cfg);

  TrainConfig p2 = cfg;
  p2.epochs = 20;
  p2.rounds = 3;
  p2.refine_every = 5;
  const auto st = enhance(phase1, {corpus, llm, enc, data.table}, p2);

  const auto ref = RefStats::from_corpus(corpus);
  const double c1 = cnpmi(model_topics(phase1, corpus.vocab1, corpus.vocab2, 15), ref).overall;
  const double c2 = cnpmi(model_topics(st.model, corpus.vocab1, corpus.vocab2, 15), ref).overall;
  const double js1 = mean_paired_js(phase1, corpus), js2 = mean_paired_js(st.model, corpus);
  double first = 0.0, last = 0.0;
  const auto& log = st.loss_log;
  for (int i = 0; i < 5; ++i) {
    first += log[static_cast<std::size_t>(i)].l_doc / 5.0;
    last += log[log.size() - 5 + static_cast<std::size_t>(i)].l_doc / 5.0;
  }
  c.note << "cnpmi " << fmt(c1) << " -> " << fmt(c2) << ", js " << fmt(js1) << " -> " << fmt(js2) << ", l_doc "
         << fmt(first) << " -> " << fmt(last);
  c.expect(c2 >= c1, "; (a) CNPMI dropped");
  c.expect(js2 <= 0.9 * js1, "; (b) paired JS fell by less than 10%");
  c.expect(last < first, "; (c) L_doc did not decrease");
}

void determinism(Check& c) {
  SyntheticSpec spec;
  spec.vocab = 80;
  spec.block_size = 15;
  spec.docs_per_lang = 50;
  spec.pairs = 30;
  spec.dim = 8;
  const auto data = make_synthetic(spec);
  const auto base = ts::temp_dir("determinism");
  {
    std::ofstream v1(base / "v1.txt"), v2(base / "v2.txt"), cj(base / "c.jsonl"), em(base / "e.txt");
    write_vocab(v1, data.corpus.vocab1);
    write_vocab(v2, data.corpus.vocab2);
    write_corpus(cj, data.corpus);
    em << 2 * spec.vocab << ' ' << spec.dim << '\n' << std::setprecision(17);
    for (const auto* v : {&data.corpus.vocab1, &data.corpus.vocab2})
      for (const auto& tok : v->tokens()) {
        const Vec e = *data.table.word(tok);
        em << tok;
        for (double x : e) em << ' ' << x;
        em << '\n';
      }
  }
  fs::create_directories(base / "llm");
  for (int r = 1; r <= 2; ++r) std::ofstream(base / "llm" / ("default.r" + std::to_string(r) + ".txt")) << static_reply(data, 3, r);

  auto cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "xtm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string b = base.string();
  c.expect(cli({"train-backbone", "--corpus", b + "/c.jsonl", "--vocab1", b + "/v1.txt", "--vocab2", b + "/v2.txt",
                "--topics", "3", "--hidden-dim", "8", "--epochs", "2", "--seed", "5", "--out", b + "/m.json"}) == 0,
           "train-backbone failed");
  std::string ckpt[2], logs[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = base / ("run" + std::to_string(run));
    fs::create_directories(dir);
    const int code = cli({"enhance", "--corpus", b + "/c.jsonl", "--vocab1", b + "/v1.txt", "--vocab2", b + "/v2.txt",
                          "--checkpoint", b + "/m.json", "--embeddings", b + "/e.txt", "--llm-fixture", b + "/llm",
                          "--epochs", "3", "--rounds", "2", "--refine-every", "2", "--seed", "5", "--out",
                          (dir / "e.json").string()});
    c.expect(code == 0, "enhance failed");
    ckpt[run] = slurp(dir / "e.json");
    logs[run] = slurp(dir / "e.loss.csv");
  }
  c.expect(!ckpt[0].empty() && ckpt[0] == ckpt[1], "checkpoints differ");
  c.expect(!logs[0].empty() && logs[0] == logs[1], "loss logs differ");
  fs::remove_all(base);
}

void prompt_conformance(Check& c) {
  std::vector<CandidatePool> pools;
  for (int k = 0; k < 2; ++k) {
    CandidatePool p{k, {}, {}};
    for (int i = 0; i < 15; ++i) {
      p.words_l1.push_back("en" + std::to_string(15 * k + i));
      p.words_l2.push_back("cn" + std::to_string(15 * k + i));
    }
    pools.push_back(p);
  }
  const auto prompt = build_prompt(pools);
  for (const char* line :
       {"Given the following cross-lingual topic words from English and Chinese for N topics, refine each topic:",
        "1) Identify the main theme shared across both languages.",
        "2) Remove irrelevant/noisy words that do not fit the theme.",
        "3) Add relevant words that strengthen coherence and cross-lingual coverage.",
        "4) Use only SINGLE WORDS (no phrases, no underscores, no hyphenated expressions).",
        "5) Return exactly 15 words per language for each topic.", "Topic <id>: <brief theme>",
        "EN: word1 - word2 - ... - word15", "CN: word1 - word2 - ... - word15",
        "- Exactly 15 words after EN: and CN:.", "- Separate words with \" - \".",
        "- List topics in order from 0 to N–1."})
    c.expect(prompt.find(line) != std::string::npos, std::string("missing rule line: ") + line);

  auto line_of = [](int n, const std::string& p, const std::string& odd = "") {
    std::string s;
    for (int i = 0; i < n; ++i) s += (i ? " - " : "") + (i == 3 && !odd.empty() ? odd : p + std::to_string(i));
    return s;
  };
  auto block = [&](int id, const std::string& en, const std::string& cn) {
    return "Topic " + std::to_string(id) + ": sports\nEN: " + en + "\nCN: " + cn + "\n";
  };
  const auto good = block(0, line_of(15, "a"), line_of(15, "b")) + block(1, line_of(15, "c"), line_of(15, "d"));
  try {
    const auto r = parse_response(good, 2);
    c.expect(r.size() == 2 && r[1].words_l2.size() == 15 && r[1].words_l2[0] == "d0", "parsed content");
  } catch (const Error& e) {
    c.expect(false, std::string("reply format rejected: ") + e.what());
  }
  c.expect(error_of([&] { parse_response(block(0, line_of(14, "a"), line_of(15, "b")), 1); }) == Errc::WordCountMismatch,
           "14-word line not rejected");
  c.expect(error_of([&] { parse_response(block(0, line_of(15, "a", "two words"), line_of(15, "b")), 1); }) ==
               Errc::MultiwordToken,
           "multiword token not rejected");
  c.expect(error_of([&] {
             parse_response(block(1, line_of(15, "c"), line_of(15, "d")) + block(0, line_of(15, "a"), line_of(15, "b")), 2);
           }) == Errc::OutOfOrderTopics,
           "out-of-order topics not rejected");
}

}  // namespace

int main() {
  const std::pair<const char*, void (*)(Check&)> criteria[] = {
      {"TQ arithmetic reproduces the reported table", tq_table},
      {"weighted MMD matches brute-force oracle", mmd_oracle},
      {"analytic gradients match finite differences", gradient_suite},
      {"simplex invariants hold after every step", normalization},
      {"vote aggregation matches brute-force recount", vote_oracle},
      {"NPMI / CNPMI / TU oracles", npmi_oracle},
      {"refinement schedule and request counts", schedule},
      {"synthetic end-to-end efficacy", synthetic_efficacy},
      {"enhance is byte-for-byte deterministic", determinism},
      {"prompt and parser conformance", prompt_conformance},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.note << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !c.ok;
    std::cout << (c.ok ? "PASS" : "FAIL") << "  " << n << ". " << name << " (" << fmt(secs) << " s)";
    if (!c.note.str().empty()) std::cout << "  [" << c.note.str() << "]";
    std::cout << std::endl;
  }
  return failures;
}
