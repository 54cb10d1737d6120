#pragma once

// Fixtures and brute-force reference implementations shared by the unit
// tests and the acceptance binary. Nothing here calls into the code under
// test except to construct inputs.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "xtm/backbone_vae.hpp"
#include "xtm/corpus_io.hpp"
#include "xtm/embedding_store.hpp"
#include "xtm/llm_refiner.hpp"
#include "xtm/mmd_align.hpp"

namespace testing_support {

using xtm::Mat;
using xtm::Vec;

// ---------------------------------------------------------------------------
// fixtures

inline std::vector<std::string> tokens(char prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(std::string(1, prefix) + std::to_string(i));
  return out;
}

/// Random bilingual corpus over vocabularies "a0.." and "b0..", with every
/// L1 document paired to the L2 document of the same index.
inline xtm::Corpus tiny_corpus(int vocab = 20, int docs_per_lang = 6, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> word(0, vocab - 1), count(1, 4), len(3, 8);
  std::vector<xtm::BowDocument> docs;
  for (int l = 0; l < 2; ++l)
    for (int d = 0; d < docs_per_lang; ++d) {
      std::map<std::uint32_t, std::uint32_t> bow;
      const int n = len(rng);
      for (int i = 0; i < n; ++i) bow[static_cast<std::uint32_t>(word(rng))] += static_cast<std::uint32_t>(count(rng));
      xtm::BowDocument doc;
      doc.id = (l == 0 ? "x" : "y") + std::to_string(d);
      doc.lang = static_cast<xtm::Lang>(l);
      for (auto [i, c] : bow) doc.bow.push_back({i, c});
      doc.label = d % 2;
      doc.pair_id = "p" + std::to_string(d);
      docs.push_back(std::move(doc));
    }
  return xtm::make_corpus(std::move(docs), xtm::Vocabulary(tokens('a', vocab)), xtm::Vocabulary(tokens('b', vocab)));
}

inline xtm::EmbeddingTable random_table(const xtm::Corpus& c, int dim = 5, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  xtm::EmbeddingTable t(dim);
  for (const auto* v : {&c.vocab1, &c.vocab2})
    for (const auto& tok : v->tokens()) {
      Vec x(dim);
      for (int i = 0; i < dim; ++i) x[i] = n(rng);
      t.add_word(tok, x);
    }
  return t;
}

inline xtm::TrainConfig tiny_config(int topics = 3, int hidden = 8) {
  xtm::TrainConfig c;
  c.topics = topics;
  c.hidden_dim = hidden;
  c.batch_size = 4;
  c.epochs = 2;
  return c;
}

/// A refined topic whose selected words carry the given vote counts.
inline xtm::RefinedTopic refined_topic(int id, const std::vector<std::pair<std::string, int>>& l1,
                                       const std::vector<std::pair<std::string, int>>& l2) {
  xtm::RefinedTopic t;
  t.topic_id = id;
  t.rounds_effective = 1;
  for (const auto& [w, c] : l1) {
    t.votes_l1[w] = {c, 1};
    t.selected_l1.push_back(w);
  }
  for (const auto& [w, c] : l2) {
    t.votes_l2[w] = {c, 1};
    t.selected_l2.push_back(w);
  }
  return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xtm-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// numerical checks

/// Central difference of f with respect to the scalar at `x`.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Flattened analytic vs numeric gradient over every scalar of `params`.
struct GradPair {
  std::vector<double> analytic, numeric;
};

inline GradPair gradient_pair(xtm::Params& params, const xtm::Params& analytic, const std::function<double()>& f,
                              double h) {
  GradPair out;
  xtm::for_each_tensor(params, analytic, [&](double* p, const double* g, long n) {
    for (long i = 0; i < n; ++i) {
      out.analytic.push_back(g[i]);
      out.numeric.push_back(central_difference(f, p[i], h));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// brute-force oracles

/// Weighted MMD^2 as an explicit triple sum over plain arrays.
inline double mmd_brute(const std::vector<std::vector<double>>& X, const std::vector<double>& wx,
                        const std::vector<std::vector<double>>& Y, const std::vector<double>& wy, double sigma2) {
  auto k = [sigma2](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::exp(-(1.0 - dot) * (1.0 - dot) / (2.0 * sigma2));
  };
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = 0; j < X.size(); ++j) xx += wx[i] * wx[j] * k(X[i], X[j]);
  for (std::size_t i = 0; i < Y.size(); ++i)
    for (std::size_t j = 0; j < Y.size(); ++j) yy += wy[i] * wy[j] * k(Y[i], Y[j]);
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = 0; j < Y.size(); ++j) xy += wx[i] * wy[j] * k(X[i], Y[j]);
  return xx + yy - 2.0 * xy;
}

struct RawSample {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;

  xtm::WeightedSample to_sample() const {
    xtm::WeightedSample s;
    const auto n = static_cast<Eigen::Index>(points.size());
    const auto d = static_cast<Eigen::Index>(points.empty() ? 0 : points[0].size());
    s.points.resize(n, d);
    s.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) s.points(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      s.weights[i] = weights[static_cast<std::size_t>(i)];
      s.tokens.push_back("t" + std::to_string(i));
      s.langs.push_back(xtm::Lang::L1);
    }
    return s;
  }
};

/// Unit-norm points with simplex weights.
inline RawSample random_sample(std::mt19937_64& rng, int support, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  RawSample s;
  double z = 0.0;
  for (int i = 0; i < support; ++i) {
    std::vector<double> p(static_cast<std::size_t>(dim));
    double norm = 0.0;
    for (auto& x : p) {
      x = n(rng);
      norm += x * x;
    }
    for (auto& x : p) x /= std::sqrt(norm);
    s.points.push_back(std::move(p));
    s.weights.push_back(u(rng));
    z += s.weights.back();
  }
  for (auto& w : s.weights) w /= z;
  return s;
}

/// Vote tallies by direct recount over the round word lists.
struct BruteVotes {
  std::map<std::string, std::pair<int, int>> tally[2];  // token -> (count, first round)
};

inline BruteVotes recount(const std::vector<xtm::RefinementRound>& rounds) {
  BruteVotes v;
  for (const auto& r : rounds)
    for (int l = 0; l < 2; ++l) {
      const auto& words = l == 0 ? r.words_l1 : r.words_l2;
      for (std::size_t i = 0; i < words.size(); ++i) {
        bool seen_before = false;
        for (std::size_t j = 0; j < i; ++j) seen_before = seen_before || words[j] == words[i];
        if (seen_before) continue;
        auto& e = v.tally[l][words[i]];
        if (e.first == 0 || r.round_index < e.second) e.second = r.round_index;
        ++e.first;
      }
    }
  return v;
}

/// Top-M by repeated selection of the best remaining token.
inline std::vector<std::string> brute_top_m(std::map<std::string, std::pair<int, int>> tally, std::size_t m) {
  std::vector<std::string> out;
  while (out.size() < m && !tally.empty()) {
    auto best = tally.begin();
    for (auto it = tally.begin(); it != tally.end(); ++it) {
      const auto& [c, f] = it->second;
      const auto& [bc, bf] = best->second;
      if (c > bc || (c == bc && f < bf)) best = it;  // map order breaks the remaining ties lexicographically
    }
    out.push_back(best->first);
    tally.erase(best);
  }
  return out;
}

/// CNPMI by scanning every pair for every word combination.
struct PairDocs {
  std::set<std::string> l1, l2;
};

inline double brute_npmi(const std::vector<PairDocs>& pairs, const std::string& w1, const std::string& w2,
                         double eps = 1e-12) {
  double c1 = 0, c2 = 0, c12 = 0;
  for (const auto& p : pairs) {
    const bool a = p.l1.count(w1) > 0, b = p.l2.count(w2) > 0;
    c1 += a;
    c2 += b;
    c12 += a && b;
  }
  const double n = static_cast<double>(pairs.size());
  const double p1 = c1 / n, p2 = c2 / n, p12 = c12 / n;
  if (p1 == 0.0 || p2 == 0.0) return 0.0;
  return std::log((p12 + eps) / (p1 * p2 + eps)) / -std::log(p12 + eps);
}

inline double brute_cnpmi(const std::vector<PairDocs>& pairs,
                          const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& topics,
                          std::size_t C) {
  double total = 0.0;
  for (const auto& [t1, t2] : topics) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < std::min(C, t1.size()); ++i)
      for (std::size_t j = 0; j < std::min(C, t2.size()); ++j) {
        s += brute_npmi(pairs, t1[i], t2[j]);
        ++n;
      }
    total += n ? s / static_cast<double>(n) : 0.0;
  }
  return total / static_cast<double>(topics.size());
}

}  // namespace testing_support
