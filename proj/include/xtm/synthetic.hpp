#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "xtm/corpus_io.hpp"
#include "xtm/embedding_store.hpp"
#include "xtm/llm_client.hpp"
#include "xtm/llm_refiner.hpp"

namespace xtm {

// Planted bilingual corpus: word i of L1 ("e###") translates to word i of L2
// ("c###"). The first topics*block_size indices form one block per planted
// topic; the rest is background. Paired documents share their topic mixture.
struct SyntheticSpec {
  int topics = 4;
  int vocab = 200;
  int docs_per_lang = 400;
  int pairs = 100;
  int block_size = 30;
  int doc_length = 60;
  double background = 0.15;
  double alpha = 0.2;
  int dim = 16;
  double spread = 0.35;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  SyntheticSpec spec;
  Corpus corpus;
  EmbeddingTable table;
  std::vector<std::vector<std::size_t>> blocks;  // word indices, most frequent first
};

namespace detail {

inline std::string synth_token(Lang l, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03zu", l == Lang::L1 ? 'e' : 'c', i);
  return buf;
}

inline Vec random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v.normalized();
}

}  // namespace detail

inline SyntheticData make_synthetic(const SyntheticSpec& spec = {}) {
  if (spec.topics * spec.block_size > spec.vocab || spec.pairs > spec.docs_per_lang || spec.topics < 1)
    throw Error(Errc::BadConfig, "synthetic spec does not fit the vocabulary");
  if (spec.block_size < static_cast<int>(kPoolSize))
    throw Error(Errc::BadConfig, "planted blocks need at least " + std::to_string(kPoolSize) + " words");
  std::mt19937_64 rng(spec.seed);
  SyntheticData data;
  data.spec = spec;

  std::vector<std::string> tok[2];
  for (int l = 0; l < 2; ++l)
    for (int i = 0; i < spec.vocab; ++i) tok[l].push_back(detail::synth_token(static_cast<Lang>(l), i));

  data.table = EmbeddingTable(spec.dim);
  std::vector<Vec> centers;
  for (int k = 0; k < spec.topics; ++k) centers.push_back(detail::random_unit(spec.dim, rng));
  data.blocks.resize(static_cast<std::size_t>(spec.topics));
  for (int i = 0; i < spec.vocab; ++i) {
    const int k = i / spec.block_size;
    Vec v = k < spec.topics ? Vec(centers[k] + spec.spread * detail::random_unit(spec.dim, rng))
                            : detail::random_unit(spec.dim, rng);
    if (k < spec.topics) data.blocks[static_cast<std::size_t>(k)].push_back(static_cast<std::size_t>(i));
    data.table.add_word(tok[0][i], v);
    data.table.add_word(tok[1][i], v);
  }

  // Zipf-like weights inside each block so the top words are well defined.
  std::vector<double> within(static_cast<std::size_t>(spec.block_size));
  for (int r = 0; r < spec.block_size; ++r) within[r] = 1.0 / std::pow(r + 1.0, 0.7);
  std::discrete_distribution<int> pick_within(within.begin(), within.end());
  const int n_background = spec.vocab - spec.topics * spec.block_size;
  std::uniform_int_distribution<int> pick_background(0, std::max(0, n_background - 1));
  std::gamma_distribution<double> gamma(spec.alpha, 1.0);
  std::poisson_distribution<int> length(spec.doc_length);
  std::bernoulli_distribution is_background(n_background > 0 ? spec.background : 0.0);

  auto draw_theta = [&] {
    std::vector<double> t(static_cast<std::size_t>(spec.topics));
    double z = 0.0;
    for (auto& x : t) z += (x = gamma(rng) + 1e-12);
    for (auto& x : t) x /= z;
    return t;
  };
  auto draw_doc = [&](Lang lang, const std::vector<double>& theta, std::string id) {
    std::discrete_distribution<int> pick_topic(theta.begin(), theta.end());
    std::map<std::uint32_t, std::uint32_t> counts;
    const int n = std::max(10, length(rng));
    for (int t = 0; t < n; ++t) {
      std::size_t w;
      if (is_background(rng))
        w = static_cast<std::size_t>(spec.topics * spec.block_size + pick_background(rng));
      else
        w = data.blocks[static_cast<std::size_t>(pick_topic(rng))][static_cast<std::size_t>(pick_within(rng))];
      ++counts[static_cast<std::uint32_t>(w)];
    }
    BowDocument d;
    d.id = std::move(id);
    d.lang = lang;
    for (const auto& [i, c] : counts) d.bow.push_back({i, c});
    d.label = static_cast<int>(std::max_element(theta.begin(), theta.end()) - theta.begin());
    return d;
  };

  std::vector<BowDocument> docs;
  char buf[32];
  for (int p = 0; p < spec.pairs; ++p) {
    const auto theta = draw_theta();
    std::snprintf(buf, sizeof buf, "p%04d", p);
    const std::string pid = buf;
    for (int l = 0; l < 2; ++l) {
      std::snprintf(buf, sizeof buf, "%s-%04d", lang_tag(static_cast<Lang>(l)), p);
      auto d = draw_doc(static_cast<Lang>(l), theta, buf);
      d.pair_id = pid;
      docs.push_back(std::move(d));
    }
  }
  for (int l = 0; l < 2; ++l)
    for (int i = spec.pairs; i < spec.docs_per_lang; ++i) {
      std::snprintf(buf, sizeof buf, "%s-%04d", lang_tag(static_cast<Lang>(l)), i);
      docs.push_back(draw_doc(static_cast<Lang>(l), draw_theta(), buf));
    }
  data.corpus = make_corpus(std::move(docs), Vocabulary(tok[0]), Vocabulary(tok[1]));
  return data;
}

namespace detail {

/// Candidate pools as they appear after "Candidate words:" in a prompt.
inline std::vector<std::vector<std::string>> prompt_pools(const std::string& prompt, const LanguageLabels& labels) {
  std::vector<std::vector<std::string>> pools;
  const auto at = prompt.find("Candidate words:");
  if (at == std::string::npos) return pools;
  std::istringstream in(prompt.substr(at));
  std::string line;
  const std::string t1 = labels.tag1 + ": ", t2 = labels.tag2 + ": ";
  while (std::getline(in, line)) {
    if (line.rfind("Topic ", 0) == 0) pools.emplace_back();
    if (pools.empty()) continue;
    std::string_view rest;
    if (line.rfind(t1, 0) == 0) rest = std::string_view(line).substr(t1.size());
    else if (line.rfind(t2, 0) == 0) rest = std::string_view(line).substr(t2.size());
    else continue;
    while (!rest.empty()) {
      auto pos = rest.find(" - ");
      pools.back().emplace_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 3);
    }
  }
  return pools;
}

inline std::string block_reply_line(const SyntheticData& data, std::size_t block, int topic, int round,
                                    const LanguageLabels& labels) {
  const auto& words = data.blocks[block];
  // A stable core plus a round-dependent tail, so votes differ across rounds.
  const std::size_t core = std::min<std::size_t>(12, kPoolSize);
  std::vector<std::size_t> chosen(words.begin(), words.begin() + static_cast<long>(core));
  std::vector<std::size_t> tail(words.begin() + static_cast<long>(core), words.end());
  std::mt19937_64 rng(data.spec.seed * 1000003ULL + static_cast<std::uint64_t>(topic) * 131ULL +
                      static_cast<std::uint64_t>(round));
  std::shuffle(tail.begin(), tail.end(), rng);
  for (std::size_t i = 0; chosen.size() < kPoolSize; ++i) chosen.push_back(tail[i]);

  std::ostringstream out;
  out << "Topic " << topic << ": planted theme " << block << '\n';
  for (int l = 0; l < 2; ++l) {
    out << (l == 0 ? labels.tag1 : labels.tag2) << ": ";
    for (std::size_t i = 0; i < chosen.size(); ++i)
      out << (i ? " - " : "") << synth_token(static_cast<Lang>(l), chosen[i]);
    out << '\n';
  }
  return out.str();
}

}  // namespace detail

/// Reply of an oracle that maps every candidate pool to the planted block it
/// overlaps most (ties to the lower block) and returns that block's words.
inline std::string oracle_reply(const SyntheticData& data, const std::string& prompt, int round,
                                const LanguageLabels& labels = {}) {
  std::map<std::string, std::size_t> block_of;
  for (std::size_t b = 0; b < data.blocks.size(); ++b)
    for (auto i : data.blocks[b]) {
      block_of[detail::synth_token(Lang::L1, i)] = b;
      block_of[detail::synth_token(Lang::L2, i)] = b;
    }
  const auto pools = detail::prompt_pools(prompt, labels);
  std::string reply;
  for (std::size_t k = 0; k < pools.size(); ++k) {
    std::vector<int> hits(data.blocks.size(), 0);
    for (const auto& w : pools[k])
      if (auto it = block_of.find(w); it != block_of.end()) ++hits[it->second];
    std::size_t best = k % data.blocks.size();
    for (std::size_t b = 0; b < hits.size(); ++b)
      if (hits[b] > hits[best]) best = b;
    reply += detail::block_reply_line(data, best, static_cast<int>(k), round, labels);
  }
  return reply;
}

inline FunctionLlm oracle_llm(const SyntheticData& data, LanguageLabels labels = {}) {
  return FunctionLlm([&data, labels](const std::string& prompt, int round) {
    return oracle_reply(data, prompt, round, labels);
  });
}

/// Prompt-independent reply assigning topic k to block k mod #blocks; usable
/// as `default.r<round>.txt` in a fixture directory.
inline std::string static_reply(const SyntheticData& data, int topics, int round, const LanguageLabels& labels = {}) {
  std::string reply;
  for (int k = 0; k < topics; ++k)
    reply += detail::block_reply_line(data, static_cast<std::size_t>(k) % data.blocks.size(), k, round, labels);
  return reply;
}

}  // namespace xtm
