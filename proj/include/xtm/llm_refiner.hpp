#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "xtm/backbone_vae.hpp"
#include "xtm/corpus_io.hpp"
#include "xtm/error.hpp"
#include "xtm/llm_client.hpp"
#include "xtm/refined_topic.hpp"

namespace xtm {

inline constexpr std::size_t kPoolSize = 15;

/// Names used in the refinement prompt. The defaults reproduce the
/// English/Chinese wording with EN/CN line tags.
struct LanguageLabels {
  std::string name1 = "English";
  std::string name2 = "Chinese";
  std::string tag1 = "EN";
  std::string tag2 = "CN";
};

struct CandidatePool {
  int topic_id = 0;
  std::vector<std::string> words_l1;
  std::vector<std::string> words_l2;

  void validate() const {
    for (const auto* list : {&words_l1, &words_l2}) {
      if (list->size() != kPoolSize)
        throw Error(Errc::BadConfig, "candidate pool for topic " + std::to_string(topic_id) + " needs " +
                                         std::to_string(kPoolSize) + " words per language");
      std::set<std::string> uniq(list->begin(), list->end());
      if (uniq.size() != list->size())
        throw Error(Errc::BadConfig, "candidate pool for topic " + std::to_string(topic_id) + " has duplicates");
    }
  }
};

/// Top-15 words of topic k in each language.
inline CandidatePool candidate_pool(const ModelState& s, const Vocabulary& v1, const Vocabulary& v2, int k) {
  CandidatePool p{k, top_words(s, v1, Lang::L1, k, kPoolSize), top_words(s, v2, Lang::L2, k, kPoolSize)};
  p.validate();
  return p;
}

inline std::vector<CandidatePool> candidate_pools(const ModelState& s, const Vocabulary& v1, const Vocabulary& v2) {
  std::vector<CandidatePool> pools;
  for (int k = 0; k < s.topics(); ++k) pools.push_back(candidate_pool(s, v1, v2, k));
  return pools;
}

struct RefinementRound {
  int topic_id = 0;
  int round_index = 0;  // 1-based
  std::vector<std::string> words_l1;
  std::vector<std::string> words_l2;
  std::string theme;
  bool short_l1 = false;  // duplicates removed, fewer than 15 remain
  bool short_l2 = false;

  const std::vector<std::string>& words(int lang) const { return lang == 0 ? words_l1 : words_l2; }
};

namespace detail {

inline std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += sep;
    s += words[i];
  }
  return s;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Drops markdown emphasis/heading decoration around a line.
inline std::string_view strip_decoration(std::string_view s) {
  s = trim(s);
  while (!s.empty() && (s.front() == '*' || s.front() == '#' || s.front() == '`' || s.front() == '>')) {
    s.remove_prefix(1);
    s = trim(s);
  }
  while (!s.empty() && (s.back() == '*' || s.back() == '`')) {
    s.remove_suffix(1);
    s = trim(s);
  }
  return s;
}

}  // namespace detail

/// The refinement prompt: fixed instructions, output format and rules,
/// followed by the candidate pools of all topics in id order.
inline std::string build_prompt(const std::vector<CandidatePool>& pools, const LanguageLabels& labels = {}) {
  if (pools.empty()) throw Error(Errc::EmptyBatch, "no candidate pools");
  for (std::size_t i = 0; i < pools.size(); ++i) {
    if (pools[i].topic_id != static_cast<int>(i))
      throw Error(Errc::OutOfOrderTopics, "pool " + std::to_string(i) + " has topic id " +
                                              std::to_string(pools[i].topic_id));
    pools[i].validate();
  }
  const auto& t1 = labels.tag1;
  const auto& t2 = labels.tag2;
  std::ostringstream p;
  p << "Given the following cross-lingual topic words from " << labels.name1 << " and " << labels.name2
    << " for N topics, refine each topic:\n\n"
    << "1) Identify the main theme shared across both languages.\n"
    << "2) Remove irrelevant/noisy words that do not fit the theme.\n"
    << "3) Add relevant words that strengthen coherence and cross-lingual coverage.\n"
    << "4) Use only SINGLE WORDS (no phrases, no underscores, no hyphenated expressions).\n"
    << "5) Return exactly 15 words per language for each topic.\n\n"
    << "Output format for all topics:\n"
    << "Topic <id>: <brief theme>\n"
    << t1 << ": word1 - word2 - ... - word15\n"
    << t2 << ": word1 - word2 - ... - word15\n\n"
    << "Rules:\n"
    << "- Exactly 15 words after " << t1 << ": and " << t2 << ":.\n"
    << "- Separate words with \" - \".\n"
    << "- List topics in order from 0 to N–1.\n\n"
    << "N = " << pools.size() << "\n\n"
    << "Candidate words:\n";
  for (const auto& pool : pools) {
    p << "\nTopic " << pool.topic_id << ":\n"
      << t1 << ": " << detail::join(pool.words_l1, " - ") << '\n'
      << t2 << ": " << detail::join(pool.words_l2, " - ") << '\n';
  }
  return p.str();
}

inline bool is_single_word(std::string_view tok) {
  for (char c : tok)
    if (c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) return false;
  return !tok.empty();
}

/// Parses a reply in the prompt's output format into one round per topic.
/// Word lists must hold exactly 15 single-word tokens; duplicates are then
/// removed keeping the first occurrence and the list is flagged short.
inline std::vector<RefinementRound> parse_response(const std::string& text, int expected_topics,
                                                   const LanguageLabels& labels = {}) {
  struct Raw {
    int id;
    std::string theme;
    std::optional<std::string> lines[2];
  };
  std::vector<Raw> found;
  std::istringstream in(text);
  std::string line;
  const std::string tags[2] = {labels.tag1 + ":", labels.tag2 + ":"};
  while (std::getline(in, line)) {
    auto s = detail::strip_decoration(line);
    if (s.size() > 5 && (s.substr(0, 5) == "Topic" || s.substr(0, 5) == "topic") &&
        std::isspace(static_cast<unsigned char>(s[5]))) {
      auto rest = detail::trim(s.substr(5));
      std::size_t digits = 0;
      while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) ++digits;
      auto after = detail::trim(rest.substr(digits));
      if (digits > 0 && digits < 9 && !after.empty() && after.front() == ':') {
        after.remove_prefix(1);
        found.push_back({std::stoi(std::string(rest.substr(0, digits))),
                         std::string(detail::strip_decoration(after)), {}});
        continue;
      }
    }
    if (found.empty()) continue;
    for (int l = 0; l < 2; ++l)
      if (s.substr(0, tags[l].size()) == tags[l] && !found.back().lines[l])
        found.back().lines[l] = std::string(detail::trim(s.substr(tags[l].size())));
  }

  std::vector<RefinementRound> rounds;
  for (int i = 0; i < expected_topics; ++i) {
    if (static_cast<std::size_t>(i) >= found.size()) throw Error(Errc::MissingTopic, std::to_string(i));
    if (found[i].id != i) {
      const bool later = std::any_of(found.begin(), found.end(), [i](const Raw& r) { return r.id == i; });
      throw Error(later ? Errc::OutOfOrderTopics : Errc::MissingTopic, std::to_string(i));
    }
    RefinementRound r;
    r.topic_id = i;
    r.theme = found[i].theme;
    for (int l = 0; l < 2; ++l) {
      const char* lang = l == 0 ? "l1" : "l2";
      std::vector<std::string> words;
      if (found[i].lines[l]) {
        std::string_view rest = *found[i].lines[l];
        while (true) {
          auto pos = rest.find(" - ");
          auto tok = detail::trim(rest.substr(0, pos));
          if (!tok.empty()) words.emplace_back(tok);
          if (pos == std::string_view::npos) break;
          rest.remove_prefix(pos + 3);
        }
      }
      if (words.size() != kPoolSize)
        throw Error(Errc::WordCountMismatch,
                    std::to_string(i) + " " + lang + " " + std::to_string(words.size()));
      for (const auto& w : words)
        if (!is_single_word(w)) throw Error(Errc::MultiwordToken, std::to_string(i) + " " + lang + " " + w);
      std::vector<std::string> uniq;
      std::set<std::string> seen;
      for (auto& w : words)
        if (seen.insert(w).second) uniq.push_back(std::move(w));
      (l == 0 ? r.short_l1 : r.short_l2) = uniq.size() < kPoolSize;
      (l == 0 ? r.words_l1 : r.words_l2) = std::move(uniq);
    }
    rounds.push_back(std::move(r));
  }
  return rounds;
}

struct RefineOptions {
  int max_retries = 2;
  LanguageLabels labels;
};

/// One self-consistency round: query, parse, retry on parse errors with the
/// same prompt. Throws AllRetriesFailed after max_retries + 1 attempts;
/// provider failures propagate unchanged.
inline std::vector<RefinementRound> refine_round(const LlmClient& client, const std::string& prompt,
                                                 int expected_topics, int round_index,
                                                 const RefineOptions& opts = {}) {
  std::string last;
  for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
    const auto reply = client.complete(prompt, round_index);
    try {
      auto rounds = parse_response(reply, expected_topics, opts.labels);
      for (auto& r : rounds) r.round_index = round_index;
      return rounds;
    } catch (const Error& e) {
      last = e.what();
    }
  }
  throw Error(Errc::AllRetriesFailed,
              "round " + std::to_string(round_index) + " after " + std::to_string(opts.max_retries + 1) +
                  " attempts: " + last);
}

inline std::vector<RefinementRound> refine_round(const LlmClient& client, const std::vector<CandidatePool>& pools,
                                                 int round_index, const RefineOptions& opts = {}) {
  return refine_round(client, build_prompt(pools, opts.labels), static_cast<int>(pools.size()), round_index, opts);
}

struct TopicVotes {
  VoteMap l1;
  VoteMap l2;
  int rounds_effective = 0;
};

/// Vote counts per token and language over the successfully parsed rounds of
/// one topic; f(v) = count / rounds_effective.
inline TopicVotes aggregate_votes(const std::vector<RefinementRound>& rounds) {
  if (rounds.empty()) throw Error(Errc::NoSuccessfulRounds, "no rounds to aggregate");
  TopicVotes tv;
  tv.rounds_effective = static_cast<int>(rounds.size());
  for (const auto& r : rounds) {
    for (int l = 0; l < 2; ++l) {
      auto& votes = l == 0 ? tv.l1 : tv.l2;
      std::set<std::string> once(r.words(l).begin(), r.words(l).end());
      for (const auto& w : once) {
        auto [it, fresh] = votes.try_emplace(w, Vote{0, r.round_index});
        it->second.count += 1;
        if (!fresh) it->second.first_round = std::min(it->second.first_round, r.round_index);
      }
    }
  }
  return tv;
}

inline double vote_frequency(const TopicVotes& tv, const VoteMap& votes, const std::string& token) {
  auto it = votes.find(token);
  return it == votes.end() ? 0.0 : static_cast<double>(it->second.count) / tv.rounds_effective;
}

/// Descending count, then earliest first round, then lexicographic.
inline std::vector<std::string> rank_votes(const VoteMap& votes, std::size_t top_m) {
  std::vector<std::pair<std::string, Vote>> items(votes.begin(), votes.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    if (a.second.first_round != b.second.first_round) return a.second.first_round < b.second.first_round;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < items.size() && i < top_m; ++i) out.push_back(items[i].first);
  return out;
}

inline RefinedTopic select_top_m(const TopicVotes& tv, std::size_t top_m, int topic_id) {
  RefinedTopic t;
  t.topic_id = topic_id;
  t.rounds_effective = tv.rounds_effective;
  t.votes_l1 = tv.l1;
  t.votes_l2 = tv.l2;
  t.selected_l1 = rank_votes(tv.l1, top_m);
  t.selected_l2 = rank_votes(tv.l2, top_m);
  t.short_l1 = t.selected_l1.size() < top_m;
  t.short_l2 = t.selected_l2.size() < top_m;
  return t;
}

/// Re-selection from an existing topic's votes.
inline RefinedTopic select_top_m(const RefinedTopic& t, std::size_t top_m) {
  return select_top_m(TopicVotes{t.votes_l1, t.votes_l2, t.rounds_effective}, top_m, t.topic_id);
}

struct RefinementOutcome {
  std::vector<RefinedTopic> topics;  // one per pool; `failed` when no round succeeded
  int rounds_requested = 0;
  int rounds_ok = 0;
  std::vector<std::string> warnings;
};

/// R rounds over all pools, then per-topic aggregation and Top-M selection.
/// Rounds that exhaust their retries are skipped and excluded from the vote
/// denominator.
inline RefinementOutcome refine_topics(const LlmClient& client, const std::vector<CandidatePool>& pools, int rounds,
                                       std::size_t top_m, const RefineOptions& opts = {}) {
  const auto prompt = build_prompt(pools, opts.labels);
  const int K = static_cast<int>(pools.size());
  RefinementOutcome out;
  out.rounds_requested = rounds;
  std::vector<std::vector<RefinementRound>> per_topic(static_cast<std::size_t>(K));
  for (int r = 1; r <= rounds; ++r) {
    try {
      auto parsed = refine_round(client, prompt, K, r, opts);
      for (auto& rr : parsed) per_topic[static_cast<std::size_t>(rr.topic_id)].push_back(std::move(rr));
      ++out.rounds_ok;
    } catch (const Error& e) {
      if (e.code() != Errc::AllRetriesFailed) throw;
      out.warnings.push_back(std::string("round skipped: ") + e.what());
    }
  }
  for (int k = 0; k < K; ++k) {
    if (per_topic[static_cast<std::size_t>(k)].empty()) {
      RefinedTopic failed;
      failed.topic_id = k;
      failed.failed = true;
      out.topics.push_back(std::move(failed));
      continue;
    }
    out.topics.push_back(select_top_m(aggregate_votes(per_topic[static_cast<std::size_t>(k)]), top_m, k));
  }
  return out;
}

}  // namespace xtm
