#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xtm/error.hpp"

namespace xtm {

enum class Lang : int { L1 = 0, L2 = 1 };

inline constexpr int lang_index(Lang l) { return static_cast<int>(l); }
inline constexpr Lang other(Lang l) { return l == Lang::L1 ? Lang::L2 : Lang::L1; }
inline constexpr const char* lang_tag(Lang l) { return l == Lang::L1 ? "l1" : "l2"; }

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Throws DuplicateToken / EmptyFile when the invariants do not hold.
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw Error(Errc::EmptyFile, "vocabulary has no tokens");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto [it, inserted] = index_.emplace(tokens_[i], i);
      if (!inserted) throw Error(Errc::DuplicateToken, tokens_[i] + " at line " + std::to_string(i));
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<std::size_t> index_of(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct BowEntry {
  std::uint32_t index;
  std::uint32_t count;
  bool operator==(const BowEntry&) const = default;
};

struct BowDocument {
  std::string id;
  Lang lang = Lang::L1;
  std::vector<BowEntry> bow;  // sorted by index, counts >= 1
  std::optional<int> label;
  std::optional<std::string> pair_id;

  std::uint64_t total_count() const {
    std::uint64_t n = 0;
    for (const auto& e : bow) n += e.count;
    return n;
  }

  bool operator==(const BowDocument&) const = default;
};

struct DocPair {
  std::size_t l1;
  std::size_t l2;
  bool operator==(const DocPair&) const = default;
};

struct Corpus {
  std::vector<BowDocument> docs;
  Vocabulary vocab1;
  Vocabulary vocab2;
  std::map<std::string, DocPair> pair_index;

  const Vocabulary& vocab(Lang l) const { return l == Lang::L1 ? vocab1 : vocab2; }

  std::vector<std::size_t> docs_of(Lang l) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs.size(); ++i)
      if (docs[i].lang == l) out.push_back(i);
    return out;
  }
};

inline Vocabulary parse_vocab(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  // A trailing newline yields no extra token with getline; an explicit final
  // empty line is still treated as the terminator.
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  if (tokens.empty()) throw Error(Errc::EmptyFile, "vocabulary file is empty");
  return Vocabulary(std::move(tokens));
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  return parse_vocab(in);
}

namespace detail {

inline std::uint32_t require_count(const nlohmann::json& v, std::size_t line_no) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": non-integer count");
  auto c = v.get<std::int64_t>();
  if (c < 1) throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": count < 1");
  return static_cast<std::uint32_t>(c);
}

inline BowDocument parse_doc_line(const std::string& line, std::size_t line_no,
                                  const Vocabulary& v1, const Vocabulary& v2) {
  const auto where = "line " + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::MalformedLine, where);
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("lang") ||
      !j.contains("bow") || !j["bow"].is_array())
    throw Error(Errc::MalformedLine, where);

  BowDocument doc;
  doc.id = j["id"].get<std::string>();
  const auto& tag = j["lang"];
  if (!tag.is_string()) throw Error(Errc::BadLangTag, where);
  if (tag == "l1") {
    doc.lang = Lang::L1;
  } else if (tag == "l2") {
    doc.lang = Lang::L2;
  } else {
    throw Error(Errc::BadLangTag, where + ": " + tag.dump());
  }
  const Vocabulary& vocab = doc.lang == Lang::L1 ? v1 : v2;

  for (const auto& entry : j["bow"]) {
    if (!entry.is_array() || entry.size() != 2) throw Error(Errc::MalformedLine, where);
    const auto& idx = entry[0];
    if (!idx.is_number_integer() && !idx.is_number_unsigned())
      throw Error(Errc::MalformedLine, where + ": non-integer index");
    auto i = idx.get<std::int64_t>();
    if (i < 0 || static_cast<std::uint64_t>(i) >= vocab.size())
      throw Error(Errc::IndexOutOfVocab, doc.id + " index " + std::to_string(i));
    doc.bow.push_back({static_cast<std::uint32_t>(i), require_count(entry[1], line_no)});
  }
  if (doc.bow.empty()) throw Error(Errc::MalformedLine, where + ": empty bow");
  std::sort(doc.bow.begin(), doc.bow.end(),
            [](const BowEntry& a, const BowEntry& b) { return a.index < b.index; });
  for (std::size_t i = 1; i < doc.bow.size(); ++i)
    if (doc.bow[i].index == doc.bow[i - 1].index)
      throw Error(Errc::MalformedLine, where + ": repeated index");

  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_number_integer()) throw Error(Errc::MalformedLine, where + ": label");
    doc.label = j["label"].get<int>();
  }
  if (j.contains("pair_id") && !j["pair_id"].is_null()) {
    if (!j["pair_id"].is_string()) throw Error(Errc::MalformedLine, where + ": pair_id");
    doc.pair_id = j["pair_id"].get<std::string>();
  }
  return doc;
}

}  // namespace detail

/// Validates docs against their vocabularies and rebuilds the pair index.
inline Corpus make_corpus(std::vector<BowDocument> docs, Vocabulary vocab1, Vocabulary vocab2) {
  if (docs.empty()) throw Error(Errc::EmptyFile, "corpus has no documents");
  Corpus c{std::move(docs), std::move(vocab1), std::move(vocab2), {}};

  std::unordered_map<std::string, std::size_t> seen_ids;
  std::map<std::string, std::array<std::optional<std::size_t>, 2>> halves;
  for (std::size_t d = 0; d < c.docs.size(); ++d) {
    const auto& doc = c.docs[d];
    if (!seen_ids.emplace(doc.id, d).second)
      throw Error(Errc::MalformedLine, "duplicate document id " + doc.id);
    if (doc.bow.empty()) throw Error(Errc::MalformedLine, doc.id + ": empty bow");
    const auto vsize = c.vocab(doc.lang).size();
    for (const auto& e : doc.bow) {
      if (e.index >= vsize) throw Error(Errc::IndexOutOfVocab, doc.id + " index " + std::to_string(e.index));
      if (e.count < 1) throw Error(Errc::MalformedLine, doc.id + ": count < 1");
    }
    if (doc.pair_id) {
      auto& slot = halves[*doc.pair_id][lang_index(doc.lang)];
      if (slot) throw Error(Errc::MalformedLine, "pair_id " + *doc.pair_id + " repeated in one language");
      slot = d;
    }
  }
  for (const auto& [pid, h] : halves) {
    if (!h[0] || !h[1]) throw Error(Errc::DanglingPair, pid);
    c.pair_index.emplace(pid, DocPair{*h[0], *h[1]});
  }
  return c;
}

inline Corpus parse_corpus(std::istream& in, Vocabulary vocab1, Vocabulary vocab2) {
  std::vector<BowDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    docs.push_back(detail::parse_doc_line(line, line_no, vocab1, vocab2));
  }
  return make_corpus(std::move(docs), std::move(vocab1), std::move(vocab2));
}

inline Corpus load_corpus(const std::string& path, Vocabulary vocab1, Vocabulary vocab2) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  return parse_corpus(in, std::move(vocab1), std::move(vocab2));
}

inline std::string doc_to_json_line(const BowDocument& doc) {
  nlohmann::ordered_json j;
  j["id"] = doc.id;
  j["lang"] = lang_tag(doc.lang);
  auto bow = nlohmann::ordered_json::array();
  for (const auto& e : doc.bow) bow.push_back({e.index, e.count});
  j["bow"] = std::move(bow);
  if (doc.label) j["label"] = *doc.label;
  if (doc.pair_id) j["pair_id"] = *doc.pair_id;
  return j.dump();
}

inline void write_corpus(std::ostream& out, const Corpus& c) {
  for (const auto& d : c.docs) out << doc_to_json_line(d) << '\n';
}

inline void write_vocab(std::ostream& out, const Vocabulary& v) {
  for (const auto& t : v.tokens()) out << t << '\n';
}

}  // namespace xtm
