#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "xtm/corpus_io.hpp"
#include "xtm/error.hpp"
#include "xtm/net.hpp"
#include "xtm/refined_topic.hpp"

namespace xtm {

using Vec = Eigen::VectorXd;

/// Word and document vectors living in one multilingual space. Vectors are
/// stored as loaded; every accessor hands out unit-norm copies.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  int dim() const noexcept { return dim_; }
  std::size_t num_words() const noexcept { return words_.size(); }
  std::size_t num_docs() const noexcept { return docs_.size(); }

  void set_dim(int dim) {
    if (dim_ != 0 && dim_ != dim) throw Error(Errc::DimMismatch, "table dim " + std::to_string(dim_));
    dim_ = dim;
  }

  void add_word(const std::string& token, Vec v) { words_[token] = checked(token, std::move(v)); }
  void add_doc(const std::string& id, Vec v) { docs_[id] = checked(id, std::move(v)); }

  bool has_word(const std::string& token) const { return unit(words_, token).has_value(); }

  /// Unit-norm word vector; nullopt when absent or zero.
  std::optional<Vec> word(const std::string& token) const { return unit(words_, token); }
  std::optional<Vec> doc(const std::string& id) const { return unit(docs_, id); }

 private:
  Vec checked(const std::string& key, Vec v) const {
    if (v.size() != dim_) throw Error(Errc::DimMismatch, key);
    if (!v.allFinite()) throw Error(Errc::NonFiniteVector, key);
    return v;
  }

  static std::optional<Vec> unit(const std::unordered_map<std::string, Vec>& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) return std::nullopt;
    const double n = it->second.norm();
    if (n == 0.0) return std::nullopt;
    return Vec(it->second / n);
  }

  int dim_ = 0;
  std::unordered_map<std::string, Vec> words_;
  std::unordered_map<std::string, Vec> docs_;
};

inline Vec normalized(const Vec& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::NonFiniteVector, "cannot normalize vector");
  return v / n;
}

/// word2vec text format: `<count> <dim>` header, then `<token> v1 .. v<dim>`.
inline void parse_word_embeddings(std::istream& in, EmbeddingTable& table) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::MalformedHeader, "missing header");
  std::istringstream hs(line);
  long long count = -1, dim = -1;
  std::string extra;
  if (!(hs >> count >> dim) || (hs >> extra) || count < 0 || dim <= 0)
    throw Error(Errc::MalformedHeader, line);
  table.set_dim(static_cast<int>(dim));

  long long rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream rs(line);
    std::string token;
    rs >> token;
    std::vector<double> comps;
    std::string field;
    while (rs >> field) {
      try {
        std::size_t used = 0;
        comps.push_back(std::stod(field, &used));
        if (used != field.size()) throw Error(Errc::DimMismatch, token);
      } catch (const std::out_of_range&) {
        throw Error(Errc::NonFiniteVector, token);
      } catch (const std::invalid_argument&) {
        throw Error(Errc::DimMismatch, token);
      }
    }
    if (static_cast<long long>(comps.size()) != dim) throw Error(Errc::DimMismatch, token);
    table.add_word(token, Eigen::Map<const Vec>(comps.data(), static_cast<Eigen::Index>(comps.size())));
    ++rows;
  }
  if (rows != count)
    throw Error(Errc::MalformedHeader,
                "header count " + std::to_string(count) + " but " + std::to_string(rows) + " rows");
}

inline EmbeddingTable load_word_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  EmbeddingTable t;
  parse_word_embeddings(in, t);
  return t;
}

/// JSON-lines `{"id": str, "vec": [floats]}`.
inline void parse_doc_embeddings(std::istream& in, EmbeddingTable& table) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(Errc::MalformedLine, "doc embeddings line " + std::to_string(line_no));
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("vec") || !j["vec"].is_array())
      throw Error(Errc::MalformedLine, "doc embeddings line " + std::to_string(line_no));
    const auto id = j["id"].get<std::string>();
    const auto comps = j["vec"].get<std::vector<double>>();
    if (table.dim() == 0) table.set_dim(static_cast<int>(comps.size()));
    table.add_doc(id, Eigen::Map<const Vec>(comps.data(), static_cast<Eigen::Index>(comps.size())));
  }
}

inline void load_doc_embeddings(const std::string& path, EmbeddingTable& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  parse_doc_embeddings(in, table);
}

enum class EncoderMode { Remote, Fixture, MeanOfWords };

/// Source of text embeddings. Fixture mode reads `<sha256(text)>.json` files
/// (`{"vec": [...]}`) from a directory; remote mode POSTs `{"text": ...}`.
/// Encoded texts are memoized; the cache is shared between copies.
class EncoderProvider {
 public:
  static EncoderProvider mean_of_words() { return EncoderProvider(EncoderMode::MeanOfWords, ""); }
  static EncoderProvider fixture(std::string dir) { return EncoderProvider(EncoderMode::Fixture, std::move(dir)); }
  static EncoderProvider remote(std::string endpoint, int max_retries = 2, double timeout_s = 60.0) {
    if (endpoint.empty()) throw Error(Errc::ProviderError, "remote encoder requires an endpoint");
    EncoderProvider p(EncoderMode::Remote, std::move(endpoint));
    p.max_retries_ = max_retries;
    p.timeout_s_ = timeout_s;
    return p;
  }

  EncoderMode mode() const noexcept { return mode_; }
  const std::string& location() const noexcept { return location_; }

  Vec encode_text(const std::string& text) const {
    {
      std::shared_lock lock(cache_->mu);
      auto it = cache_->memo.find(text);
      if (it != cache_->memo.end()) return it->second;
    }
    Vec v = mode_ == EncoderMode::Fixture ? read_fixture(text) : request(text);
    std::unique_lock lock(cache_->mu);
    return cache_->memo.emplace(text, normalized(v)).first->second;
  }

 private:
  struct Cache {
    std::shared_mutex mu;
    std::unordered_map<std::string, Vec> memo;
  };

  EncoderProvider(EncoderMode m, std::string loc)
      : mode_(m), location_(std::move(loc)), cache_(std::make_shared<Cache>()) {}

  static Vec from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("vec") || !j["vec"].is_array())
      throw Error(Errc::ProviderError, what + ": missing vec");
    std::vector<double> comps;
    try {
      comps = j["vec"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::ProviderError, what + ": vec is not numeric");
    }
    Vec v = Eigen::Map<const Vec>(comps.data(), static_cast<Eigen::Index>(comps.size()));
    if (v.size() == 0 || !v.allFinite()) throw Error(Errc::ProviderError, what + ": bad vector");
    return v;
  }

  Vec read_fixture(const std::string& text) const {
    const auto path = std::filesystem::path(location_) / (sha256_hex(text) + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::ProviderError, "encoder fixture missing: " + path.string());
    try {
      return from_json(nlohmann::json::parse(in), path.string());
    } catch (const nlohmann::json::parse_error&) {
      throw Error(Errc::ProviderError, "encoder fixture is not JSON: " + path.string());
    }
  }

  Vec request(const std::string& text) const {
    if (mode_ != EncoderMode::Remote) throw Error(Errc::ProviderError, "mean-of-words mode cannot encode text");
    HttpOptions opts;
    opts.timeout_seconds = timeout_s_;
    std::string last;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
      auto r = post_json(location_, {{"text", text}}, opts);
      if (r.failure == HttpFailure::None) return from_json(r.body, "encoder reply");
      if (r.failure == HttpFailure::Auth) throw Error(Errc::ProviderError, "auth");
      if (r.failure == HttpFailure::Client) throw Error(Errc::ProviderError, r.message);
      last = r.message;
    }
    throw Error(Errc::ProviderError, "encoder unreachable: " + last);
  }

  EncoderMode mode_;
  std::string location_;
  int max_retries_ = 2;
  double timeout_s_ = 60.0;
  std::shared_ptr<Cache> cache_;
};

/// Refined words joined into the single string sent to text encoders:
/// L1 words first, then L2, single-space separated.
inline std::string topic_text(const RefinedTopic& refined) {
  std::string s;
  for (const auto* list : {&refined.selected_l1, &refined.selected_l2})
    for (const auto& w : *list) {
      if (!s.empty()) s += ' ';
      s += w;
    }
  return s;
}

inline Vec topic_embedding(const RefinedTopic& refined, const EncoderProvider& provider,
                           const EmbeddingTable& table) {
  if (refined.selected_l1.empty() && refined.selected_l2.empty())
    throw Error(Errc::NoCoveredWords, "topic " + std::to_string(refined.topic_id) + " has no refined words");
  if (provider.mode() != EncoderMode::MeanOfWords) return provider.encode_text(topic_text(refined));

  Vec sum = Vec::Zero(table.dim());
  int covered = 0;
  for (const auto* list : {&refined.selected_l1, &refined.selected_l2})
    for (const auto& w : *list)
      if (auto v = table.word(w)) {
        sum += *v;
        ++covered;
      }
  if (covered == 0 || sum.norm() == 0.0)
    throw Error(Errc::NoCoveredWords, "topic " + std::to_string(refined.topic_id));
  return normalized(sum / covered);
}

/// Precomputed vectors win in every mode. Without one, mean-of-words mode
/// falls back to the count-weighted mean of the document's word vectors and
/// remote mode encodes the document's tokens; fixture mode requires it.
inline Vec document_embedding(const BowDocument& doc, const EncoderProvider& provider,
                              const EmbeddingTable& table, const Vocabulary* vocab = nullptr) {
  if (auto v = table.doc(doc.id)) return *v;
  if (vocab == nullptr || provider.mode() == EncoderMode::Fixture)
    throw Error(Errc::MissingDocEmbedding, doc.id);

  if (provider.mode() == EncoderMode::Remote) {
    std::string text;
    for (const auto& e : doc.bow) {
      for (std::uint32_t c = 0; c < e.count; ++c) {
        if (!text.empty()) text += ' ';
        text += vocab->token(e.index);
      }
    }
    return provider.encode_text(text);
  }

  Vec sum = Vec::Zero(table.dim());
  bool any = false;
  for (const auto& e : doc.bow)
    if (auto v = table.word(vocab->token(e.index))) {
      sum += static_cast<double>(e.count) * *v;
      any = true;
    }
  if (!any || sum.norm() == 0.0) throw Error(Errc::MissingDocEmbedding, doc.id);
  return normalized(sum);
}

}  // namespace xtm
