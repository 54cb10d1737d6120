#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "xtm/backbone_vae.hpp"
#include "xtm/corpus_io.hpp"
#include "xtm/error.hpp"
#include "xtm/llm_client.hpp"
#include "xtm/math.hpp"

namespace xtm {

/// Document-frequency statistics over linked bilingual pairs. For each token
/// the sorted list of pair positions whose document contains it; joint
/// counts are intersections computed on demand.
class RefStats {
 public:
  RefStats() = default;

  static RefStats from_corpus(const Corpus& c) {
    RefStats s;
    s.n_pairs_ = c.pair_index.size();
    std::size_t pos = 0;
    for (const auto& [pid, pair] : c.pair_index) {
      for (int l = 0; l < 2; ++l) {
        const auto& doc = c.docs[l == 0 ? pair.l1 : pair.l2];
        const auto& vocab = c.vocab(doc.lang);
        for (const auto& e : doc.bow) s.postings_[l][vocab.token(e.index)].push_back(pos);
      }
      ++pos;
    }
    return s;
  }

  std::size_t n_pairs() const noexcept { return n_pairs_; }
  std::size_t df1(const std::string& w) const { return df(0, w); }
  std::size_t df2(const std::string& w) const { return df(1, w); }

  std::size_t joint(const std::string& w1, const std::string& w2) const {
    const auto* a = find(0, w1);
    const auto* b = find(1, w2);
    if (a == nullptr || b == nullptr) return 0;
    std::size_t n = 0;
    auto i = a->begin();
    auto j = b->begin();
    while (i != a->end() && j != b->end()) {
      if (*i < *j) {
        ++i;
      } else if (*j < *i) {
        ++j;
      } else {
        ++n;
        ++i;
        ++j;
      }
    }
    return n;
  }

 private:
  const std::vector<std::size_t>* find(int l, const std::string& w) const {
    auto it = postings_[l].find(w);
    return it == postings_[l].end() ? nullptr : &it->second;
  }
  std::size_t df(int l, const std::string& w) const {
    const auto* p = find(l, w);
    return p == nullptr ? 0 : p->size();
  }

  std::size_t n_pairs_ = 0;
  std::unordered_map<std::string, std::vector<std::size_t>> postings_[2];
};

inline constexpr double kNpmiEps = 1e-12;

/// NPMI of an L1 token and an L2 token over linked pairs; 0 when either
/// token never occurs.
inline double npmi_pair(const std::string& w1, const std::string& w2, const RefStats& stats, double eps = kNpmiEps) {
  const double n = static_cast<double>(stats.n_pairs());
  if (n == 0.0) throw Error(Errc::EmptyReference, "no reference pairs");
  const double p1 = static_cast<double>(stats.df1(w1)) / n;
  const double p2 = static_cast<double>(stats.df2(w2)) / n;
  if (p1 == 0.0 || p2 == 0.0) return 0.0;
  const double p12 = static_cast<double>(stats.joint(w1, w2)) / n;
  return std::log((p12 + eps) / (p1 * p2 + eps)) / (-std::log(p12 + eps));
}

struct TopicWords {
  std::vector<std::string> l1;
  std::vector<std::string> l2;
  bool operator==(const TopicWords&) const = default;
};

inline std::vector<TopicWords> model_topics(const ModelState& s, const Vocabulary& v1, const Vocabulary& v2,
                                            std::size_t n) {
  std::vector<TopicWords> out;
  for (int k = 0; k < s.topics(); ++k)
    out.push_back({top_words(s, v1, Lang::L1, k, n), top_words(s, v2, Lang::L2, k, n)});
  return out;
}

struct CnpmiResult {
  double overall = 0.0;
  std::vector<double> per_topic;
  std::vector<bool> truncated;  // fewer than C words in some language
};

/// Per topic: mean NPMI over the C x C cross-lingual pairs of its top words;
/// overall: mean over topics.
inline CnpmiResult cnpmi(const std::vector<TopicWords>& topics, const RefStats& stats, std::size_t C = 15) {
  if (stats.n_pairs() == 0) throw Error(Errc::EmptyReference, "no reference pairs");
  CnpmiResult r;
  for (const auto& t : topics) {
    const std::size_t c1 = std::min(C, t.l1.size());
    const std::size_t c2 = std::min(C, t.l2.size());
    r.truncated.push_back(c1 < C || c2 < C);
    double sum = 0.0;
    for (std::size_t i = 0; i < c1; ++i)
      for (std::size_t j = 0; j < c2; ++j) sum += npmi_pair(t.l1[i], t.l2[j], stats);
    const double score = (c1 * c2 == 0) ? 0.0 : sum / static_cast<double>(c1 * c2);
    r.per_topic.push_back(score);
    r.overall += score;
  }
  if (!topics.empty()) r.overall /= static_cast<double>(topics.size());
  return r;
}

namespace detail {

/// Entries grouped by how many lists contain them: sum of n_c / c, entries.
/// Grouping keeps the identical and disjoint cases exact (1/K and 1).
inline std::pair<double, std::size_t> uniqueness_terms(const std::vector<std::vector<std::string>>& lists) {
  std::map<std::string, std::size_t> occurrences;
  for (const auto& list : lists) {
    std::set<std::string> uniq(list.begin(), list.end());
    for (const auto& w : uniq) ++occurrences[w];
  }
  std::map<std::size_t, std::size_t> per_count;
  std::size_t entries = 0;
  for (const auto& list : lists)
    for (const auto& w : list) {
      ++per_count[occurrences[w]];
      ++entries;
    }
  double sum = 0.0;
  for (auto [c, n] : per_count) sum += static_cast<double>(n) / static_cast<double>(c);
  return {sum, entries};
}

}  // namespace detail

/// Mean over all list entries of 1 / (number of lists containing the entry).
inline double topic_uniqueness(const std::vector<std::vector<std::string>>& lists) {
  const auto [sum, entries] = detail::uniqueness_terms(lists);
  return entries == 0 ? 0.0 : sum / static_cast<double>(entries);
}

/// Bilingual TU: occurrences are counted within each language, the average
/// runs over all K * T * 2 entries.
inline double topic_uniqueness(const std::vector<TopicWords>& topics, std::size_t T = 15) {
  std::vector<std::vector<std::string>> lists[2];
  for (const auto& t : topics) {
    lists[0].emplace_back(t.l1.begin(), t.l1.begin() + static_cast<std::ptrdiff_t>(std::min(T, t.l1.size())));
    lists[1].emplace_back(t.l2.begin(), t.l2.begin() + static_cast<std::ptrdiff_t>(std::min(T, t.l2.size())));
  }
  const auto [s1, n1] = detail::uniqueness_terms(lists[0]);
  const auto [s2, n2] = detail::uniqueness_terms(lists[1]);
  return n1 + n2 == 0 ? 0.0 : (s1 + s2) / static_cast<double>(n1 + n2);
}

inline double topic_quality(double cnpmi, double tu) { return std::max(0.0, cnpmi) * tu; }

/// Mean Jensen-Shannon divergence between the inferred theta of the two
/// halves of every linked pair.
inline double mean_paired_js(const ModelState& s, const Corpus& corpus) {
  if (corpus.pair_index.empty()) throw Error(Errc::EmptyReference, "corpus has no linked pairs");
  double sum = 0.0;
  for (const auto& [pid, p] : corpus.pair_index)
    sum += jensen_shannon(infer_theta(corpus.docs[p.l1], s), infer_theta(corpus.docs[p.l2], s));
  return sum / static_cast<double>(corpus.pair_index.size());
}

struct ClassificationReport {
  std::optional<double> intra_l1, intra_l2, cross_l1, cross_l2;
};

struct MetricsReport {
  double cnpmi = 0.0;
  double tu = 0.0;
  double tq = 0.0;
  std::vector<double> per_topic_cnpmi;
  ClassificationReport classification;

  static MetricsReport make(const CnpmiResult& c, double tu) {
    MetricsReport r;
    r.cnpmi = c.overall;
    r.tu = tu;
    r.tq = topic_quality(c.overall, tu);
    r.per_topic_cnpmi = c.per_topic;
    return r;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["cnpmi"] = cnpmi;
    j["tu"] = tu;
    j["tq"] = tq;
    j["per_topic"] = per_topic_cnpmi;
    nlohmann::ordered_json cls = nlohmann::ordered_json::object();
    auto put = [&](const char* key, const std::optional<double>& v) {
      if (v) cls[key] = *v;
    };
    put("intra_l1", classification.intra_l1);
    put("cross_l1", classification.cross_l1);
    put("intra_l2", classification.intra_l2);
    put("cross_l2", classification.cross_l2);
    j["classification"] = std::move(cls);
    return j;
  }
};

/// One-vs-rest linear SVM (hinge loss, L2 penalty) trained by dual
/// coordinate descent in a fixed sweep order, with an appended bias feature.
class LinearSvm {
 public:
  struct Options {
    double C = 1.0;
    int max_sweeps = 500;
    double tol = 1e-6;
  };

  static LinearSvm train(const Mat& X, const std::vector<int>& y) { return train(X, y, Options{}); }

  static LinearSvm train(const Mat& X, const std::vector<int>& y, Options opts) {
    if (static_cast<std::size_t>(X.rows()) != y.size() || y.empty())
      throw Error(Errc::ShapeMismatch, "features and labels disagree");
    LinearSvm m;
    const std::set<int> classes(y.begin(), y.end());
    m.classes_.assign(classes.begin(), classes.end());
    if (m.classes_.size() < 2) throw Error(Errc::SingleClassTraining, "only class " + std::to_string(y.front()));
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols() + 1;
    Mat Xb(n, d);
    Xb << X, Vec::Ones(n);
    const Vec qii = Xb.rowwise().squaredNorm();
    const std::size_t n_models = m.classes_.size() == 2 ? 1 : m.classes_.size();
    m.weights_ = Mat::Zero(static_cast<Eigen::Index>(n_models), d);
    for (std::size_t c = 0; c < n_models; ++c) {
      const int positive = m.classes_.size() == 2 ? m.classes_[1] : m.classes_[c];
      Vec w = Vec::Zero(d);
      Vec alpha = Vec::Zero(n);
      for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double max_step = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double yi = y[static_cast<std::size_t>(i)] == positive ? 1.0 : -1.0;
          if (qii[i] == 0.0) continue;
          const double g = yi * Xb.row(i).dot(w) - 1.0;
          const double a_new = std::clamp(alpha[i] - g / qii[i], 0.0, opts.C);
          const double delta = a_new - alpha[i];
          if (delta != 0.0) {
            w += delta * yi * Xb.row(i).transpose();
            alpha[i] = a_new;
            max_step = std::max(max_step, std::abs(delta));
          }
        }
        if (max_step < opts.tol) break;
      }
      m.weights_.row(static_cast<Eigen::Index>(c)) = w.transpose();
    }
    return m;
  }

  int predict(const Eigen::Ref<const Vec>& x) const {
    Vec xb(x.size() + 1);
    xb << x, 1.0;
    if (classes_.size() == 2) return weights_.row(0).dot(xb) >= 0.0 ? classes_[1] : classes_[0];
    Eigen::Index best = 0;
    (weights_ * xb).maxCoeff(&best);
    return classes_[static_cast<std::size_t>(best)];
  }

  double accuracy(const Mat& X, const std::vector<int>& y) const {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error(Errc::ShapeMismatch, "features and labels disagree");
    if (y.empty()) return 0.0;
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (predict(X.row(i).transpose()) == y[static_cast<std::size_t>(i)]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(y.size());
  }

 private:
  std::vector<int> classes_;
  Mat weights_;
};

struct IntraCross {
  double intra = 0.0;
  double cross = 0.0;
};

/// Trains on theta of one language; reports accuracy on held-out documents of
/// the same language (intra) and of the other language (cross).
inline IntraCross classify_eval(const Mat& theta_train, const std::vector<int>& labels_train, const Mat& theta_same,
                                const std::vector<int>& labels_same, const Mat& theta_other,
                                const std::vector<int>& labels_other) {
  const auto svm = LinearSvm::train(theta_train, labels_train);
  return {svm.accuracy(theta_same, labels_same), svm.accuracy(theta_other, labels_other)};
}

// ---------------------------------------------------------------------------
// LLM ratings

enum class RatingKind { Intra, Cross };

/// Rating prompt preambles. The presets carry the wording used for the three
/// standard bilingual benchmarks; `generic` fills the same template.
struct RatingContext {
  std::string intra_prompt;
  std::string cross_prompt;

  static std::string intra_template(const std::string& dataset_blurb) {
    return "You are a helpful assistant evaluating the top words of a topic model output for a given topic. "
           "The dataset is " + dataset_blurb +
           ". Please rate how related the following words are to each other on a scale from 1 to 3 "
           "(\"1\"=not very related, \"2\"=moderately related, \"3\"=very related). Reply with a single number, "
           "indicating the overall appropriateness of the topic.";
  }

  static std::string cross_template(const std::string& corpus_kind, const std::string& dataset_blurb,
                                    const std::string& lang1, const std::string& lang2) {
    return "You are a helpful assistant evaluating the similarity of topics derived from topic modeling on parallel " +
           corpus_kind + " corpora. The dataset is " + dataset_blurb +
           ". You will be given two sets of top words, one for an " + lang1 + " topic (Language 1) and one for a " +
           lang2 + " topic (Language 2). Please rate how similar the underlying topics represented by these two sets "
           "of words are, on a scale from 1 to 3 (\"1\"=not very similar, \"2\"=moderately similar, \"3\"=very "
           "similar). Reply with a single number.";
  }

  static RatingContext generic(const std::string& dataset_blurb, const std::string& corpus_kind = "bilingual",
                               const std::string& lang1 = "English", const std::string& lang2 = "Chinese") {
    return {intra_template(dataset_blurb), cross_template(corpus_kind, dataset_blurb, lang1, lang2)};
  }

  static RatingContext ec_news() {
    return {intra_template("EC News, a collection of English and Chinese news with 6 categories: business, "
                           "education, entertainment, sports, tech, and fashion"),
            cross_template("news", "EC News, with English and Chinese news", "English", "Chinese")};
  }

  static RatingContext amazon_review() {
    return {intra_template("Amazon Review, which includes English and Chinese reviews from the Amazon website"),
            cross_template("review", "Amazon Review, with English and Chinese reviews", "English", "Chinese")};
  }

  static RatingContext rakuten_amazon() {
    return {intra_template("Rakuten Amazon, which contains Japanese reviews from Rakuten, and English reviews from "
                           "Amazon"),
            "You are a helpful assistant evaluating the similarity of topics derived from topic modeling on parallel "
            "review corpora. The dataset is Rakuten Amazon, with Japanese reviews (Rakuten - Language 2) and English "
            "reviews (Amazon - Language 1). You will be given two sets of top words, one for an English topic and "
            "one for a Japanese topic. Please rate how similar the underlying topics represented by these two sets of "
            "words are, on a scale from 1 to 3 (\"1\"=not very similar, \"2\"=moderately similar, \"3\"=very "
            "similar). Reply with a single number."};
  }
};

/// First integer token in the reply whose value is 1, 2 or 3.
inline std::optional<int> parse_rating(const std::string& reply) {
  for (std::size_t i = 0; i < reply.size();) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j - i == 1 && reply[i] >= '1' && reply[i] <= '3') return reply[i] - '0';
    i = j;
  }
  return std::nullopt;
}

struct TopicRating {
  int topic = 0;
  RatingKind kind = RatingKind::Intra;
  std::optional<Lang> lang;  // intra only
  double mean = 0.0;         // mean over runs
  std::vector<int> ratings;  // one per run
};

inline std::string rating_prompt(const RatingContext& ctx, RatingKind kind, const TopicWords& t,
                                 std::optional<Lang> lang) {
  auto join = [](const std::vector<std::string>& ws) {
    std::string s;
    for (const auto& w : ws) s += (s.empty() ? "" : " ") + w;
    return s;
  };
  if (kind == RatingKind::Intra) return ctx.intra_prompt + "\n\nWords: " + join(*lang == Lang::L1 ? t.l1 : t.l2);
  return ctx.cross_prompt + "\n\nLanguage 1: " + join(t.l1) + "\nLanguage 2: " + join(t.l2);
}

/// Intra: one rating per topic and language. Cross: one per topic, comparing
/// its L1 and L2 lists. Each prompt is issued `runs` times (round 1..runs).
inline std::vector<TopicRating> llm_rate_topics(const std::vector<TopicWords>& topics, const LlmClient& client,
                                                RatingKind kind, const RatingContext& ctx, int runs = 1) {
  std::vector<TopicRating> out;
  auto rate = [&](int k, std::optional<Lang> lang) {
    TopicRating r{k, kind, lang, 0.0, {}};
    const auto prompt = rating_prompt(ctx, kind, topics[static_cast<std::size_t>(k)], lang);
    for (int run = 1; run <= runs; ++run) {
      auto v = parse_rating(client.complete(prompt, run));
      if (!v) throw Error(Errc::UnparseableRating, std::to_string(k));
      r.ratings.push_back(*v);
    }
    double s = 0.0;
    for (int v : r.ratings) s += v;
    r.mean = s / static_cast<double>(r.ratings.size());
    out.push_back(std::move(r));
  };
  for (int k = 0; k < static_cast<int>(topics.size()); ++k) {
    if (kind == RatingKind::Intra) {
      rate(k, Lang::L1);
      rate(k, Lang::L2);
    } else {
      rate(k, std::nullopt);
    }
  }
  return out;
}

}  // namespace xtm
