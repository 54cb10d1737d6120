#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "xtm/corpus_io.hpp"
#include "xtm/embedding_store.hpp"
#include "xtm/error.hpp"
#include "xtm/math.hpp"
#include "xtm/refined_topic.hpp"

namespace xtm {

/// theta_hat rows, one per document, from temperature-scaled cosine
/// similarity to the topic embeddings. Inactive topics are excluded from the
/// softmax and get zero mass.
struct AlignmentTargets {
  Mat theta_hat;  // D x K
  double tau = 0.5;
  Mat topic_vecs;  // K x dim, unit rows (zero rows for inactive topics)
  std::vector<bool> topic_active;
  std::vector<std::string> doc_ids;
  std::unordered_map<std::string, Eigen::Index> row_of;

  bool empty() const { return theta_hat.rows() == 0; }

  const Eigen::Index* find(const std::string& id) const {
    auto it = row_of.find(id);
    return it == row_of.end() ? nullptr : &it->second;
  }
};

/// softmax(s / tau) with s_k = h . t_k over the active topics.
inline Vec similarity_row(const Vec& h, const Mat& topic_vecs, double tau, const std::vector<bool>& active = {}) {
  if (!(tau > 0.0)) throw Error(Errc::BadConfig, "tau must be > 0");
  const Eigen::Index K = topic_vecs.rows();
  Vec logits(K);
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!active.empty() && !active[static_cast<std::size_t>(k)]) continue;
    logits[k] = topic_vecs.row(k).dot(h) / tau;
    mx = std::max(mx, logits[k]);
  }
  Vec row = Vec::Zero(K);
  double z = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!active.empty() && !active[static_cast<std::size_t>(k)]) continue;
    row[k] = std::exp(logits[k] - mx);
    z += row[k];
  }
  return row / z;
}

/// KL(theta || theta_hat) for one document and its gradient w.r.t. theta.
inline double doc_kl(const Vec& theta, const Vec& target, Vec* grad_theta) {
  double loss = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double t = theta[k];
    const double lt = std::log(std::max(t, kLogFloor));
    const double lq = std::log(std::max(target[k], kLogFloor));
    if (t > 0.0) loss += t * (lt - lq);
    if (grad_theta != nullptr) (*grad_theta)[k] = lt - lq + (t > kLogFloor ? 1.0 : 0.0);
  }
  return loss;
}

struct DocAlignLoss {
  double loss = 0.0;
  Mat grad_theta;
};

/// Sum over documents of KL(theta_d || theta_hat_d); theta_hat is constant.
inline DocAlignLoss doc_align_loss(const Mat& theta, const Mat& theta_hat) {
  if (theta.rows() != theta_hat.rows() || theta.cols() != theta_hat.cols())
    throw Error(Errc::ShapeMismatch, "theta is " + std::to_string(theta.rows()) + "x" + std::to_string(theta.cols()) +
                                         ", targets are " + std::to_string(theta_hat.rows()) + "x" +
                                         std::to_string(theta_hat.cols()));
  DocAlignLoss out;
  out.grad_theta.resize(theta.rows(), theta.cols());
  Vec g(theta.cols());
  for (Eigen::Index d = 0; d < theta.rows(); ++d) {
    out.loss += doc_kl(theta.row(d).transpose(), theta_hat.row(d).transpose(), &g);
    out.grad_theta.row(d) = g.transpose();
  }
  return out;
}

inline DocAlignLoss doc_align_loss(const Mat& theta, const AlignmentTargets& targets) {
  return doc_align_loss(theta, targets.theta_hat);
}

/// Unit document vectors for every document of the corpus, in corpus order.
inline Mat document_matrix(const Corpus& corpus, const EncoderProvider& provider, const EmbeddingTable& table) {
  Mat H(static_cast<Eigen::Index>(corpus.docs.size()), table.dim());
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    const auto& doc = corpus.docs[d];
    Vec h = document_embedding(doc, provider, table, &corpus.vocab(doc.lang));
    if (H.cols() == 0 || h.size() != H.cols()) {
      if (d != 0) throw Error(Errc::DimMismatch, "document " + doc.id);
      H.resize(H.rows(), h.size());
    }
    H.row(static_cast<Eigen::Index>(d)) = h.transpose();
  }
  return H;
}

struct TopicVectors {
  Mat vecs;  // K x dim
  std::vector<bool> active;
  std::vector<std::string> warnings;
};

inline TopicVectors topic_matrix(const std::vector<RefinedTopic>& refined, int K, const EncoderProvider& provider,
                                 const EmbeddingTable& table) {
  TopicVectors tv;
  tv.active.assign(static_cast<std::size_t>(K), false);
  std::vector<Vec> rows(static_cast<std::size_t>(K));
  Eigen::Index dim = table.dim();
  for (const auto& rt : refined) {
    if (rt.failed || rt.topic_id < 0 || rt.topic_id >= K) continue;
    try {
      rows[static_cast<std::size_t>(rt.topic_id)] = topic_embedding(rt, provider, table);
      tv.active[static_cast<std::size_t>(rt.topic_id)] = true;
      dim = rows[static_cast<std::size_t>(rt.topic_id)].size();
    } catch (const Error& e) {
      if (e.code() != Errc::NoCoveredWords) throw;
      tv.warnings.push_back(e.what());
    }
  }
  tv.vecs = Mat::Zero(K, dim);
  for (int k = 0; k < K; ++k)
    if (tv.active[static_cast<std::size_t>(k)]) tv.vecs.row(k) = rows[static_cast<std::size_t>(k)].transpose();
  return tv;
}

/// Targets from precomputed document vectors (rows aligned with `doc_ids`).
inline AlignmentTargets build_targets(const Mat& doc_vecs, const std::vector<std::string>& doc_ids,
                                      const TopicVectors& topics, double tau) {
  if (std::none_of(topics.active.begin(), topics.active.end(), [](bool a) { return a; }))
    throw Error(Errc::NoTopicsEmbeddable, "no refined topic could be embedded");
  AlignmentTargets t;
  t.tau = tau;
  t.topic_vecs = topics.vecs;
  t.topic_active = topics.active;
  t.doc_ids = doc_ids;
  t.theta_hat.resize(doc_vecs.rows(), topics.vecs.rows());
  for (Eigen::Index d = 0; d < doc_vecs.rows(); ++d) {
    t.theta_hat.row(d) = similarity_row(doc_vecs.row(d).transpose(), topics.vecs, tau, topics.active).transpose();
    t.row_of.emplace(doc_ids[static_cast<std::size_t>(d)], d);
  }
  return t;
}

inline AlignmentTargets build_targets(const Corpus& corpus, const std::vector<RefinedTopic>& refined, int K,
                                      const EncoderProvider& provider, const EmbeddingTable& table, double tau) {
  std::vector<std::string> ids;
  for (const auto& d : corpus.docs) ids.push_back(d.id);
  return build_targets(document_matrix(corpus, provider, table), ids, topic_matrix(refined, K, provider, table), tau);
}

}  // namespace xtm
