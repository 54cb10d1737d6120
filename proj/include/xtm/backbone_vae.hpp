#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xtm/corpus_io.hpp"
#include "xtm/error.hpp"
#include "xtm/math.hpp"
#include "xtm/optimizer.hpp"

namespace xtm {

struct TrainConfig {
  int topics = 20;
  int hidden_dim = 200;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  int top_n = 15;
  int top_m = 15;
  double lambda_mmd = 20000.0;
  double lambda_qa = 200.0;
  double tau = 0.5;
  int rounds = 5;
  int refine_every = 8;
  std::string kernel = "median";

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::BadConfig, what); };
    if (topics < 2) bad("topics must be >= 2");
    if (hidden_dim < 1) bad("hidden_dim must be >= 1");
    if (epochs < 0) bad("epochs must be >= 0");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) bad("learning rate must be > 0");
    if (top_n < 1) bad("top_n must be >= 1");
    if (top_m < 1) bad("top_m must be >= 1");
    if (!(tau > 0.0)) bad("tau must be > 0");
    if (rounds < 1) bad("rounds must be >= 1");
    if (refine_every < 1) bad("refine_every must be >= 1");
    if (lambda_mmd < 0.0 || lambda_qa < 0.0) bad("loss weights must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

struct InputLayer {
  Mat weight;  // H x |V|
  Vec bias;    // H
};

struct SharedStack {
  Mat hidden_w;  // H x H
  Vec hidden_b;
  Mat mu_w;      // K x H
  Vec mu_b;
  Mat logvar_w;  // K x H
  Vec logvar_b;
};

/// All trainable tensors. Also used as the gradient container.
struct Params {
  InputLayer input[2];
  SharedStack shared;
  Mat beta_logits[2];  // |V_l| x K; column softmax gives the topic-word distributions
};

template <class A, class B, class F>
void for_each_tensor_impl(A& a, B& b, F&& f) {
  auto visit = [&](auto& x, auto& y) { f(x.data(), y.data(), static_cast<long>(x.size())); };
  for (int l = 0; l < 2; ++l) {
    visit(a.input[l].weight, b.input[l].weight);
    visit(a.input[l].bias, b.input[l].bias);
  }
  visit(a.shared.hidden_w, b.shared.hidden_w);
  visit(a.shared.hidden_b, b.shared.hidden_b);
  visit(a.shared.mu_w, b.shared.mu_w);
  visit(a.shared.mu_b, b.shared.mu_b);
  visit(a.shared.logvar_w, b.shared.logvar_w);
  visit(a.shared.logvar_b, b.shared.logvar_b);
  for (int l = 0; l < 2; ++l) visit(a.beta_logits[l], b.beta_logits[l]);
}

template <class F>
void for_each_tensor(Params& a, const Params& b, F&& f) {
  for_each_tensor_impl(a, b, std::forward<F>(f));
}

inline Params zeros_like(const Params& p) {
  Params z;
  for (int l = 0; l < 2; ++l) {
    z.input[l].weight = Mat::Zero(p.input[l].weight.rows(), p.input[l].weight.cols());
    z.input[l].bias = Vec::Zero(p.input[l].bias.size());
    z.beta_logits[l] = Mat::Zero(p.beta_logits[l].rows(), p.beta_logits[l].cols());
  }
  const auto& s = p.shared;
  z.shared = {Mat::Zero(s.hidden_w.rows(), s.hidden_w.cols()), Vec::Zero(s.hidden_b.size()),
              Mat::Zero(s.mu_w.rows(), s.mu_w.cols()),         Vec::Zero(s.mu_b.size()),
              Mat::Zero(s.logvar_w.rows(), s.logvar_w.cols()), Vec::Zero(s.logvar_b.size())};
  return z;
}

inline bool all_finite(const Params& p) {
  bool ok = true;
  for_each_tensor_impl(p, p, [&](const double* a, const double*, long n) {
    for (long i = 0; i < n && ok; ++i) ok = std::isfinite(a[i]);
  });
  return ok;
}

/// a += scale * b
inline void axpy(Params& a, const Params& b, double scale) {
  for_each_tensor(a, b, [scale](double* x, const double* y, long n) {
    for (long i = 0; i < n; ++i) x[i] += scale * y[i];
  });
}

struct ModelState {
  TrainConfig config;
  Params params;
  std::uint64_t seed = 0;

  int topics() const { return static_cast<int>(params.beta_logits[0].cols()); }
  int hidden() const { return static_cast<int>(params.shared.hidden_b.size()); }
  std::size_t vocab_size(Lang l) const { return static_cast<std::size_t>(params.beta_logits[lang_index(l)].rows()); }
};

inline constexpr double kLogvarClamp = 10.0;

namespace detail {

inline void xavier(Mat& m, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
}

}  // namespace detail

inline ModelState init_model(std::size_t vocab1, std::size_t vocab2, const TrainConfig& config) {
  config.validate();
  const auto H = config.hidden_dim;
  const auto K = config.topics;
  std::mt19937_64 rng(config.seed);
  ModelState s;
  s.config = config;
  s.seed = config.seed;
  const std::size_t sizes[2] = {vocab1, vocab2};
  for (int l = 0; l < 2; ++l) {
    s.params.input[l].weight = Mat(H, static_cast<Eigen::Index>(sizes[l]));
    detail::xavier(s.params.input[l].weight, rng);
    s.params.input[l].bias = Vec::Zero(H);
  }
  auto& sh = s.params.shared;
  sh.hidden_w = Mat(H, H);
  sh.mu_w = Mat(K, H);
  sh.logvar_w = Mat(K, H);
  detail::xavier(sh.hidden_w, rng);
  detail::xavier(sh.mu_w, rng);
  detail::xavier(sh.logvar_w, rng);
  sh.hidden_b = Vec::Zero(H);
  sh.mu_b = Vec::Zero(K);
  sh.logvar_b = Vec::Zero(K);
  for (int l = 0; l < 2; ++l) {
    s.params.beta_logits[l] = Mat(static_cast<Eigen::Index>(sizes[l]), K);
    detail::xavier(s.params.beta_logits[l], rng);
  }
  return s;
}

inline ModelState init_model(const Corpus& corpus, const TrainConfig& config) {
  return init_model(corpus.vocab1.size(), corpus.vocab2.size(), config);
}

/// Intermediate activations for one document, kept for the backward pass.
struct DocForward {
  Lang lang = Lang::L1;
  double length = 0.0;
  Vec a1, h1, a2, h2;
  Vec mu, logvar_raw, logvar;
  Vec noise, z, theta;
  Vec eta, probs;  // decoder logits and softmax(beta * theta)
};

struct Posterior {
  Vec mu;
  Vec logvar;
};

inline DocForward encoder_forward(const BowDocument& doc, const ModelState& s) {
  const auto& in = s.params.input[lang_index(doc.lang)];
  const auto& sh = s.params.shared;
  DocForward f;
  f.lang = doc.lang;
  f.length = static_cast<double>(doc.total_count());
  f.a1 = in.bias;
  for (const auto& e : doc.bow) f.a1 += in.weight.col(e.index) * (static_cast<double>(e.count) / f.length);
  f.h1 = softplus(f.a1);
  f.a2 = sh.hidden_w * f.h1 + sh.hidden_b;
  f.h2 = softplus(f.a2);
  f.mu = sh.mu_w * f.h2 + sh.mu_b;
  f.logvar_raw = sh.logvar_w * f.h2 + sh.logvar_b;
  f.logvar = f.logvar_raw.cwiseMax(-kLogvarClamp).cwiseMin(kLogvarClamp);
  if (!f.mu.allFinite() || !f.logvar.allFinite())
    throw Error(Errc::NonFiniteActivation, "encoder output for document " + doc.id);
  return f;
}

/// Posterior parameters (mu, clamped log-variance) for a document; routed to
/// the input layer of the document's own language.
inline Posterior encode(const BowDocument& doc, const ModelState& s) {
  auto f = encoder_forward(doc, s);
  return {std::move(f.mu), std::move(f.logvar)};
}

inline Vec reparameterize(const Vec& mu, const Vec& logvar, const Vec& noise) {
  return mu.array() + (0.5 * logvar.array()).exp() * noise.array();
}

inline Vec theta_from_z(const Vec& z) { return softmax(z); }

/// -x^T log(softmax(beta * theta) + eps) with raw counts.
inline double recon_loss(const BowDocument& doc, const Vec& probs) {
  double loss = 0.0;
  for (const auto& e : doc.bow) loss -= static_cast<double>(e.count) * std::log(probs[e.index] + kLogFloor);
  return loss;
}

inline Vec decoder_probs(const Vec& theta, const ModelState& s, Lang lang) {
  return softmax(s.params.beta_logits[lang_index(lang)] * theta);
}

inline double recon_loss(const BowDocument& doc, const Vec& theta, const ModelState& s) {
  return recon_loss(doc, decoder_probs(theta, s, doc.lang));
}

/// KL(N(mu, diag(exp(logvar))) || N(0, I)).
inline double kl_gaussian(const Vec& mu, const Vec& logvar) {
  return 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum();
}

inline DocForward doc_forward(const BowDocument& doc, const ModelState& s, const Vec& noise) {
  auto f = encoder_forward(doc, s);
  f.noise = noise;
  f.z = reparameterize(f.mu, f.logvar, noise);
  f.theta = theta_from_z(f.z);
  f.eta = s.params.beta_logits[lang_index(doc.lang)] * f.theta;
  f.probs = softmax(f.eta);
  return f;
}

/// Posterior-mean topic proportions softmax(mu), used for inference.
inline Vec infer_theta(const BowDocument& doc, const ModelState& s) { return softmax(encode(doc, s).mu); }

inline Mat infer_thetas(std::span<const BowDocument> docs, const ModelState& s) {
  Mat out(static_cast<Eigen::Index>(docs.size()), s.topics());
  for (std::size_t d = 0; d < docs.size(); ++d) out.row(static_cast<Eigen::Index>(d)) = infer_theta(docs[d], s).transpose();
  return out;
}

/// Accumulates weight * d(recon + KL)/dparams plus the externally supplied
/// dL/dtheta into `grad`.
inline void doc_backward(const BowDocument& doc, const DocForward& f, const ModelState& s, double weight,
                         const Vec* extra_grad_theta, Params& grad) {
  const int l = lang_index(doc.lang);
  const auto& beta = s.params.beta_logits[l];
  const auto& sh = s.params.shared;

  // d recon / d eta = p * S - x * p / (p + eps), S = sum_v x_v p_v / (p_v + eps)
  double S = 0.0;
  for (const auto& e : doc.bow) S += e.count * f.probs[e.index] / (f.probs[e.index] + kLogFloor);
  Vec g_eta = weight * S * f.probs;
  for (const auto& e : doc.bow)
    g_eta[e.index] -= weight * e.count * f.probs[e.index] / (f.probs[e.index] + kLogFloor);

  grad.beta_logits[l].noalias() += g_eta * f.theta.transpose();
  Vec g_theta = beta.transpose() * g_eta;
  if (extra_grad_theta != nullptr) g_theta += *extra_grad_theta;

  const Vec g_z = softmax_backward(f.theta, g_theta);
  const Vec g_mu = g_z + weight * f.mu;
  Vec g_lv = g_z.array() * f.noise.array() * 0.5 * (0.5 * f.logvar.array()).exp() +
             weight * 0.5 * (f.logvar.array().exp() - 1.0);
  for (Eigen::Index k = 0; k < g_lv.size(); ++k)
    if (f.logvar_raw[k] < -kLogvarClamp || f.logvar_raw[k] > kLogvarClamp) g_lv[k] = 0.0;

  grad.shared.mu_w.noalias() += g_mu * f.h2.transpose();
  grad.shared.mu_b += g_mu;
  grad.shared.logvar_w.noalias() += g_lv * f.h2.transpose();
  grad.shared.logvar_b += g_lv;

  const Vec g_h2 = sh.mu_w.transpose() * g_mu + sh.logvar_w.transpose() * g_lv;
  const Vec g_a2 = g_h2.cwiseProduct(sigmoid(f.a2));
  grad.shared.hidden_w.noalias() += g_a2 * f.h1.transpose();
  grad.shared.hidden_b += g_a2;

  const Vec g_h1 = sh.hidden_w.transpose() * g_a2;
  const Vec g_a1 = g_h1.cwiseProduct(sigmoid(f.a1));
  auto& in = grad.input[l];
  for (const auto& e : doc.bow) in.weight.col(e.index) += g_a1 * (static_cast<double>(e.count) / f.length);
  in.bias += g_a1;
}

/// Loss attached to each document's theta: returns the document's term and
/// writes dterm/dtheta into `grad_theta`.
using ThetaTerm = std::function<double(std::size_t pos_in_batch, const Vec& theta, Vec& grad_theta)>;

struct BatchLoss {
  double phase1 = 0.0;      // mean over the batch of recon + KL
  double theta_term = 0.0;  // mean over the batch of the theta term
};

using Batch = std::span<const BowDocument* const>;

/// L_TM over a batch with caller-supplied noise (one row per document).
/// Gradients of `phase1 + theta_weight * theta_term` are added into `grad`.
inline BatchLoss tm_batch_loss(Batch batch, const Mat& noise, const ModelState& s, Params& grad,
                               const ThetaTerm* theta_term = nullptr, double theta_weight = 0.0) {
  BatchLoss out;
  if (batch.empty()) return out;
  const double w = 1.0 / static_cast<double>(batch.size());
  Vec g_theta(s.topics());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& doc = *batch[i];
    const auto f = doc_forward(doc, s, noise.row(static_cast<Eigen::Index>(i)).transpose());
    out.phase1 += w * (recon_loss(doc, f.probs) + kl_gaussian(f.mu, f.logvar));
    const Vec* extra = nullptr;
    if (theta_term != nullptr) {
      g_theta.setZero();
      out.theta_term += w * (*theta_term)(i, f.theta, g_theta);
      g_theta *= theta_weight * w;
      extra = &g_theta;
    }
    doc_backward(doc, f, s, w, extra, grad);
  }
  return out;
}

/// Hook for the Phase-1 objective so other backbones can be plugged in.
using Phase1Loss = std::function<BatchLoss(Batch, const Mat& noise, const ModelState&, Params& grad,
                                           const ThetaTerm*, double theta_weight)>;

inline Phase1Loss default_phase1_loss() {
  return [](Batch b, const Mat& n, const ModelState& s, Params& g, const ThetaTerm* t, double w) {
    return tm_batch_loss(b, n, s, g, t, w);
  };
}

inline Mat draw_noise(std::size_t rows, int K, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat n(static_cast<Eigen::Index>(rows), K);
  for (Eigen::Index i = 0; i < n.size(); ++i) n.data()[i] = normal(rng);
  return n;
}

/// Deterministic (seeded) shuffled batches of document indices.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n_docs, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n_docs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n_docs; i += static_cast<std::size_t>(batch_size))
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n_docs, i + batch_size)));
  return batches;
}

struct Phase1Log {
  std::vector<double> epoch_loss;  // mean per-batch L_TM per epoch
};

/// Phase-1 training with the adaptive optimizer. `on_step` (optional) is
/// called after every parameter update.
inline ModelState train_phase1(const Corpus& corpus, const TrainConfig& config, Phase1Log* log = nullptr,
                               const std::function<void(const ModelState&)>& on_step = {}) {
  ModelState s = init_model(corpus, config);
  if (config.epochs == 0) return s;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam<Params> opt(s.params, AdamOptions{.lr = config.learning_rate});
  std::vector<const BowDocument*> batch_docs;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(corpus.docs.size(), config.batch_size, rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      batch_docs.clear();
      for (auto d : batches[b]) batch_docs.push_back(&corpus.docs[d]);
      const Mat noise = draw_noise(batch_docs.size(), config.topics, rng);
      Params grad = zeros_like(s.params);
      const auto loss = tm_batch_loss(batch_docs, noise, s, grad);
      if (!std::isfinite(loss.phase1) || !all_finite(grad))
        throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      opt.step(s.params, grad);
      total += loss.phase1;
      if (on_step) on_step(s);
    }
    if (log != nullptr) log->epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  return s;
}

/// beta_k for one language: softmax over the vocabulary of logit column k.
inline Vec topic_word_dist(const ModelState& s, Lang lang, int k) {
  return softmax(s.params.beta_logits[lang_index(lang)].col(k));
}

/// Indices of the N most probable words, ties broken by ascending index.
inline std::vector<std::size_t> top_word_indices(const Vec& dist, std::size_t n) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(dist.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (dist[static_cast<Eigen::Index>(a)] != dist[static_cast<Eigen::Index>(b)])
                        return dist[static_cast<Eigen::Index>(a)] > dist[static_cast<Eigen::Index>(b)];
                      return a < b;
                    });
  idx.resize(n);
  return idx;
}

inline std::vector<std::size_t> top_word_indices(const ModelState& s, Lang lang, int k, std::size_t n) {
  return top_word_indices(topic_word_dist(s, lang, k), n);
}

inline std::vector<std::string> top_words(const ModelState& s, const Vocabulary& vocab, Lang lang, int k,
                                          std::size_t n) {
  std::vector<std::string> out;
  for (auto i : top_word_indices(s, lang, k, n)) out.push_back(vocab.token(i));
  return out;
}

}  // namespace xtm
