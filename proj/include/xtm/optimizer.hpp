#pragma once

#include <cmath>
#include <concepts>

namespace xtm {

/// A parameter pack that can be walked tensor by tensor in a fixed order.
/// `for_each_tensor(a, b, f)` calls `f(a_data, b_data, size)` per tensor.
template <class P>
concept TensorPack = requires(P& a, const P& b) {
  { zeros_like(b) } -> std::same_as<P>;
  for_each_tensor(a, b, [](double*, const double*, long) {});
};

struct AdamOptions {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Momentum plus squared-gradient normalization, bias corrected.
template <TensorPack P>
class Adam {
 public:
  Adam(const P& like, AdamOptions opts) : m_(zeros_like(like)), v_(zeros_like(like)), opts_(opts) {}

  void step(P& params, const P& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, t_);
    const double c2 = 1.0 - std::pow(opts_.beta2, t_);
    for_each_tensor(m_, grad, [&](double* m, const double* g, long n) {
      for (long i = 0; i < n; ++i) m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
    });
    for_each_tensor(v_, grad, [&](double* v, const double* g, long n) {
      for (long i = 0; i < n; ++i) v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
    });
    // params -= lr * mhat / (sqrt(vhat) + eps), walked twice to pair m and v.
    P delta = zeros_like(params);
    for_each_tensor(delta, m_, [&](double* d, const double* m, long n) {
      for (long i = 0; i < n; ++i) d[i] = m[i] / c1;
    });
    for_each_tensor(delta, v_, [&](double* d, const double* v, long n) {
      for (long i = 0; i < n; ++i) d[i] = opts_.lr * d[i] / (std::sqrt(v[i] / c2) + opts_.eps);
    });
    for_each_tensor(params, delta, [](double* p, const double* d, long n) {
      for (long i = 0; i < n; ++i) p[i] -= d[i];
    });
  }

  long steps() const noexcept { return t_; }

 private:
  P m_;
  P v_;
  AdamOptions opts_;
  long t_ = 0;
};

}  // namespace xtm
