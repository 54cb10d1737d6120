#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace xtm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kLogFloor = 1e-12;

/// Max-subtracted softmax; shift invariant.
inline Vec softmax(const Vec& z) {
  Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vec softplus(const Vec& x) { return x.unaryExpr([](double v) { return softplus(v); }); }
inline Vec sigmoid(const Vec& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

/// Back-propagates `g` (dL/dsoftmax) through p = softmax(z).
inline Vec softmax_backward(const Vec& p, const Vec& g) { return p.array() * (g.array() - p.dot(g)); }

/// KL(p || q) with entries of p floored at kLogFloor inside the log and the
/// convention 0 * log 0 = 0.
inline double kl_divergence(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    s += p[i] * (std::log(std::max(p[i], kLogFloor)) - std::log(std::max(q[i], kLogFloor)));
  }
  return s;
}

inline double jensen_shannon(const Vec& p, const Vec& q) {
  const Vec m = 0.5 * (p + q);
  return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

/// Median with the two middle values averaged for even sizes.
inline double median(std::vector<double> xs) {
  const std::size_t n = xs.size();
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(n / 2), xs.end());
  const double hi = xs[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

}  // namespace xtm
