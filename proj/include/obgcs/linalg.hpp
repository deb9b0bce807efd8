#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace obgcs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct PowerIterationOptions {
  int min_iterations = 30;
  int max_iterations = 1000;
  double tolerance = 1e-8;
};

namespace detail {

// Deterministic start vector: all ones plus a ramp so it is not orthogonal to
// the top singular vector of structured matrices (e.g. alternating signs).
inline Vec power_start(Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7) / 7.0;
  return v / v.norm();
}

}  // namespace detail

/// Largest singular value of `a` by power iteration on a^T a.
inline double spectral_norm(const Mat& a, const PowerIterationOptions& opt = {}) {
  if (a.size() == 0) return 0.0;
  Vec v = detail::power_start(a.cols());
  double prev = 0.0;
  double est = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vec w = a.transpose() * (a * v);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    est = std::sqrt(wn);
    if (it + 1 >= opt.min_iterations && std::abs(est - prev) <= opt.tolerance * std::max(1.0, est)) break;
    prev = est;
  }
  return (a * v).norm();
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|) by power iteration.
inline double symmetric_spectral_norm(const Mat& s, const PowerIterationOptions& opt = {}) {
  if (s.size() == 0) return 0.0;
  Vec v = detail::power_start(s.cols());
  double prev = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vec w = s * (s * v);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    const double est = std::sqrt(wn);
    if (it + 1 >= opt.min_iterations && std::abs(est - prev) <= opt.tolerance * std::max(1.0, est)) break;
    prev = est;
  }
  return (s * v).norm();
}

inline double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(values.begin(), mid);
  return 0.5 * (lo + hi);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace obgcs
