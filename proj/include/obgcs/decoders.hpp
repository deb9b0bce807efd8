#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "obgcs/errors.hpp"
#include "obgcs/generator.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/measurement.hpp"
#include "obgcs/random.hpp"

namespace obgcs {

enum class LsMode { constrained, lagrangian };

/// fixed: z <- z - t grad f with constant t.
/// backtracking: Armijo-type sufficient decrease on the (projected) step,
/// halving t on failure and growing it by 1.25 after each accepted step.
enum class StepRule { fixed, backtracking };

struct LsDecoderConfig {
  LsMode mode = LsMode::lagrangian;
  double radius = 1.0;    // constrained mode: z in B_2^k(radius)
  double lambda = 0.001;  // lagrangian mode: + lambda ||z||^2
  int restarts = 10;
  int steps_per_restart = 1000;
  StepRule step_rule = StepRule::backtracking;
  // Fixed rule: defaults to 0.1 / L^2 with L the generator Lipschitz bound.
  // Backtracking: initial trial step, defaults to 1.
  std::optional<double> step_size;
  std::uint64_t seed = 0;
  double init_scale = 1.0;

  /// lambda = 0.001, 10 restarts x 1000 steps.
  static LsDecoderConfig default_protocol() { return LsDecoderConfig{}; }

  void validate() const {
    if (mode == LsMode::constrained && !(radius > 0.0)) throw InvalidArgument("constrained mode needs radius > 0");
    if (mode == LsMode::lagrangian && !(lambda >= 0.0)) throw InvalidArgument("lagrangian mode needs lambda >= 0");
    if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
    if (steps_per_restart < 1) throw InvalidArgument("steps_per_restart must be >= 1");
    if (step_size && !(*step_size > 0.0)) throw InvalidArgument("step_size must be positive");
    if (!(init_scale > 0.0)) throw InvalidArgument("init_scale must be positive");
  }
};

struct DecoderResult {
  Vec z_hat;
  Vec x_hat;
  double objective = 0.0;
  std::vector<double> loss_trace;  // loss at the start and after every step of the chosen restart
  int restart_index = 0;
  int iterations = 0;
};

namespace detail {

inline void check_shapes(const BinaryObservation& obs, const MeasurementEnsemble& ens) {
  if (obs.y.size() != ens.m())
    throw ShapeError("observation has " + std::to_string(obs.y.size()) + " measurements, ensemble has " +
                     std::to_string(ens.m()));
}

// f(x) = ||y - A x||^2 / (2m) through the sufficient statistics
// S = A^T A / m, b = A^T y / m, c0 = ||y||^2 / (2m).
struct LeastSquaresData {
  Mat gram;
  Vec corr;
  double c0 = 0.0;

  LeastSquaresData(const Mat& a, const Vec& y) {
    const double m = static_cast<double>(a.rows());
    gram = Mat(a.cols(), a.cols());
    gram.setZero();
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / m);
    gram = gram.selfadjointView<Eigen::Lower>();
    corr = a.transpose() * y / m;
    c0 = y.squaredNorm() / (2.0 * m);
  }

  double loss(const Vec& x, Vec* grad_x) const {
    Vec sx = gram * x;
    if (grad_x) *grad_x = sx - corr;
    return c0 - corr.dot(x) + 0.5 * x.dot(sx);
  }
};

}  // namespace detail

/// Objective of the least-squares latent problem evaluated directly from (y, A, G, z).
inline double ls_objective(const BinaryObservation& obs, const MeasurementEnsemble& ens, const GeneratorNetwork& net,
                           const LsDecoderConfig& cfg, const Vec& z) {
  detail::check_shapes(obs, ens);
  const Vec r = obs.y - ens.A * net.forward(z);
  double f = r.squaredNorm() / (2.0 * static_cast<double>(ens.m()));
  if (cfg.mode == LsMode::lagrangian) f += cfg.lambda * z.squaredNorm();
  return f;
}

/// Least-squares latent decoder: argmin_z (1/2m)||y - A G(z)||^2 over the
/// ball (constrained) or with + lambda ||z||^2 (lagrangian), by multi-restart
/// gradient descent. Returns the restart with the smallest final objective,
/// ties going to the lowest restart index.
inline DecoderResult ls_decode(const BinaryObservation& obs, const MeasurementEnsemble& ens,
                               const GeneratorNetwork& net, const LsDecoderConfig& cfg) {
  cfg.validate();
  detail::check_shapes(obs, ens);
  if (net.output_dim() != ens.n())
    throw ShapeError("generator output " + std::to_string(net.output_dim()) + " does not match ensemble n = " +
                     std::to_string(ens.n()));
  const detail::LeastSquaresData data(ens.A, obs.y);
  const auto k = net.input_dim();
  const bool lagrangian = cfg.mode == LsMode::lagrangian;

  auto project = [&](Vec& z) {
    if (cfg.mode != LsMode::constrained) return;
    const double nz = z.norm();
    if (nz > cfg.radius) z *= cfg.radius / nz;
  };
  auto objective = [&](const Vec& z, Vec* grad) {
    ForwardTape tape;
    const Vec x = net.forward(z, grad ? &tape : nullptr);
    Vec gx;
    double f = data.loss(x, grad ? &gx : nullptr);
    if (lagrangian) f += cfg.lambda * z.squaredNorm();
    if (grad) {
      *grad = net.vjp(tape, gx);
      if (lagrangian) *grad += 2.0 * cfg.lambda * z;
    }
    return f;
  };

  const double lip = net.lipschitz_bound();
  const double default_fixed = 0.1 / std::max(lip * lip, std::numeric_limits<double>::min());
  const double step0 = cfg.step_size.value_or(cfg.step_rule == StepRule::fixed ? default_fixed : 1.0);

  DecoderResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng = make_rng(cfg.seed, Stream::restart, static_cast<std::uint64_t>(r));
    Vec z = gaussian_vector(rng, k, cfg.init_scale);
    project(z);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps_per_restart) + 1);
    Vec grad;
    double f = objective(z, &grad);
    if (!std::isfinite(f)) throw DivergenceError(r, 0, "ls_decode: non-finite initial loss in restart " + std::to_string(r));
    trace.push_back(f);
    double t = step0;
    for (int s = 1; s <= cfg.steps_per_restart; ++s) {
      if (cfg.step_rule == StepRule::fixed) {
        z -= t * grad;
        project(z);
        f = objective(z, &grad);
        if (!std::isfinite(f) || !z.allFinite())
          throw DivergenceError(r, s,
                                "ls_decode: loss diverged in restart " + std::to_string(r) + " at step " +
                                    std::to_string(s) + " (step size too large?)");
      } else {
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
          Vec cand = z - t * grad;
          project(cand);
          const Vec d = cand - z;
          const double fc = objective(cand, nullptr);
          if (std::isfinite(fc) && fc <= f + grad.dot(d) + d.squaredNorm() / (2.0 * t)) {
            z = std::move(cand);
            accepted = true;
            break;
          }
          t *= 0.5;
        }
        if (accepted) {
          f = objective(z, &grad);
          t *= 1.25;
        }
        if (!std::isfinite(f))
          throw DivergenceError(r, s,
                                "ls_decode: non-finite loss in restart " + std::to_string(r) + " at step " +
                                    std::to_string(s));
      }
      trace.push_back(f);
    }
    const double direct = ls_objective(obs, ens, net, cfg, z);
    if (direct < best_obj) {
      best_obj = direct;
      best.z_hat = z;
      best.loss_trace = std::move(trace);
      best.restart_index = r;
      best.iterations = cfg.steps_per_restart;
    }
  }
  best.x_hat = net.forward(best.z_hat);
  best.objective = best_obj;
  return best;
}

/// Keeps the s largest-magnitude entries; ties go to the lower index.
inline Vec hard_threshold(const Vec& x, Eigen::Index s) {
  if (s < 1 || s > x.size()) throw InvalidArgument("hard_threshold: need 1 <= s <= n");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(x[a]) > std::abs(x[b]); });
  Vec out = Vec::Zero(x.size());
  for (Eigen::Index i = 0; i < s; ++i) out[idx[static_cast<std::size_t>(i)]] = x[idx[static_cast<std::size_t>(i)]];
  return out;
}

/// Binary iterative hard thresholding:
///   x <- H_s(x + (step/m) A^T (y - sign(A x))), then x <- x / ||x||.
/// Starts from the normalized H_s(A^T y / m). Output is s-sparse with unit norm.
inline Vec biht_decode(const BinaryObservation& obs, const MeasurementEnsemble& ens, Eigen::Index sparsity, int iters,
                       double step = 1.0) {
  detail::check_shapes(obs, ens);
  if (sparsity < 1 || sparsity > ens.n()) throw InvalidArgument("biht_decode: need 1 <= s <= n");
  if (iters < 0) throw InvalidArgument("biht_decode: iters must be >= 0");
  const double m = static_cast<double>(ens.m());
  auto unit = [&](Vec v) {
    const double nv = v.norm();
    if (nv == 0.0) {
      v.setZero();
      v[0] = 1.0;
      return v;
    }
    return Vec(v / nv);
  };
  Vec x = unit(hard_threshold(ens.A.transpose() * obs.y / m, sparsity));
  for (int it = 0; it < iters; ++it) {
    const Vec ax = ens.A * x;
    Vec resid(ens.m());
    for (Eigen::Index i = 0; i < ens.m(); ++i) resid[i] = obs.y[i] - sign_pos(ax[i]);
    Vec cand = hard_threshold(x + (step / m) * (ens.A.transpose() * resid), sparsity);
    if (cand.norm() == 0.0) break;
    x = cand / cand.norm();
  }
  return x;
}

/// Euclidean projection onto {x : ||x||_1 <= radius} (sort-based simplex projection).
inline Vec project_l1_ball(const Vec& v, double radius) {
  if (!(radius > 0.0)) throw InvalidArgument("project_l1_ball: radius must be positive");
  if (v.lpNorm<1>() <= radius) return v;
  std::vector<double> u(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - radius) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] >= 0.0 ? a : -a;
  }
  return out;
}

/// Euclidean projection onto {||x||_1 <= s} intersected with {||x||_2 <= 1}.
/// The minimizer is S_theta(v) / max(1, ||S_theta(v)||_2) for the smallest
/// theta >= 0 meeting the l1 constraint; theta is found by bisection.
inline Vec project_l1_l2_intersection(const Vec& v, double s_ell1) {
  if (!(s_ell1 > 0.0)) throw InvalidArgument("project_l1_l2_intersection: radius must be positive");
  auto candidate = [&](double theta) {
    Vec x = (v.cwiseAbs().array() - theta).max(0.0).matrix().cwiseProduct(v.cwiseSign());
    const double n2 = x.norm();
    if (n2 > 1.0) x /= n2;
    return x;
  };
  Vec x = candidate(0.0);
  if (x.lpNorm<1>() <= s_ell1) return x;
  double lo = 0.0, hi = v.cwiseAbs().maxCoeff();
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (candidate(mid).lpNorm<1>() > s_ell1 ? lo : hi) = mid;
  }
  x = candidate(hi);
  const double l1 = x.lpNorm<1>();
  if (l1 > s_ell1) x *= s_ell1 / l1;
  return x;
}

/// Convex baseline: maximize <y, A x>/m subject to ||x||_1 <= s, ||x||_2 <= 1,
/// by projected gradient ascent from x = 0. Returns the best feasible iterate.
inline Vec pv_convex_decode(const BinaryObservation& obs, const MeasurementEnsemble& ens, double s_ell1, int iters,
                            double step = 1.0) {
  detail::check_shapes(obs, ens);
  if (!(s_ell1 > 0.0)) throw InvalidArgument("pv_convex_decode: s_ell1 must be positive");
  if (!(step > 0.0)) throw InvalidArgument("pv_convex_decode: step must be positive");
  const Vec grad = ens.A.transpose() * obs.y / static_cast<double>(ens.m());
  Vec x = Vec::Zero(ens.n());
  Vec best = x;
  double best_obj = 0.0;
  for (int it = 0; it < iters; ++it) {
    x = project_l1_l2_intersection(x + step * grad, s_ell1);
    const double obj = grad.dot(x);
    if (obj > best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

struct ErrorMetrics {
  double l2_err = 0.0;                // ||x_hat - c x*||
  double cosine = 0.0;                // <x_hat, x*> / (||x_hat|| ||x*||)
  double per_pixel = 0.0;             // l2_err / sqrt(n)
  double per_pixel_normalized = 0.0;  // ||x_hat/||x_hat|| - x*/||x*|| || / sqrt(n)
};

inline ErrorMetrics estimation_error(const Vec& x_hat, const Vec& x_star, double sigma, double q) {
  if (x_hat.size() != x_star.size()) throw ShapeError("estimation_error: dimension mismatch");
  const double nh = x_hat.norm();
  const double ns = x_star.norm();
  if (nh == 0.0 || ns == 0.0) throw DegenerateError("estimation_error: cosine undefined for a zero vector");
  const double c = scaling_constant(sigma, q);
  const double rn = std::sqrt(static_cast<double>(x_hat.size()));
  ErrorMetrics e;
  e.l2_err = (x_hat - c * x_star).norm();
  e.cosine = std::clamp(x_hat.dot(x_star) / (nh * ns), -1.0, 1.0);
  e.per_pixel = e.l2_err / rn;
  e.per_pixel_normalized = (x_hat / nh - x_star / ns).norm() / rn;
  return e;
}

}  // namespace obgcs
