#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "obgcs/errors.hpp"
#include "obgcs/generator.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/measurement.hpp"
#include "obgcs/random.hpp"

namespace obgcs {

// ---------------------------------------------------------------------------
// epsilon-nets of B_2^k(r)
// ---------------------------------------------------------------------------

struct EpsNet {
  std::vector<Vec> points;
  double epsilon = 0.0;
  double radius = 0.0;
  bool lattice = true;  // false for the random greedy construction

  std::size_t size() const noexcept { return points.size(); }
  Eigen::Index dim() const noexcept { return points.empty() ? 0 : points.front().size(); }
};

/// Upper bound k log(4r/eps) on log|N| for some eps-net of the ball.
inline double eps_net_log_cardinality_bound(Eigen::Index k, double r, double eps) {
  return static_cast<double>(k) * std::log(4.0 * r / eps);
}

inline constexpr std::size_t kDefaultLatticeBudget = 2'000'000;

/// Cubic lattice of pitch 2 eps/sqrt(k) (covering radius eps), restricted to
/// points whose Voronoi cell meets the ball, with outside points pulled
/// radially onto the sphere of radius r. Radial projection onto a convex set
/// does not increase distances to points of the ball, so coverage survives.
inline EpsNet build_eps_net(Eigen::Index k, double r, double eps, std::size_t budget = kDefaultLatticeBudget) {
  if (k < 1) throw InvalidArgument("build_eps_net: k must be >= 1");
  if (!(r > 0.0) || !(eps > 0.0) || eps > 2.0 * r) throw InvalidArgument("build_eps_net: need 0 < eps <= 2r");
  // The origin alone is within r <= eps of every point of the ball.
  if (eps >= r) return EpsNet{{Vec::Zero(k)}, eps, r, true};
  const double pitch = 2.0 * eps / std::sqrt(static_cast<double>(k));
  const double reach = r + eps;
  const auto half = static_cast<long long>(std::ceil(reach / pitch));
  const double side = static_cast<double>(2 * half + 1);
  if (k > 8 || std::pow(side, static_cast<double>(k)) > 20.0 * static_cast<double>(budget))
    throw CapacityError("build_eps_net: lattice enumeration for k = " + std::to_string(k) +
                        " exceeds the budget; use build_random_eps_net instead");

  EpsNet net{{}, eps, r, true};
  std::vector<long long> idx(static_cast<std::size_t>(k), -half);
  for (;;) {
    Vec p(k);
    for (Eigen::Index d = 0; d < k; ++d) p[d] = pitch * static_cast<double>(idx[static_cast<std::size_t>(d)]);
    const double np = p.norm();
    if (np <= reach) {
      if (np > r) p *= r / np;
      net.points.push_back(std::move(p));
      if (net.points.size() > budget)
        throw CapacityError("build_eps_net: net exceeds " + std::to_string(budget) +
                            " points; use build_random_eps_net instead");
    }
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] > half) idx[d++] = -half;
    if (d == idx.size()) break;
  }
  // Distinct lattice points on a common ray can project to the same point.
  std::sort(net.points.begin(), net.points.end(), [](const Vec& a, const Vec& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  net.points.erase(std::unique(net.points.begin(), net.points.end(), [](const Vec& a, const Vec& b) { return a == b; }),
                   net.points.end());
  return net;
}

/// Greedy net over uniform samples of the ball: a sample farther than eps/2
/// from every current point joins the net. Coverage of fresh points is then
/// certified empirically with certify_coverage().
inline EpsNet build_random_eps_net(Eigen::Index k, double r, double eps, std::uint64_t seed,
                                   std::size_t num_samples = 20000) {
  if (k < 1) throw InvalidArgument("build_random_eps_net: k must be >= 1");
  if (!(r > 0.0) || !(eps > 0.0)) throw InvalidArgument("build_random_eps_net: need r, eps > 0");
  Rng rng = make_rng(seed, Stream::net);
  EpsNet net{{}, eps, r, false};
  const double join2 = 0.25 * eps * eps;
  for (std::size_t i = 0; i < num_samples; ++i) {
    Vec p = uniform_in_ball(rng, k, r);
    bool covered = false;
    for (const auto& q : net.points)
      if ((q - p).squaredNorm() <= join2) {
        covered = true;
        break;
      }
    if (!covered) net.points.push_back(std::move(p));
  }
  return net;
}

inline double distance_to_net(const EpsNet& net, const Vec& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : net.points) best = std::min(best, (q - p).squaredNorm());
  return std::sqrt(best);
}

struct CoverageReport {
  double max_distance = 0.0;
  std::size_t tested = 0;
  std::size_t uncovered = 0;
  bool pass() const noexcept { return uncovered == 0; }
};

inline CoverageReport certify_coverage(const EpsNet& net, std::size_t num_points, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::pairs);
  CoverageReport rep;
  rep.tested = num_points;
  for (std::size_t i = 0; i < num_points; ++i) {
    const double d = distance_to_net(net, uniform_in_ball(rng, net.dim(), net.radius));
    rep.max_distance = std::max(rep.max_distance, d);
    if (d > net.epsilon) ++rep.uncovered;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// S-REC and Johnson-Lindenstrauss checks
// ---------------------------------------------------------------------------

struct SrecReport {
  double gamma = 0.0;
  double delta = 0.0;
  int pairs_tested = 0;  // pairs with ||x1 - x2|| >= 1e-9
  int violations = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
};

/// (1/m)||A(x1 - x2)||^2 and ||x1 - x2||^2 for sampled latent pairs.
struct SrecSample {
  double quad = 0.0;
  double dist2 = 0.0;
};

inline constexpr double kSrecMinDistance = 1e-9;

inline std::vector<SrecSample> sample_srec_pairs(const MeasurementEnsemble& ens, const GeneratorNetwork& net,
                                                 int num_pairs, std::uint64_t seed, double radius = 1.0) {
  if (num_pairs < 1) throw InvalidArgument("check_srec: num_pairs must be >= 1");
  if (net.output_dim() != ens.n()) throw ShapeError("check_srec: generator output does not match ensemble");
  Rng rng = make_rng(seed, Stream::pairs);
  const double m = static_cast<double>(ens.m());
  std::vector<SrecSample> out;
  out.reserve(static_cast<std::size_t>(num_pairs));
  for (int i = 0; i < num_pairs; ++i) {
    const Vec z1 = uniform_in_ball(rng, net.input_dim(), radius);
    const Vec z2 = uniform_in_ball(rng, net.input_dim(), radius);
    const Vec diff = net.forward(z1) - net.forward(z2);
    out.push_back({(ens.A * diff).squaredNorm() / m, diff.squaredNorm()});
  }
  return out;
}

inline SrecReport summarize_srec(const std::vector<SrecSample>& samples, double gamma, double delta) {
  SrecReport rep;
  rep.gamma = gamma;
  rep.delta = delta;
  for (const auto& s : samples) {
    if (s.dist2 < kSrecMinDistance * kSrecMinDistance) continue;
    ++rep.pairs_tested;
    if (s.quad < gamma * s.dist2 - delta) ++rep.violations;
    rep.min_ratio = std::min(rep.min_ratio, (s.quad + delta) / s.dist2);
  }
  return rep;
}

/// Counts pairs with (1/m)||A(x1 - x2)||^2 < gamma ||x1 - x2||^2 - delta over
/// x_i = G(z_i), z_i uniform in B_2^k(radius).
inline SrecReport check_srec(const MeasurementEnsemble& ens, const GeneratorNetwork& net, double gamma, double delta,
                             int num_pairs, std::uint64_t seed, double radius = 1.0) {
  return summarize_srec(sample_srec_pairs(ens, net, num_pairs, seed, radius), gamma, delta);
}

struct JlReport {
  double max_distortion = 0.0;  // max |ratio - 1|
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
  int pairs = 0;
  bool pass = false;
};

/// Distortion of F(t) = A Sigma^{-1/2} t / sqrt(m) on a point set, with
/// Sigma^{-1/2} realized as C^{-T} (C the Cholesky factor used to sample A),
/// so F is exactly the standard Gaussian projection Z / sqrt(m).
inline JlReport check_jl(const MeasurementEnsemble& ens, const std::vector<Vec>& points, double epsilon) {
  if (points.size() < 2) throw InvalidArgument("check_jl: need at least two points");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("check_jl: epsilon must lie in (0, 1)");
  for (const auto& p : points)
    if (p.size() != ens.n()) throw ShapeError("check_jl: point dimension does not match ensemble");
  Mat whitened = ens.cov.cholesky().triangularView<Eigen::Lower>().solve(ens.A.transpose()).transpose();
  whitened /= std::sqrt(static_cast<double>(ens.m()));
  std::vector<Vec> images;
  images.reserve(points.size());
  for (const auto& p : points) images.push_back(whitened * p);
  JlReport rep;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double d = (points[i] - points[j]).norm();
      if (d < 1e-12) continue;
      const double ratio = (images[i] - images[j]).norm() / d;
      ++rep.pairs;
      rep.min_ratio = std::min(rep.min_ratio, ratio);
      rep.max_ratio = std::max(rep.max_ratio, ratio);
      rep.max_distortion = std::max(rep.max_distortion, std::abs(ratio - 1.0));
    }
  if (rep.pairs == 0) throw DegenerateError("check_jl: all points coincide");
  rep.pass = rep.min_ratio >= 1.0 - epsilon && rep.max_ratio <= 1.0 + epsilon;
  return rep;
}

// ---------------------------------------------------------------------------
// Gaussian mean width
// ---------------------------------------------------------------------------

struct MeanWidthEstimate {
  double omega_hat = 0.0;
  double std_err = 0.0;
  int gaussians_used = 0;
  std::size_t net_size = 0;
  std::size_t directions = 0;
  double gamma_scale = 0.0;
  double bound = 0.0;        // sqrt(2k log(16 L r / (gamma eps))) + sqrt(n) eps
  double massart_bound = 0.0;  // sqrt(2 log |C|)
};

/// Monte-Carlo estimate of E max_{v in V} <g, v>, g ~ N(0, I_n).
inline MeanWidthEstimate estimate_mean_width(const std::vector<Vec>& directions, int num_gaussians,
                                             std::uint64_t seed) {
  if (directions.empty()) throw DegenerateError("estimate_mean_width: empty direction set");
  if (num_gaussians < 2) throw InvalidArgument("estimate_mean_width: need at least two gaussians");
  const auto n = directions.front().size();
  Mat v(n, static_cast<Eigen::Index>(directions.size()));
  for (std::size_t j = 0; j < directions.size(); ++j) {
    if (directions[j].size() != n) throw ShapeError("estimate_mean_width: ragged direction set");
    v.col(static_cast<Eigen::Index>(j)) = directions[j];
  }
  Rng rng = make_rng(seed, Stream::gaussians);
  CompensatedSum sum;
  CompensatedSum sum_sq;
  for (int i = 0; i < num_gaussians; ++i) {
    const Vec g = gaussian_vector(rng, n);
    const double sup = (v.transpose() * g).maxCoeff();
    sum.add(sup);
    sum_sq.add(sup * sup);
  }
  const double cnt = static_cast<double>(num_gaussians);
  const double mean = sum.value() / cnt;
  const double var = std::max(0.0, (sum_sq.value() - cnt * mean * mean) / (cnt - 1.0));
  MeanWidthEstimate est;
  est.omega_hat = mean;
  est.std_err = std::sqrt(var / cnt);
  est.gaussians_used = num_gaussians;
  est.directions = directions.size();
  est.massart_bound = std::sqrt(2.0 * std::log(static_cast<double>(directions.size())));
  return est;
}

/// gamma = max{tau, (k/m) log(L r n / k) + sqrt(log n / m)}.
inline double recovery_gamma(double tau, Eigen::Index k, Eigen::Index m, double lipschitz, double r, Eigen::Index n) {
  const double kd = static_cast<double>(k);
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  return std::max(tau, kd / md * std::log(lipschitz * r * nd / kd) + std::sqrt(std::log(nd) / md));
}

/// sqrt(2k log(16 L r / (gamma eps))) + sqrt(n) eps, with the log clamped at 0.
inline double local_mean_width_bound(Eigen::Index k, Eigen::Index n, double lipschitz, double r, double gamma,
                                     double eps) {
  const double lg = std::max(0.0, std::log(16.0 * lipschitz * r / (gamma * eps)));
  return std::sqrt(2.0 * static_cast<double>(k) * lg) + std::sqrt(static_cast<double>(n)) * eps;
}

struct LocalMeanWidthOptions {
  double radius = 1.0;
  // eps in the reference bound; the default sqrt(k/n) balances its two terms.
  std::optional<double> bound_epsilon;
};

/// Local mean width of the normalized difference cone of G around z_bar,
/// restricted to directions from an eps-net U of B_2^k(r):
///   C = {(G(u) - G(z_bar)) / ||.|| : u in U, ||G(u) - G(z_bar)|| >= gamma}.
inline MeanWidthEstimate estimate_local_mean_width(const GeneratorNetwork& net, const Vec& z_bar, double gamma_scale,
                                                   int num_gaussians, double net_epsilon, std::uint64_t seed,
                                                   const LocalMeanWidthOptions& opt = {}) {
  if (!(gamma_scale > 0.0) || !(net_epsilon > 0.0)) throw InvalidArgument("local mean width: parameters must be positive");
  const auto k = net.input_dim();
  EpsNet u = [&] {
    try {
      return build_eps_net(k, opt.radius, std::min(net_epsilon, 2.0 * opt.radius));
    } catch (const CapacityError&) {
      return build_random_eps_net(k, opt.radius, net_epsilon, seed);
    }
  }();
  const Vec center = net.forward(z_bar);
  std::vector<Vec> dirs;
  for (const auto& p : u.points) {
    Vec d = net.forward(p) - center;
    const double nd = d.norm();
    if (nd >= gamma_scale) dirs.push_back(d / nd);
  }
  if (dirs.empty())
    throw DegenerateError("local mean width: every net image lies within gamma of G(z_bar); the cone is empty");
  MeanWidthEstimate est = estimate_mean_width(dirs, num_gaussians, seed);
  est.net_size = u.size();
  est.gamma_scale = gamma_scale;
  const double eps_b =
      opt.bound_epsilon.value_or(std::sqrt(static_cast<double>(k) / static_cast<double>(net.output_dim())));
  est.bound = local_mean_width_bound(k, net.output_dim(), net.lipschitz_bound(), opt.radius, gamma_scale, eps_b);
  return est;
}

// ---------------------------------------------------------------------------
// Concentration diagnostics
// ---------------------------------------------------------------------------

struct ConcentrationReport {
  double linf_grad = 0.0;  // ||A^T y / m - c Sigma x*||_inf
  double linf_cov = 0.0;   // ||A^T A / m - Sigma||_max
  double spec_cov = 0.0;   // ||A^T A / m - Sigma||_2
  double linf_reference = 0.0;  // 4 sqrt(log n / m)
  double spec_reference = 0.0;  // 4 (sqrt(n/m) + n/m) ||Sigma||
};

/// The gradient term assumes ||x*||_Sigma = 1, where E[a y] = c Sigma x*.
inline ConcentrationReport concentration_diagnostics(const MeasurementEnsemble& ens, const BinaryObservation& obs) {
  if (obs.y.size() != ens.m() || obs.truth.x_star.size() != ens.n())
    throw ShapeError("concentration_diagnostics: observation does not match ensemble");
  const double m = static_cast<double>(ens.m());
  const double n = static_cast<double>(ens.n());
  const Mat& sigma = ens.cov.matrix();
  const double c = scaling_constant(ens.sigma, ens.q);
  ConcentrationReport rep;
  rep.linf_grad = (ens.A.transpose() * obs.y / m - c * (sigma * obs.truth.x_star)).lpNorm<Eigen::Infinity>();
  Mat dev = Mat::Zero(ens.n(), ens.n());
  dev.selfadjointView<Eigen::Lower>().rankUpdate(ens.A.transpose(), 1.0 / m);
  dev = dev.selfadjointView<Eigen::Lower>();
  dev -= sigma;
  rep.linf_cov = dev.lpNorm<Eigen::Infinity>();
  rep.spec_cov = symmetric_spectral_norm(dev);
  rep.linf_reference = 4.0 * std::sqrt(std::log(n) / m);
  rep.spec_reference = 4.0 * (std::sqrt(n / m) + n / m) * symmetric_spectral_norm(sigma);
  return rep;
}

// ---------------------------------------------------------------------------

struct PassRate {
  int passes = 0;
  int runs = 0;
  double rate() const noexcept { return runs ? static_cast<double>(passes) / runs : 0.0; }
};

/// Runs `trial(seed_i)` for derived seeds seed_i = derive_seed(base, {i}).
inline PassRate seeded_pass_rate(int runs, std::uint64_t base_seed, const std::function<bool(std::uint64_t)>& trial) {
  PassRate pr;
  for (int i = 0; i < runs; ++i) {
    ++pr.runs;
    if (trial(derive_seed(base_seed, {static_cast<std::uint64_t>(i)}))) ++pr.passes;
  }
  return pr;
}

}  // namespace obgcs
