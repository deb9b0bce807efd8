#include <gtest/gtest.h>

#include <cmath>

#include "obgcs/decoders.hpp"
#include "obgcs/measurement.hpp"
#include "obgcs/random.hpp"

using namespace obgcs;

namespace {

GeneratorNetwork identity_net(Eigen::Index n) { return GeneratorNetwork({Layer{Mat::Identity(n, n), Vec::Zero(n)}}); }

struct Problem {
  MeasurementEnsemble ens;
  BinaryObservation obs;
};

Problem make_problem(const GeneratorNetwork& net, Eigen::Index m, double sigma, double q, std::uint64_t seed) {
  const auto cov = CovarianceSpec::toeplitz(net.output_dim(), 0.3);
  Rng rng = make_rng(seed, Stream::latent);
  Vec x = net.forward(gaussian_vector(rng, net.input_dim()));
  x /= sigma_norm(cov, x);
  auto ens = sample_ensemble(m, cov, sigma, q, seed);
  auto obs = observe(ens, x, seed);
  return {std::move(ens), std::move(obs)};
}

// Bisection on the soft threshold: sum max(|v_i| - theta, 0) = r.
Vec l1_projection_by_bisection(const Vec& v, double r) {
  if (v.lpNorm<1>() <= r) return v;
  double lo = 0.0, hi = v.cwiseAbs().maxCoeff();
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double s = (v.cwiseAbs().array() - mid).max(0.0).sum();
    (s > r ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::copysign(std::max(std::abs(v[i]) - theta, 0.0), v[i]);
  return out;
}

}  // namespace

TEST(LsDecoder, LinearGeneratorReachesClosedForm) {
  const Eigen::Index n = 6;
  const auto net = identity_net(n);
  const auto p = make_problem(net, 400, 0.1, 0.97, 3);
  LsDecoderConfig cfg;
  cfg.restarts = 2;
  cfg.steps_per_restart = 500;
  cfg.lambda = 0.01;
  const auto r = ls_decode(p.obs, p.ens, net, cfg);
  const double m = 400.0;
  const Mat s = p.ens.A.transpose() * p.ens.A / m;
  const Vec b = p.ens.A.transpose() * p.obs.y / m;
  const Vec z_star = (s + 2.0 * cfg.lambda * Mat::Identity(n, n)).ldlt().solve(b);
  EXPECT_LT((r.z_hat - z_star).norm(), 1e-6);
  EXPECT_NEAR(r.objective, ls_objective(p.obs, p.ens, net, cfg, r.z_hat), 1e-14);
}

TEST(LsDecoder, ConstrainedStaysInBall) {
  const auto net = identity_net(5);
  const auto p = make_problem(net, 200, 0.1, 0.97, 4);
  LsDecoderConfig cfg;
  cfg.mode = LsMode::constrained;
  cfg.radius = 0.3;
  cfg.restarts = 3;
  cfg.steps_per_restart = 200;
  const auto r = ls_decode(p.obs, p.ens, net, cfg);
  EXPECT_LE(r.z_hat.norm(), 0.3 * (1 + 1e-12));
}

TEST(LsDecoder, BacktrackingTraceIsNonincreasing) {
  SynthSpec s;
  s.seed = 2;
  const auto net = synth_generator(s);
  const auto p = make_problem(net, 300, 0.1, 0.97, 5);
  LsDecoderConfig cfg;
  cfg.restarts = 3;
  cfg.steps_per_restart = 300;
  cfg.seed = 9;
  const auto r = ls_decode(p.obs, p.ens, net, cfg);
  ASSERT_EQ(r.loss_trace.size(), 301u);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1] + 1e-15);
}

TEST(LsDecoder, FixedStepBestEndpointNotAboveStart) {
  SynthSpec s;
  s.seed = 3;
  const auto net = synth_generator(s);
  const auto p = make_problem(net, 300, 0.1, 0.97, 6);
  LsDecoderConfig cfg;
  cfg.step_rule = StepRule::fixed;
  cfg.restarts = 3;
  cfg.steps_per_restart = 200;
  const auto r = ls_decode(p.obs, p.ens, net, cfg);
  EXPECT_LE(r.loss_trace.back(), r.loss_trace.front());
}

TEST(LsDecoder, DeterministicAndBestOfRestarts) {
  SynthSpec s;
  s.seed = 4;
  const auto net = synth_generator(s);
  const auto p = make_problem(net, 250, 0.1, 0.97, 7);
  LsDecoderConfig cfg;
  cfg.restarts = 4;
  cfg.steps_per_restart = 100;
  cfg.seed = 21;
  const auto a = ls_decode(p.obs, p.ens, net, cfg);
  const auto b = ls_decode(p.obs, p.ens, net, cfg);
  EXPECT_EQ(a.z_hat, b.z_hat);
  EXPECT_EQ(a.restart_index, b.restart_index);
  // Running the chosen restart alone cannot beat the multi-restart optimum.
  for (int r = 0; r < cfg.restarts; ++r) {
    LsDecoderConfig one = cfg;
    one.restarts = r + 1;
    EXPECT_GE(ls_decode(p.obs, p.ens, net, one).objective, a.objective);
  }
}

TEST(LsDecoder, TiesGoToLowestRestart) {
  // A zero generator with lambda = 0 gives every restart the same objective.
  const GeneratorNetwork zero({Layer{Mat::Zero(4, 2), Vec::Zero(4)}});
  const auto p = make_problem(identity_net(4), 100, 0.0, 1.0, 8);
  LsDecoderConfig cfg;
  cfg.lambda = 0.0;
  cfg.restarts = 5;
  cfg.steps_per_restart = 10;
  const auto r = ls_decode(p.obs, p.ens, zero, cfg);
  EXPECT_EQ(r.restart_index, 0);
  EXPECT_DOUBLE_EQ(r.objective, 0.5);
}

TEST(LsDecoder, DivergenceIsReported) {
  SynthSpec s;
  const auto net = synth_generator(s);
  const auto p = make_problem(net, 100, 0.1, 0.97, 9);
  LsDecoderConfig cfg;
  cfg.step_rule = StepRule::fixed;
  cfg.step_size = 1e200;
  cfg.restarts = 1;
  cfg.steps_per_restart = 50;
  try {
    ls_decode(p.obs, p.ens, net, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.restart(), 0);
    EXPECT_GE(e.step(), 1);
  }
}

TEST(LsDecoder, ConfigValidation) {
  LsDecoderConfig cfg;
  cfg.restarts = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = LsDecoderConfig::default_protocol();
  EXPECT_EQ(cfg.lambda, 0.001);
  EXPECT_EQ(cfg.restarts, 10);
  EXPECT_EQ(cfg.steps_per_restart, 1000);
  cfg.mode = LsMode::constrained;
  cfg.radius = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(LsDecoder, ShapeMismatch) {
  const auto net = identity_net(4);
  const auto p = make_problem(identity_net(5), 50, 0.1, 0.97, 1);
  EXPECT_THROW(ls_decode(p.obs, p.ens, net, LsDecoderConfig{}), ShapeError);
}

TEST(Decoders, ScaleInvariance) {
  SynthSpec s;
  s.seed = 6;
  const auto net = synth_generator(s);
  const auto cov = CovarianceSpec::toeplitz(s.n, 0.3);
  const auto ens = sample_ensemble(200, cov, 0.0, 1.0, 10);
  Rng rng(2);
  const Vec x = net.forward(gaussian_vector(rng, s.k));
  const auto o1 = observe(ens, x, 3);
  const auto o2 = observe(ens, 2.0 * x, 3);
  ASSERT_EQ(o1.y, o2.y);
  LsDecoderConfig cfg;
  cfg.restarts = 2;
  cfg.steps_per_restart = 50;
  EXPECT_EQ(ls_decode(o1, ens, net, cfg).x_hat, ls_decode(o2, ens, net, cfg).x_hat);
  EXPECT_EQ(biht_decode(o1, ens, 20, 30), biht_decode(o2, ens, 20, 30));
  EXPECT_EQ(pv_convex_decode(o1, ens, 4.0, 30), pv_convex_decode(o2, ens, 4.0, 30));
}

TEST(Biht, SparseUnitNorm) {
  SynthSpec s;
  const auto net = synth_generator(s);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = make_problem(net, 150, 0.1, 0.97, seed);
    for (Eigen::Index sp : {1, 7, 20, 100}) {
      const Vec x = biht_decode(p.obs, p.ens, sp, 50);
      EXPECT_LE((x.array() != 0.0).count(), sp);
      EXPECT_NEAR(x.norm(), 1.0, 1e-12);
    }
  }
  const auto p = make_problem(net, 10, 0.1, 0.97, 1);
  EXPECT_THROW(biht_decode(p.obs, p.ens, 0, 5), InvalidArgument);
}

TEST(Biht, RecoversSparseDirectionNoiseless) {
  const Eigen::Index n = 50;
  Vec x = Vec::Zero(n);
  x[3] = 1.0;
  x[17] = -0.5;
  x[40] = 0.25;
  const auto ens = sample_ensemble(2000, CovarianceSpec::identity(n), 0.0, 1.0, 12);
  const auto obs = observe(ens, x, 1);
  const Vec xh = biht_decode(obs, ens, 3, 200);
  EXPECT_GT(xh.dot(x / x.norm()), 0.99);
}

TEST(HardThreshold, KeepsLargestAndBreaksTiesByIndex) {
  const Vec x{{0.5, -2.0, 1.0, -1.0, 0.1}};
  EXPECT_EQ(hard_threshold(x, 2), (Vec{{0.0, -2.0, 1.0, 0.0, 0.0}}));
  EXPECT_EQ(hard_threshold(x, 1), (Vec{{0.0, -2.0, 0.0, 0.0, 0.0}}));
}

TEST(Projection, L1BallMatchesBisection) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Vec v = gaussian_vector(rng, 1 + i % 30, 2.0);
    const double r = 0.1 + (i % 7) * 0.5;
    const Vec p = project_l1_ball(v, r);
    EXPECT_LT((p - l1_projection_by_bisection(v, r)).norm(), 1e-9);
    EXPECT_LE(p.lpNorm<1>(), r * (1 + 1e-12));
  }
}

TEST(Projection, IntersectionFeasibleAndNoFartherThanFeasiblePoints) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec v = gaussian_vector(rng, 20, 1.5);
    const double s = 1.0 + (i % 4);
    const Vec p = project_l1_l2_intersection(v, s);
    EXPECT_LE(p.lpNorm<1>(), s * (1 + 1e-12));
    EXPECT_LE(p.norm(), 1.0 + 1e-12);
    const double d = (p - v).norm();
    for (int j = 0; j < 50; ++j) {
      Vec f = p + gaussian_vector(rng, 20, 0.05);
      f /= std::max({1.0, f.lpNorm<1>() / s, f.norm()});
      EXPECT_LE(d, (f - v).norm() + 1e-6);
    }
  }
  const Vec inside{{0.1, -0.2}};
  EXPECT_EQ(project_l1_l2_intersection(inside, 1.0), inside);
}

TEST(PvConvex, FeasibleAndAligned) {
  SynthSpec s;
  const auto net = synth_generator(s);
  const auto p = make_problem(net, 500, 0.1, 0.97, 2);
  const Vec x = pv_convex_decode(p.obs, p.ens, 10.0, 100);
  EXPECT_LE(x.lpNorm<1>(), 10.0 * (1 + 1e-12));
  EXPECT_LE(x.norm(), 1.0 + 1e-12);
  EXPECT_GT(x.dot(p.obs.truth.x_star), 0.0);
}

TEST(ErrorMetrics, Examples) {
  const Vec x{{0.6, 0.8, 0.0}};
  const double c = scaling_constant(0.1, 0.97);
  auto e = estimation_error(c * x, x, 0.1, 0.97);
  EXPECT_NEAR(e.l2_err, 0.0, 1e-15);
  EXPECT_NEAR(e.cosine, 1.0, 1e-15);
  EXPECT_NEAR(estimation_error(-x, x, 0.1, 0.97).cosine, -1.0, 1e-15);
  e = estimation_error(x, x, 0.1, 0.97);
  EXPECT_NEAR(e.l2_err, std::abs(1.0 - 0.7462893), 5e-6);
  EXPECT_NEAR(e.per_pixel, e.l2_err / std::sqrt(3.0), 1e-15);
  EXPECT_THROW(estimation_error(Vec::Zero(3), x, 0.1, 0.97), DegenerateError);
  EXPECT_THROW(estimation_error(Vec::Zero(2), x, 0.1, 0.97), ShapeError);
}
