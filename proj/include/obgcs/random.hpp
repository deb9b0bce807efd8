#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace obgcs {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Stable across platforms, used for every seed
/// derivation in the project.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a list of integers into one seed: h = splitmix(h ^ splitmix(v_i)).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = splitmix64(base);
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

/// Named sub-streams of one seed. Each randomness source in the measurement
/// model draws from its own stream.
enum class Stream : std::uint64_t {
  matrix = 1,
  noise = 2,
  flips = 3,
  latent = 4,
  restart = 5,
  pairs = 6,
  gaussians = 7,
  weights = 8,
  net = 9,
  signal = 10,
};

inline Rng make_rng(std::uint64_t seed, Stream s, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, {static_cast<std::uint64_t>(s), index}));
}

inline Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * nd(rng);
  return v;
}

inline Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // Fill row by row so the draw order matches the row-major file layout.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * nd(rng);
  return m;
}

/// Uniform sample from the Euclidean ball of radius r in R^k.
inline Eigen::VectorXd uniform_in_ball(Rng& rng, Eigen::Index k, double r) {
  Eigen::VectorXd v = gaussian_vector(rng, k);
  double norm = v.norm();
  while (norm == 0.0) {
    v = gaussian_vector(rng, k);
    norm = v.norm();
  }
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const double radius = r * std::pow(ud(rng), 1.0 / static_cast<double>(k));
  return v * (radius / norm);
}

}  // namespace obgcs
