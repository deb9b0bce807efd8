#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "obgcs/container_io.hpp"
#include "obgcs/errors.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/random.hpp"

namespace obgcs {

enum class CovarianceKind : std::uint8_t { identity = 0, toeplitz = 1, explicit_matrix = 2 };

/// Row covariance of the sensing matrix: I, Sigma_jk = nu^|j-k|, or a given SPD matrix.
class CovarianceSpec {
 public:
  static CovarianceSpec identity(Eigen::Index n) { return CovarianceSpec(CovarianceKind::identity, n, 0.0, Mat()); }

  static CovarianceSpec toeplitz(Eigen::Index n, double nu) {
    if (!(nu > -1.0 && nu < 1.0)) throw InvalidArgument("toeplitz covariance needs nu in (-1, 1)");
    return CovarianceSpec(CovarianceKind::toeplitz, n, nu, Mat());
  }

  static CovarianceSpec explicit_matrix(Mat sigma) {
    if (sigma.rows() != sigma.cols()) throw ShapeError("explicit covariance must be square");
    if (!sigma.allFinite()) throw NonFiniteError("explicit covariance has non-finite entries");
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw FactorizationError("explicit covariance is not symmetric");
    const auto n = sigma.rows();
    return CovarianceSpec(CovarianceKind::explicit_matrix, n, 0.0, std::move(sigma));
  }

  CovarianceKind kind() const noexcept { return kind_; }
  Eigen::Index dim() const noexcept { return n_; }
  double nu() const noexcept { return nu_; }

  const Mat& matrix() const noexcept { return sigma_; }
  /// Lower Cholesky factor C with Sigma = C C^T.
  const Mat& cholesky() const noexcept { return chol_; }

  double entry(Eigen::Index j, Eigen::Index k) const { return sigma_(j, k); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(sigma_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  double max_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(sigma_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  }

 private:
  CovarianceSpec(CovarianceKind kind, Eigen::Index n, double nu, Mat explicit_sigma)
      : kind_(kind), n_(n), nu_(nu) {
    if (n < 1) throw InvalidArgument("covariance dimension must be >= 1");
    switch (kind) {
      case CovarianceKind::identity: sigma_ = Mat::Identity(n, n); break;
      case CovarianceKind::toeplitz:
        sigma_.resize(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
          for (Eigen::Index k = 0; k < n; ++k) sigma_(j, k) = std::pow(nu, static_cast<double>(std::abs(j - k)));
        break;
      case CovarianceKind::explicit_matrix: sigma_ = std::move(explicit_sigma); break;
    }
    Eigen::LLT<Mat> llt(sigma_);
    if (llt.info() != Eigen::Success) throw FactorizationError("covariance is not positive definite");
    chol_ = llt.matrixL();
  }

  CovarianceKind kind_;
  Eigen::Index n_;
  double nu_;
  Mat sigma_;
  Mat chol_;
};

struct MeasurementEnsemble {
  Mat A;  // m x n, rows i.i.d. N(0, Sigma)
  CovarianceSpec cov;
  double sigma = 0.0;  // pre-quantization noise level
  double q = 1.0;      // P[eta_i = +1]
  std::uint64_t seed = 0;

  Eigen::Index m() const noexcept { return A.rows(); }
  Eigen::Index n() const noexcept { return A.cols(); }
};

struct GroundTruth {
  Vec x_star;
  Vec eta;  // entries +-1
  Vec eps;
};

struct BinaryObservation {
  Vec y;  // entries +-1
  GroundTruth truth;
};

inline void check_noise_params(double sigma, double q) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("noise level sigma must be >= 0");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("keep probability q must lie in [0, 1]");
}

/// A = Z C^T with Z i.i.d. N(0,1) drawn from the matrix sub-stream of `seed`.
inline MeasurementEnsemble sample_ensemble(Eigen::Index m, const CovarianceSpec& cov, double sigma, double q,
                                           std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("sample_ensemble: m must be >= 1");
  check_noise_params(sigma, q);
  Rng rng = make_rng(seed, Stream::matrix);
  Mat z = gaussian_matrix(rng, m, cov.dim());
  Mat a = cov.kind() == CovarianceKind::identity ? std::move(z) : Mat(z * cov.cholesky().transpose());
  return MeasurementEnsemble{std::move(a), cov, sigma, q, seed};
}

/// sign with sign(0) = +1.
inline double sign_pos(double v) noexcept { return v >= 0.0 ? 1.0 : -1.0; }

/// y = eta .* sign(A x* + eps). Noise and flips come from independent sub-streams.
inline BinaryObservation observe(const MeasurementEnsemble& ens, const Vec& x_star, std::uint64_t seed) {
  if (x_star.size() != ens.n())
    throw ShapeError("observe: signal has length " + std::to_string(x_star.size()) + ", ensemble has n = " +
                     std::to_string(ens.n()));
  const auto m = ens.m();
  Rng noise_rng = make_rng(seed, Stream::noise);
  Rng flip_rng = make_rng(seed, Stream::flips);
  Vec eps = ens.sigma > 0.0 ? gaussian_vector(noise_rng, m, ens.sigma) : Vec(Vec::Zero(m));
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Vec eta(m);
  for (Eigen::Index i = 0; i < m; ++i) eta[i] = ud(flip_rng) < ens.q ? 1.0 : -1.0;
  const Vec lin = ens.A * x_star + eps;
  Vec y(m);
  for (Eigen::Index i = 0; i < m; ++i) y[i] = eta[i] * sign_pos(lin[i]);
  return BinaryObservation{std::move(y), GroundTruth{x_star, std::move(eta), std::move(eps)}};
}

/// c = (2q - 1) sqrt(2 / (pi (sigma^2 + 1))).
inline double scaling_constant(double sigma, double q) {
  return (2.0 * q - 1.0) * std::sqrt(2.0 / (std::numbers::pi * (sigma * sigma + 1.0)));
}

/// ||x||_Sigma = sqrt(x^T Sigma x).
inline double sigma_norm(const CovarianceSpec& cov, const Vec& x) {
  if (x.size() != cov.dim()) throw ShapeError("sigma_norm: dimension mismatch");
  const double quad = x.dot(cov.matrix() * x);
  if (quad < 0.0) throw FactorizationError("sigma_norm: negative quadratic form");
  return std::sqrt(quad);
}

// ---------------------------------------------------------------------------
// Containers. Same family as generator weight files, little-endian.
//   OBGCS-ENS v1: u32 m, u32 n, u8 cov kind, f64 nu, f64 sigma, f64 q, u64 seed,
//                 [n*n f64 Sigma if explicit], m*n f64 A (row-major)
//   OBGCS-OBS v1: u32 m, u32 n, m i8 y, n f64 x*, m i8 eta, m f64 eps
// ---------------------------------------------------------------------------

inline constexpr const char* kEnsembleMagic = "OBGCS-ENS v1";
inline constexpr const char* kObservationMagic = "OBGCS-OBS v1";

inline void write_ensemble(std::ostream& os, const MeasurementEnsemble& ens) {
  io::write_magic(os, kEnsembleMagic);
  io::write_u32(os, static_cast<std::uint32_t>(ens.m()));
  io::write_u32(os, static_cast<std::uint32_t>(ens.n()));
  io::write_u8(os, static_cast<std::uint8_t>(ens.cov.kind()));
  io::write_f64(os, ens.cov.nu());
  io::write_f64(os, ens.sigma);
  io::write_f64(os, ens.q);
  io::write_u64(os, ens.seed);
  if (ens.cov.kind() == CovarianceKind::explicit_matrix)
    for (Eigen::Index i = 0; i < ens.n(); ++i)
      for (Eigen::Index j = 0; j < ens.n(); ++j) io::write_f64(os, ens.cov.matrix()(i, j));
  for (Eigen::Index i = 0; i < ens.m(); ++i)
    for (Eigen::Index j = 0; j < ens.n(); ++j) io::write_f64(os, ens.A(i, j));
}

inline MeasurementEnsemble read_ensemble(std::istream& is, const std::string& context = "ensemble") {
  io::Reader rd(is, context);
  rd.expect_magic(kEnsembleMagic);
  const auto m = rd.u32();
  const auto n = rd.u32();
  if (m == 0 || n == 0) throw DimensionError(context + ": zero dimension");
  const auto kind = rd.u8();
  const double nu = rd.f64();
  const double sigma = rd.f64();
  const double q = rd.f64();
  const auto seed = rd.u64();
  auto cov = [&]() {
    switch (kind) {
      case 0: return CovarianceSpec::identity(n);
      case 1: return CovarianceSpec::toeplitz(n, nu);
      case 2: {
        Mat s(n, n);
        for (std::uint32_t i = 0; i < n; ++i)
          for (std::uint32_t j = 0; j < n; ++j) s(i, j) = rd.f64();
        return CovarianceSpec::explicit_matrix(std::move(s));
      }
      default: throw MalformedFileError(context + ": unknown covariance kind");
    }
  }();
  Mat a(m, n);
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = 0; j < n; ++j) {
      a(i, j) = rd.f64();
      if (!std::isfinite(a(i, j))) throw NonFiniteError(context + ": non-finite matrix entry");
    }
  rd.expect_end();
  return MeasurementEnsemble{std::move(a), std::move(cov), sigma, q, seed};
}

inline void write_observation(std::ostream& os, const BinaryObservation& obs) {
  io::write_magic(os, kObservationMagic);
  const auto m = obs.y.size();
  const auto n = obs.truth.x_star.size();
  io::write_u32(os, static_cast<std::uint32_t>(m));
  io::write_u32(os, static_cast<std::uint32_t>(n));
  for (Eigen::Index i = 0; i < m; ++i) io::write_u8(os, obs.y[i] > 0 ? 1 : 0xff);
  for (Eigen::Index i = 0; i < n; ++i) io::write_f64(os, obs.truth.x_star[i]);
  for (Eigen::Index i = 0; i < m; ++i) io::write_u8(os, obs.truth.eta[i] > 0 ? 1 : 0xff);
  for (Eigen::Index i = 0; i < m; ++i) io::write_f64(os, obs.truth.eps[i]);
}

inline BinaryObservation read_observation(std::istream& is, const std::string& context = "observation") {
  io::Reader rd(is, context);
  rd.expect_magic(kObservationMagic);
  const auto m = rd.u32();
  const auto n = rd.u32();
  if (m == 0 || n == 0) throw DimensionError(context + ": zero dimension");
  auto sign_byte = [&](const char* what) {
    const auto b = rd.u8();
    if (b == 1) return 1.0;
    if (b == 0xff) return -1.0;
    throw MalformedFileError(context + ": " + what + " entry is not +-1");
  };
  BinaryObservation obs;
  obs.y.resize(m);
  for (std::uint32_t i = 0; i < m; ++i) obs.y[i] = sign_byte("y");
  obs.truth.x_star.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) obs.truth.x_star[i] = rd.f64();
  obs.truth.eta.resize(m);
  for (std::uint32_t i = 0; i < m; ++i) obs.truth.eta[i] = sign_byte("eta");
  obs.truth.eps.resize(m);
  for (std::uint32_t i = 0; i < m; ++i) obs.truth.eps[i] = rd.f64();
  if (!obs.truth.x_star.allFinite() || !obs.truth.eps.allFinite())
    throw NonFiniteError(context + ": non-finite ground truth");
  rd.expect_end();
  return obs;
}

template <class T, class Writer>
void save_to(const std::string& path, const T& value, Writer writer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  writer(os, value);
  if (!os) throw Error("write to '" + path + "' failed");
}

inline void save_ensemble(const MeasurementEnsemble& e, const std::string& path) {
  save_to(path, e, [](std::ostream& os, const MeasurementEnsemble& v) { write_ensemble(os, v); });
}

inline void save_observation(const BinaryObservation& o, const std::string& path) {
  save_to(path, o, [](std::ostream& os, const BinaryObservation& v) { write_observation(os, v); });
}

inline MeasurementEnsemble load_ensemble(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_ensemble(is, path);
}

inline BinaryObservation load_observation(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_observation(is, path);
}

}  // namespace obgcs
