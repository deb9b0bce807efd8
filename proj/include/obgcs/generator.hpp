#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "obgcs/container_io.hpp"
#include "obgcs/errors.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/random.hpp"

namespace obgcs {

enum class Activation : std::uint8_t { identity = 0, relu = 1, sigmoid = 2 };

/// Optional post-processing of the last layer's output.
///   unit_sphere: x <- h / ||h||_2, so G(R^k) lies on the unit sphere.
///   l1_ball:     x <- h / max(1, ||h||_1), so G(R^k) lies in the unit l1 ball.
enum class OutputNormalization : std::uint8_t { none = 0, unit_sphere = 1, l1_ball = 2 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline const char* to_string(OutputNormalization n) {
  switch (n) {
    case OutputNormalization::none: return "none";
    case OutputNormalization::unit_sphere: return "unit_sphere";
    case OutputNormalization::l1_ball: return "l1_ball";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw InvalidArgument("unknown activation '" + s + "'");
}

inline OutputNormalization parse_normalization(const std::string& s) {
  if (s == "none") return OutputNormalization::none;
  if (s == "unit_sphere" || s == "sphere") return OutputNormalization::unit_sphere;
  if (s == "l1_ball" || s == "l1") return OutputNormalization::l1_ball;
  throw InvalidArgument("unknown output normalization '" + s + "'");
}

struct Layer {
  Mat weight;  // d_i x d_{i-1}
  Vec bias;    // d_i
};

/// Latent vector with an optional radius certificate ||z|| <= r.
struct LatentPoint {
  Vec z;
  std::optional<double> radius_bound;

  explicit LatentPoint(Vec v, std::optional<double> r = std::nullopt) : z(std::move(v)), radius_bound(r) {
    if (radius_bound) {
      if (*radius_bound < 0.0) throw InvalidArgument("latent radius bound must be nonnegative");
      if (z.norm() > *radius_bound * (1.0 + 1e-12))
        throw InvalidArgument("latent point lies outside its declared radius bound");
    }
  }
};

/// Intermediate values of one forward pass, reused by the VJP.
struct ForwardTape {
  std::vector<Vec> pre;  // pre-activations of every layer
  Vec last_out;          // output of the final activation, before normalization
};

/// Fully connected ReLU generator G: R^k -> R^n.
///
/// Hidden layers use relu; the last layer applies `final_activation` and then
/// the optional output normalization. Immutable once constructed, so a single
/// instance may be evaluated from many threads.
class GeneratorNetwork {
 public:
  GeneratorNetwork(std::vector<Layer> layers, Activation final_activation = Activation::identity,
                   OutputNormalization normalization = OutputNormalization::none)
      : layers_(std::move(layers)), final_(final_activation), norm_(normalization) {
    if (layers_.empty()) throw ShapeError("generator needs at least one layer");
    dims_.push_back(layers_.front().weight.cols());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.weight.cols() != dims_.back())
        throw ShapeError("layer " + std::to_string(i + 1) + " expects input " + std::to_string(l.weight.cols()) +
                         " but previous layer gives " + std::to_string(dims_.back()));
      if (l.bias.size() != l.weight.rows())
        throw ShapeError("layer " + std::to_string(i + 1) + " bias length does not match its rows");
      if (l.weight.rows() < 1 || l.weight.cols() < 1) throw ShapeError("layer dimensions must be positive");
      if (!l.weight.allFinite() || !l.bias.allFinite())
        throw NonFiniteError("layer " + std::to_string(i + 1) + " has non-finite entries");
      dims_.push_back(l.weight.rows());
    }
    lipschitz_ = compute_lipschitz();
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const std::vector<Eigen::Index>& layer_dims() const noexcept { return dims_; }
  Eigen::Index input_dim() const noexcept { return dims_.front(); }
  Eigen::Index output_dim() const noexcept { return dims_.back(); }
  Activation final_activation() const noexcept { return final_; }
  OutputNormalization normalization() const noexcept { return norm_; }

  /// Number of affine layers.
  std::size_t depth() const noexcept { return layers_.size(); }

  /// Largest hidden-layer width (0 for a single affine map).
  Eigen::Index width() const noexcept {
    Eigen::Index w = 0;
    for (std::size_t i = 1; i + 1 < dims_.size(); ++i) w = std::max(w, dims_[i]);
    return w;
  }

  /// Product of per-layer spectral norms, times 1/4 for a sigmoid output.
  /// Bounds the map before output normalization.
  double lipschitz_bound() const noexcept { return lipschitz_; }

  Vec forward(const Vec& z) const { return forward(z, nullptr); }
  Vec forward(const LatentPoint& p) const { return forward(p.z, nullptr); }

  Vec forward(const Vec& z, ForwardTape* tape) const {
    if (z.size() != input_dim())
      throw ShapeError("latent has length " + std::to_string(z.size()) + ", generator expects " +
                       std::to_string(input_dim()));
    if (tape) tape->pre.clear();
    Vec h = z;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Vec pre = layers_[i].weight * h + layers_[i].bias;
      const bool last = i + 1 == layers_.size();
      if (!last)
        h = pre.cwiseMax(0.0);
      else
        h = apply_final(pre);
      if (tape) tape->pre.push_back(std::move(pre));
    }
    if (tape) tape->last_out = h;
    return normalize(h);
  }

  /// J(z)^T v with relu'(0) = 0.
  Vec latent_vjp(const Vec& z, const Vec& cotangent) const {
    ForwardTape tape;
    forward(z, &tape);
    return vjp(tape, cotangent);
  }

  Vec latent_vjp(const LatentPoint& p, const Vec& cotangent) const { return latent_vjp(p.z, cotangent); }

  /// VJP through a tape recorded by forward().
  Vec vjp(const ForwardTape& tape, const Vec& cotangent) const {
    if (cotangent.size() != output_dim())
      throw ShapeError("cotangent has length " + std::to_string(cotangent.size()) + ", generator output is " +
                       std::to_string(output_dim()));
    if (tape.pre.size() != layers_.size()) throw ShapeError("forward tape does not belong to this generator");
    Vec g = normalize_vjp(tape.last_out, cotangent);
    for (std::size_t ii = layers_.size(); ii-- > 0;) {
      const Vec& pre = tape.pre[ii];
      if (ii + 1 == layers_.size()) {
        switch (final_) {
          case Activation::identity: break;
          case Activation::relu: g = (pre.array() > 0.0).select(g, 0.0); break;
          case Activation::sigmoid: {
            const Eigen::ArrayXd s = sigmoid(pre).array();
            g = (g.array() * s * (1.0 - s)).matrix();
            break;
          }
        }
      } else {
        g = (pre.array() > 0.0).select(g, 0.0);
      }
      g = layers_[ii].weight.transpose() * g;
    }
    return g;
  }

 private:
  static Vec sigmoid(const Vec& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix(); }

  Vec apply_final(const Vec& pre) const {
    switch (final_) {
      case Activation::identity: return pre;
      case Activation::relu: return pre.cwiseMax(0.0);
      case Activation::sigmoid: return sigmoid(pre);
    }
    return pre;
  }

  Vec normalize(const Vec& h) const {
    switch (norm_) {
      case OutputNormalization::none: return h;
      case OutputNormalization::unit_sphere: {
        const double nrm = h.norm();
        if (nrm == 0.0) throw DegenerateError("unit-sphere normalization of a zero output");
        return h / nrm;
      }
      case OutputNormalization::l1_ball: {
        const double l1 = h.lpNorm<1>();
        return l1 > 1.0 ? Vec(h / l1) : h;
      }
    }
    return h;
  }

  Vec normalize_vjp(const Vec& h, const Vec& v) const {
    switch (norm_) {
      case OutputNormalization::none: return v;
      case OutputNormalization::unit_sphere: {
        const double nrm = h.norm();
        if (nrm == 0.0) throw DegenerateError("unit-sphere normalization of a zero output");
        const Vec x = h / nrm;
        return (v - x * x.dot(v)) / nrm;
      }
      case OutputNormalization::l1_ball: {
        const double l1 = h.lpNorm<1>();
        if (l1 <= 1.0) return v;
        const Vec sgn = h.unaryExpr([](double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); });
        return v / l1 - sgn * (h.dot(v) / (l1 * l1));
      }
    }
    return v;
  }

  double compute_lipschitz() const {
    double l = 1.0;
    for (const auto& layer : layers_) l *= spectral_norm(layer.weight);
    if (final_ == Activation::sigmoid) l *= 0.25;
    return l;
  }

  std::vector<Layer> layers_;
  std::vector<Eigen::Index> dims_;
  Activation final_;
  OutputNormalization norm_;
  double lipschitz_ = 0.0;
};

inline double lipschitz_upper_bound(const GeneratorNetwork& net) { return net.lipschitz_bound(); }

struct SynthSpec {
  Eigen::Index k = 5;
  Eigen::Index n = 100;
  std::vector<Eigen::Index> hidden{20, 50};
  std::uint64_t seed = 0;
  double scale = 1.0;
  // Biases are off by default: a bias-free relu net is positively
  // homogeneous, so c * G(z) = G(c z) stays in range for c > 0.
  double bias_scale = 0.0;
  Activation final_activation = Activation::identity;
  OutputNormalization normalization = OutputNormalization::none;
};

/// Random generator with weights ~ N(0, scale^2 / fan_in).
inline GeneratorNetwork synth_generator(const SynthSpec& spec) {
  if (spec.k < 1 || spec.n < 1) throw InvalidArgument("synth_generator: k and n must be >= 1");
  if (!(spec.scale > 0.0)) throw InvalidArgument("synth_generator: scale must be positive");
  for (auto h : spec.hidden)
    if (h < 1) throw InvalidArgument("synth_generator: hidden widths must be >= 1");
  std::vector<Eigen::Index> dims{spec.k};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.n);
  Rng rng = make_rng(spec.seed, Stream::weights);
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const double sd = spec.scale / std::sqrt(static_cast<double>(dims[i - 1]));
    Layer l;
    l.weight = gaussian_matrix(rng, dims[i], dims[i - 1], sd);
    l.bias = spec.bias_scale > 0.0 ? gaussian_vector(rng, dims[i], spec.bias_scale) : Vec(Vec::Zero(dims[i]));
    layers.push_back(std::move(l));
  }
  return GeneratorNetwork(std::move(layers), spec.final_activation, spec.normalization);
}

// ---------------------------------------------------------------------------
// Weight files.
//
// Binary ("OBGCS-GEN v1\n" magic, little-endian):
//   u32 D, u32 dims[D+1], u8 activation, u8 normalization,
//   then per layer: u32 rows, u32 cols, rows*cols f64 (row-major), u32 len, len f64 bias.
//
// Text ("OBGCS-GEN-TEXT v1" first line):
//   dims d0 d1 ... dD
//   activation <identity|relu|sigmoid>
//   normalization <none|unit_sphere|l1_ball>
//   layer i          (repeated D times; then d_i rows of d_{i-1} numbers)
//   bias             (then one line of d_i numbers)
// ---------------------------------------------------------------------------

inline constexpr const char* kGeneratorMagic = "OBGCS-GEN v1";
inline constexpr const char* kGeneratorTextMagic = "OBGCS-GEN-TEXT v1";

inline void write_generator_binary(std::ostream& os, const GeneratorNetwork& net) {
  io::write_magic(os, kGeneratorMagic);
  io::write_u32(os, static_cast<std::uint32_t>(net.depth()));
  for (auto d : net.layer_dims()) io::write_u32(os, static_cast<std::uint32_t>(d));
  io::write_u8(os, static_cast<std::uint8_t>(net.final_activation()));
  io::write_u8(os, static_cast<std::uint8_t>(net.normalization()));
  for (const auto& l : net.layers()) {
    io::write_u32(os, static_cast<std::uint32_t>(l.weight.rows()));
    io::write_u32(os, static_cast<std::uint32_t>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) io::write_f64(os, l.weight(r, c));
    io::write_u32(os, static_cast<std::uint32_t>(l.bias.size()));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) io::write_f64(os, l.bias[r]);
  }
}

namespace detail {

inline void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NonFiniteError(where + ": non-finite entry");
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<double> parse_numbers(const std::string& line, const std::string& where) {
  std::vector<double> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw MalformedFileError(where + ": bad number '" + tok + "'");
    check_finite(v, where);
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

inline GeneratorNetwork read_generator_binary(std::istream& is, const std::string& context = "generator") {
  io::Reader rd(is, context);
  rd.expect_magic(kGeneratorMagic);
  const std::uint32_t depth = rd.u32();
  if (depth == 0 || depth > 100000) throw MalformedFileError(context + ": implausible layer count");
  std::vector<std::uint32_t> dims(depth + 1);
  for (auto& d : dims) {
    d = rd.u32();
    if (d == 0) throw DimensionError(context + ": zero layer dimension");
  }
  const auto act = rd.u8();
  const auto nrm = rd.u8();
  if (act > 2 || nrm > 2) throw MalformedFileError(context + ": unknown activation or normalization tag");
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < depth; ++i) {
    const std::string where = context + " layer " + std::to_string(i + 1);
    const auto rows = rd.u32();
    const auto cols = rd.u32();
    if (rows != dims[i + 1] || cols != dims[i])
      throw DimensionError(where + ": weight block is " + std::to_string(rows) + "x" + std::to_string(cols) +
                           ", header declares " + std::to_string(dims[i + 1]) + "x" + std::to_string(dims[i]));
    Layer l;
    l.weight.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        l.weight(r, c) = rd.f64();
        detail::check_finite(l.weight(r, c), where);
      }
    const auto len = rd.u32();
    if (len != dims[i + 1]) throw DimensionError(where + ": bias length does not match header");
    l.bias.resize(len);
    for (std::uint32_t r = 0; r < len; ++r) {
      l.bias[r] = rd.f64();
      detail::check_finite(l.bias[r], where);
    }
    layers.push_back(std::move(l));
  }
  rd.expect_end();
  return GeneratorNetwork(std::move(layers), static_cast<Activation>(act), static_cast<OutputNormalization>(nrm));
}

inline void write_generator_text(std::ostream& os, const GeneratorNetwork& net) {
  os << kGeneratorTextMagic << '\n' << "dims";
  for (auto d : net.layer_dims()) os << ' ' << d;
  os << "\nactivation " << to_string(net.final_activation()) << "\nnormalization " << to_string(net.normalization())
     << '\n';
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layers()[i];
    os << "layer " << i + 1 << '\n';
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) os << (c ? " " : "") << detail::fmt17(l.weight(r, c));
      os << '\n';
    }
    os << "bias\n";
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) os << (r ? " " : "") << detail::fmt17(l.bias[r]);
    os << '\n';
  }
}

inline GeneratorNetwork read_generator_text(std::istream& is, const std::string& context = "generator") {
  std::string line;
  auto next = [&](const char* what) {
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line[0] != '#') return;
    }
    throw MalformedFileError(context + ": unexpected end of file (expected " + what + ")");
  };
  next("header");
  if (line != kGeneratorTextMagic) throw MalformedFileError(context + ": bad text header");
  next("dims");
  if (line.rfind("dims", 0) != 0) throw MalformedFileError(context + ": expected 'dims'");
  std::vector<Eigen::Index> dims;
  for (double d : detail::parse_numbers(line.substr(4), context)) {
    if (d < 1 || d != std::floor(d)) throw DimensionError(context + ": bad layer dimension");
    dims.push_back(static_cast<Eigen::Index>(d));
  }
  if (dims.size() < 2) throw MalformedFileError(context + ": need at least two dims");
  next("activation");
  if (line.rfind("activation ", 0) != 0) throw MalformedFileError(context + ": expected 'activation'");
  Activation act;
  OutputNormalization nrm;
  try {
    act = parse_activation(line.substr(11));
    next("normalization");
    if (line.rfind("normalization ", 0) != 0) throw MalformedFileError(context + ": expected 'normalization'");
    nrm = parse_normalization(line.substr(14));
  } catch (const InvalidArgument& e) {
    throw MalformedFileError(context + ": " + e.what());
  }
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const std::string where = context + " layer " + std::to_string(i);
    next("layer");
    if (line != "layer " + std::to_string(i)) throw MalformedFileError(where + ": expected layer marker");
    std::vector<std::vector<double>> rows;
    for (;;) {
      next("weights or bias");
      if (line == "bias") break;
      rows.push_back(detail::parse_numbers(line, where));
      if (static_cast<Eigen::Index>(rows.back().size()) != dims[i - 1])
        throw DimensionError(where + ": row has " + std::to_string(rows.back().size()) + " entries, expected " +
                             std::to_string(dims[i - 1]));
    }
    if (static_cast<Eigen::Index>(rows.size()) != dims[i])
      throw DimensionError(where + ": " + std::to_string(rows.size()) + " weight rows, header declares " +
                           std::to_string(dims[i]));
    next("bias values");
    const auto b = detail::parse_numbers(line, where);
    if (static_cast<Eigen::Index>(b.size()) != dims[i]) throw DimensionError(where + ": bias length mismatch");
    Layer l;
    l.weight.resize(dims[i], dims[i - 1]);
    for (Eigen::Index r = 0; r < dims[i]; ++r)
      for (Eigen::Index c = 0; c < dims[i - 1]; ++c) l.weight(r, c) = rows[r][c];
    l.bias = Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
    layers.push_back(std::move(l));
  }
  return GeneratorNetwork(std::move(layers), act, nrm);
}

enum class WeightFormat { binary, text };

inline void save_generator(const GeneratorNetwork& net, const std::string& path,
                           WeightFormat fmt = WeightFormat::binary) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  if (fmt == WeightFormat::binary)
    write_generator_binary(os, net);
  else
    write_generator_text(os, net);
  if (!os) throw Error("write to '" + path + "' failed");
}

/// Loads either format, chosen by the leading magic string.
inline GeneratorNetwork load_generator(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::string head(std::string(kGeneratorTextMagic).size(), '\0');
  is.read(head.data(), static_cast<std::streamsize>(head.size()));
  is.clear();
  is.seekg(0);
  if (head == kGeneratorTextMagic) return read_generator_text(is, path);
  return read_generator_binary(is, path);
}

}  // namespace obgcs
