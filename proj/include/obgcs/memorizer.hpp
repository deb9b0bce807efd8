#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "obgcs/errors.hpp"
#include "obgcs/generator.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/random.hpp"

// Exact-recall ReLU networks built by bit extraction.
//
// Every construction is emitted directly as layered affine + relu weights in
// a GeneratorNetwork with identity output, so evaluating the memorizer is the
// same code path as evaluating any exported generator.
//
// Conventions: depth = number of affine layers, width = largest hidden layer.

namespace obgcs {

enum class Construction { fitter, extractor, composed, generator };

inline const char* to_string(Construction c) {
  switch (c) {
    case Construction::fitter: return "fitter";
    case Construction::extractor: return "extractor";
    case Construction::composed: return "composed";
    case Construction::generator: return "generator";
  }
  return "?";
}

struct MemorizerNet {
  GeneratorNetwork net;
  Construction construction;
  Eigen::Index width = 0;  // declared
  std::size_t depth = 0;   // declared
  int W = 0;
  int ell = 0;

  Vec operator()(const Vec& input) const { return net.forward(input); }
};

inline constexpr int kMaxBits = 52;

/// Declared sizes.
inline Eigen::Index fitter_width(int W) { return 4 * W + 4; }
inline std::size_t fitter_depth(int ell) { return static_cast<std::size_t>(ell) + 2; }
inline Eigen::Index extractor_width() { return 8; }
inline std::size_t extractor_depth(int ell) { return 2 * static_cast<std::size_t>(ell); }
inline Eigen::Index composed_width(int W) { return 4 * W + 6; }
inline std::size_t composed_depth(int ell) { return 3 * static_cast<std::size_t>(ell) + 1; }
inline std::size_t generator_depth(int ell) { return 3 * static_cast<std::size_t>(ell) + 2; }
inline Eigen::Index generator_width(int s, int n, int ell) {
  const int w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(s) * n / ell) - 1e-12));
  return static_cast<Eigen::Index>(4 * w + 6) * n;
}

/// Largest number of samples the fitter realizes for (W, ell). The piecewise
/// linear interpolant needs N - 2 kinks; the first hidden layer holds 4W + 3
/// of them and each of the remaining ell layers 4W + 1 (three neurons carry t
/// and the signed running sum).
inline long long fitter_kink_capacity(int W, int ell) {
  const long long b = fitter_width(W);
  return (b - 1) + static_cast<long long>(ell) * (b - 3) + 2;
}

namespace detail {

inline std::vector<Layer> layers_of(const GeneratorNetwork& g) { return g.layers(); }

/// outer(inner(x)): inner's last affine map is folded into outer's first.
inline std::vector<Layer> compose_layers(const std::vector<Layer>& outer, const std::vector<Layer>& inner) {
  if (outer.front().weight.cols() != inner.back().weight.rows())
    throw ShapeError("compose: inner output does not match outer input");
  std::vector<Layer> out(inner.begin(), inner.end() - 1);
  Layer merged;
  merged.weight = outer.front().weight * inner.back().weight;
  merged.bias = outer.front().weight * inner.back().bias + outer.front().bias;
  out.push_back(std::move(merged));
  out.insert(out.end(), outer.begin() + 1, outer.end());
  return out;
}

/// Inserts identity hidden layers before the output layer. Hidden activations
/// are post-relu and hence nonnegative, so relu(I h) = h exactly.
inline void pad_depth(std::vector<Layer>& layers, std::size_t target) {
  if (layers.size() > target) throw CapacityError("construction is deeper than its declared depth");
  if (layers.size() == target) return;
  if (layers.size() < 2) throw ShapeError("pad_depth needs at least one hidden layer");
  const auto h = layers[layers.size() - 2].weight.rows();
  Layer id{Mat::Identity(h, h), Vec::Zero(h)};
  layers.insert(layers.end() - 1, target - layers.size(), id);
}

/// Appends zero neurons (zero row, zero outgoing column) to hidden layer `idx`.
inline void pad_width(std::vector<Layer>& layers, std::size_t idx, Eigen::Index target) {
  auto& l = layers[idx];
  const auto cur = l.weight.rows();
  if (cur > target) throw CapacityError("construction is wider than its declared width");
  if (cur == target) return;
  Mat w = Mat::Zero(target, l.weight.cols());
  w.topRows(cur) = l.weight;
  Vec b = Vec::Zero(target);
  b.head(cur) = l.bias;
  l.weight = std::move(w);
  l.bias = std::move(b);
  auto& next = layers[idx + 1];
  Mat nw = Mat::Zero(next.weight.rows(), target);
  nw.leftCols(cur) = next.weight;
  next.weight = std::move(nw);
}

inline Eigen::Index hidden_width(const std::vector<Layer>& layers) {
  Eigen::Index w = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) w = std::max(w, layers[i].weight.rows());
  return w;
}

inline void pad_to(std::vector<Layer>& layers, Eigen::Index width, std::size_t depth) {
  pad_depth(layers, depth);
  if (hidden_width(layers) > width) throw CapacityError("construction is wider than its declared width");
  pad_width(layers, 0, width);
}

/// Same input, outputs concatenated. All parts must have equal depth.
inline std::vector<Layer> stack_parallel(const std::vector<std::vector<Layer>>& parts) {
  const std::size_t depth = parts.front().size();
  std::vector<Layer> out(depth);
  for (std::size_t d = 0; d < depth; ++d) {
    Eigen::Index rows = 0, cols = 0;
    for (const auto& p : parts) {
      if (p.size() != depth) throw ShapeError("stack_parallel: depth mismatch");
      rows += p[d].weight.rows();
      cols += p[d].weight.cols();
    }
    if (d == 0) cols = parts.front()[0].weight.cols();
    Mat w = Mat::Zero(rows, cols);
    Vec b(rows);
    Eigen::Index r = 0, c = 0;
    for (const auto& p : parts) {
      const auto& l = p[d];
      if (d == 0)
        w.block(r, 0, l.weight.rows(), l.weight.cols()) = l.weight;
      else
        w.block(r, c, l.weight.rows(), l.weight.cols()) = l.weight;
      b.segment(r, l.bias.size()) = l.bias;
      r += l.weight.rows();
      c += l.weight.cols();
    }
    out[d] = Layer{std::move(w), std::move(b)};
  }
  return out;
}

inline void check_bits(int ell) {
  if (ell < 1 || ell > kMaxBits)
    throw InvalidArgument("bit count ell must lie in [1, " + std::to_string(kMaxBits) + "]");
}

/// True when v = sum_{j<=ell} 2^-j b_j exactly.
inline bool is_ell_bit_value(double v, int ell) {
  if (!(v >= 0.0 && v < 1.0)) return false;
  const double scaled = std::ldexp(v, ell);
  return scaled == std::floor(scaled);
}

// Hidden layer layouts of the extractor.
enum ExtractorSlot : Eigen::Index { kR1 = 0, kR2 = 1, kX = 2, kCp = 3, kCn = 4, kS = 5, kAcc = 6 };

/// Bit extraction core. Carries X_t = 2^ell x_t where x_t is x shifted left by
/// t-1 bits. Bit t is clip(g_t, 0, 1) with
///   g_t = kappa (X_t - 2^{ell-1} + 2^{t-2}) / 2^{t-2},
/// which is >= kappa when the bit is 1 and <= -kappa when it is 0 (X_t is a
/// multiple of 2^{t-1}). kappa = 2 leaves a 1/4 margin in X_1 for input
/// rounding; it drops to 1 near ell = 52 to keep g_t - 1 exact.
///
/// select = true:  input (x, j), output bit j.
/// select = false: input x, output sum_t 2^-t b_t (re-assembly).
inline std::vector<Layer> extractor_layers(int ell, bool select) {
  const double two_ell = std::ldexp(1.0, ell);
  const double kappa = ell <= 50 ? 2.0 : 1.0;
  const Eigen::Index in_dim = select ? 2 : 1;
  const Eigen::Index hw = select ? 7 : 4;  // re-assembly uses R1, R2, X, and slot 3 as the accumulator
  const Eigen::Index acc_slot = select ? kAcc : 3;
  std::vector<Layer> layers;

  // X_t as a linear form over the previous layer (or the input).
  auto x_form = [&](int t) {
    Vec f = Vec::Zero(t == 1 ? in_dim : hw);
    if (t == 1) {
      f[0] = two_ell;
    } else {
      f[kX] = 2.0;
      f[kR1] = -two_ell;
      f[kR2] = two_ell;
    }
    return f;
  };

  for (int t = 1; t <= ell; ++t) {
    const Eigen::Index prev = t == 1 ? in_dim : hw;
    Layer l{Mat::Zero(hw, prev), Vec::Zero(hw)};
    const Vec xf = x_form(t);
    const double scale = kappa / std::ldexp(1.0, t - 2);
    const double shift = -std::ldexp(1.0, ell - 1) + std::ldexp(1.0, t - 2);
    l.weight.row(kR1) = scale * xf.transpose();
    l.bias[kR1] = scale * shift;
    l.weight.row(kR2) = scale * xf.transpose();
    l.bias[kR2] = scale * shift - 1.0;
    l.weight.row(kX) = xf.transpose();
    if (select) {
      // j - t
      if (t == 1) {
        l.weight(kCp, 1) = 1.0;
        l.bias[kCp] = -1.0;
        l.weight(kCn, 1) = -1.0;
        l.bias[kCn] = 1.0;
      } else {
        l.weight(kCp, kCp) = 1.0;
        l.weight(kCp, kCn) = -1.0;
        l.bias[kCp] = -1.0;
        l.weight(kCn, kCp) = -1.0;
        l.weight(kCn, kCn) = 1.0;
        l.bias[kCn] = 1.0;
      }
      if (t >= 2) {
        // s_{t-1} = relu(b_{t-1} - |j - (t-1)|)
        l.weight(kS, kR1) = 1.0;
        l.weight(kS, kR2) = -1.0;
        l.weight(kS, kCp) = -1.0;
        l.weight(kS, kCn) = -1.0;
      }
      if (t >= 3) {
        l.weight(kAcc, kAcc) = 1.0;
        l.weight(kAcc, kS) = 1.0;
      }
    } else if (t >= 2) {
      // acc_t = acc_{t-1} + 2^{-(t-1)} b_{t-1}
      const double w = std::ldexp(1.0, -(t - 1));
      l.weight(acc_slot, acc_slot) = 1.0;
      l.weight(acc_slot, kR1) = w;
      l.weight(acc_slot, kR2) = -w;
    }
    layers.push_back(std::move(l));
  }

  if (!select) {
    const double w = std::ldexp(1.0, -ell);
    Layer out{Mat::Zero(1, hw), Vec::Zero(1)};
    out.weight(0, acc_slot) = 1.0;
    out.weight(0, kR1) = w;
    out.weight(0, kR2) = -w;
    layers.push_back(std::move(out));
    return layers;
  }
  if (ell == 1) {
    // j can only be 1: the bit itself is the answer.
    Layer out{Mat::Zero(1, hw), Vec::Zero(1)};
    out.weight(0, kR1) = 1.0;
    out.weight(0, kR2) = -1.0;
    layers.push_back(std::move(out));
    return layers;
  }
  // Final hidden layer: s_ell and acc + s_{ell-1}.
  Layer fin{Mat::Zero(2, hw), Vec::Zero(2)};
  fin.weight(0, kR1) = 1.0;
  fin.weight(0, kR2) = -1.0;
  fin.weight(0, kCp) = -1.0;
  fin.weight(0, kCn) = -1.0;
  fin.weight(1, kAcc) = 1.0;
  fin.weight(1, kS) = 1.0;
  layers.push_back(std::move(fin));
  Layer out{Mat::Ones(1, 2), Vec::Zero(1)};
  layers.push_back(std::move(out));
  return layers;
}

/// Direction w maximizing the smallest gap between projected anchors.
inline Vec separating_direction(const std::vector<Vec>& anchors) {
  const auto k = anchors.front().size();
  if (k == 1) return Vec::Ones(1);
  std::vector<Vec> candidates;
  for (Eigen::Index d = 0; d < k; ++d) candidates.push_back(Vec::Unit(k, d));
  Rng rng(0x5eed5eedULL);
  for (int i = 0; i < 64; ++i) {
    Vec v = gaussian_vector(rng, k);
    candidates.push_back(v / v.norm());
  }
  Vec best = candidates.front();
  double best_gap = -1.0;
  std::vector<double> t(anchors.size());
  for (const auto& w : candidates) {
    for (std::size_t i = 0; i < anchors.size(); ++i) t[i] = w.dot(anchors[i]);
    std::sort(t.begin(), t.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < t.size(); ++i) gap = std::min(gap, t[i] - t[i - 1]);
    if (gap > best_gap) {
      best_gap = gap;
      best = w;
    }
  }
  if (!(best_gap > 0.0)) throw InvalidArgument("fitter: could not separate anchors by a projection");
  return best;
}

/// Piecewise-linear interpolant through (w.z_i, y_i) as a deep relu net:
/// f(t) = y_1 + s_1 (t - t_1) + sum_q (s_q - s_{q-1}) relu(t - t_q).
/// Hidden layers carry T = t - t_1, the running sum as (relu(+acc), relu(-acc)),
/// and a share of the kinks. With carry_index the last input coordinate j is
/// passed through (as relu(j), so j >= 0) and emitted as a second output.
inline std::vector<Layer> fitter_layers(const std::vector<Vec>& anchors, const std::vector<double>& values, int W,
                                        int ell, bool carry_index) {
  const auto k = anchors.front().size();
  const Vec w = separating_direction(anchors);
  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> proj(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) proj[i] = w.dot(anchors[i]);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] < proj[b]; });
  const std::size_t n = anchors.size();
  const double t0 = proj[order[0]];
  std::vector<double> tau(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    tau[i] = proj[order[i]] - t0;
    y[i] = values[order[i]];
  }
  std::vector<double> slope(n > 1 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) slope[i] = (y[i + 1] - y[i]) / (tau[i + 1] - tau[i]);
  // Kinks at tau[1..n-2] with coefficient slope[q] - slope[q-1].
  std::vector<std::size_t> kinks;
  for (std::size_t q = 1; q + 1 < n; ++q) kinks.push_back(q);

  const auto base = fitter_width(W);
  const auto hidden = static_cast<std::size_t>(ell) + 1;
  std::vector<std::vector<std::size_t>> per_layer(hidden);
  std::size_t next = 0;
  for (std::size_t h = 0; h < hidden; ++h) {
    const auto room = static_cast<std::size_t>(h == 0 ? base - 1 : base - 3);
    for (std::size_t c = 0; c < room && next < kinks.size(); ++c) per_layer[h].push_back(kinks[next++]);
  }
  if (next < kinks.size()) throw CapacityError("fitter: samples exceed the construction's kink capacity");

  const Eigen::Index in_dim = k + (carry_index ? 1 : 0);
  std::vector<Layer> layers;
  Eigen::Index prev_dim = in_dim;
  // Index of T, AP, AN, J in the previous hidden layer.
  constexpr Eigen::Index kT = 0, kAp = 1, kAn = 2;
  Eigen::Index prev_j = -1;
  const std::vector<std::size_t>* prev_kinks = nullptr;
  Eigen::Index prev_kink_start = 0;

  for (std::size_t h = 0; h < hidden; ++h) {
    const auto& ks = per_layer[h];
    const Eigen::Index carry = h == 0 ? 1 : 3;
    const Eigen::Index kink_start = carry;
    const Eigen::Index j_slot = carry_index ? carry + static_cast<Eigen::Index>(ks.size()) : -1;
    const Eigen::Index rows = carry + static_cast<Eigen::Index>(ks.size()) + (carry_index ? 1 : 0);
    Layer l{Mat::Zero(rows, prev_dim), Vec::Zero(rows)};
    // t - t_1 as a linear form of the previous layer.
    Vec t_form = Vec::Zero(prev_dim);
    double t_bias = 0.0;
    if (h == 0) {
      t_form.head(k) = w;
      t_bias = -t0;
    } else {
      t_form[kT] = 1.0;
    }
    l.weight.row(kT) = t_form.transpose();
    l.bias[kT] = t_bias;
    if (h > 0) {
      Vec acc = Vec::Zero(prev_dim);
      if (h > 1) {
        acc[kAp] = 1.0;
        acc[kAn] = -1.0;
      }
      for (std::size_t c = 0; c < prev_kinks->size(); ++c) {
        const auto q = (*prev_kinks)[c];
        acc[prev_kink_start + static_cast<Eigen::Index>(c)] = slope[q] - slope[q - 1];
      }
      l.weight.row(kAp) = acc.transpose();
      l.weight.row(kAn) = -acc.transpose();
    }
    for (std::size_t c = 0; c < ks.size(); ++c) {
      l.weight.row(kink_start + static_cast<Eigen::Index>(c)) = t_form.transpose();
      l.bias[kink_start + static_cast<Eigen::Index>(c)] = t_bias - tau[ks[c]];
    }
    if (carry_index) l.weight(j_slot, h == 0 ? k : prev_j) = 1.0;
    layers.push_back(std::move(l));
    prev_dim = rows;
    prev_j = j_slot;
    prev_kinks = &ks;
    prev_kink_start = kink_start;
  }

  const Eigen::Index out_dim = carry_index ? 2 : 1;
  Layer out{Mat::Zero(out_dim, prev_dim), Vec::Zero(out_dim)};
  out.bias[0] = y[0];
  if (n > 1) out.weight(0, kT) = slope[0];
  if (hidden > 1) {
    out.weight(0, kAp) = 1.0;
    out.weight(0, kAn) = -1.0;
  }
  for (std::size_t c = 0; c < prev_kinks->size(); ++c) {
    const auto q = (*prev_kinks)[c];
    out.weight(0, prev_kink_start + static_cast<Eigen::Index>(c)) = slope[q] - slope[q - 1];
  }
  if (carry_index) out.weight(1, prev_j) = 1.0;
  layers.push_back(std::move(out));
  return layers;
}

inline void check_fitter_inputs(const std::vector<Vec>& anchors, std::size_t count, int W, int ell) {
  check_bits(ell);
  if (W < 1) throw InvalidArgument("W must be >= 1");
  if (anchors.empty()) throw InvalidArgument("need at least one sample");
  if (anchors.size() != count) throw ShapeError("anchors and values differ in length");
  const auto k = anchors.front().size();
  for (const auto& a : anchors)
    if (a.size() != k || k < 1) throw ShapeError("anchors must share one positive dimension");
  const auto cap = static_cast<long long>(W) * W * ell;
  if (static_cast<long long>(anchors.size()) > cap)
    throw CapacityError(std::to_string(anchors.size()) + " samples exceed the capacity W^2 ell = " +
                        std::to_string(cap));
  if (static_cast<long long>(anchors.size()) > fitter_kink_capacity(W, ell))
    throw CapacityError("the layered interpolant realizes at most " + std::to_string(fitter_kink_capacity(W, ell)) +
                        " samples for W = " + std::to_string(W) + ", ell = " + std::to_string(ell));
  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto lex = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(anchors[a].data(), anchors[a].data() + k, anchors[b].data(),
                                        anchors[b].data() + k);
  };
  std::sort(order.begin(), order.end(), lex);
  for (std::size_t i = 1; i < order.size(); ++i)
    if (anchors[order[i]] == anchors[order[i - 1]]) throw InvalidArgument("duplicate anchors");
}

}  // namespace detail

/// G1: width 4W+4, depth ell+2, with G1(z_i) = y_i for up to W^2 ell samples
/// whose values are ell-bit binary fractions.
inline MemorizerNet build_fitter(const std::vector<Vec>& anchors, const std::vector<double>& values, int W, int ell) {
  detail::check_fitter_inputs(anchors, values.size(), W, ell);
  for (double v : values)
    if (!detail::is_ell_bit_value(v, ell))
      throw InvalidArgument("fitter values must be ell-bit binary fractions in [0, 1)");
  auto layers = detail::fitter_layers(anchors, values, W, ell, false);
  detail::pad_to(layers, fitter_width(W), fitter_depth(ell));
  return MemorizerNet{GeneratorNetwork(std::move(layers)), Construction::fitter, fitter_width(W), fitter_depth(ell),
                      W, ell};
}

/// G2: width 8, depth 2 ell, with G2(x, j) = b_j for x = sum_{j<=ell} 2^-j b_j.
inline MemorizerNet build_bit_extractor(int ell) {
  detail::check_bits(ell);
  auto layers = detail::extractor_layers(ell, true);
  detail::pad_to(layers, extractor_width(), extractor_depth(ell));
  return MemorizerNet{GeneratorNetwork(std::move(layers)), Construction::extractor, extractor_width(),
                      extractor_depth(ell), 0, ell};
}

/// G3(z_i, j) = b_{i,j}: the fitter maps z_i to y_i = sum_j 2^-j b_{i,j} while
/// carrying j, then the extractor reads bit j. Input is (z, j).
inline MemorizerNet build_indexed_memorizer(const std::vector<Vec>& anchors,
                                            const std::vector<std::vector<int>>& bits, int W, int ell) {
  detail::check_fitter_inputs(anchors, bits.size(), W, ell);
  std::vector<double> values;
  values.reserve(bits.size());
  for (const auto& row : bits) {
    if (static_cast<int>(row.size()) != ell) throw ShapeError("every anchor needs exactly ell bits");
    double v = 0.0;
    for (int j = 0; j < ell; ++j) {
      if (row[j] != 0 && row[j] != 1) throw InvalidArgument("bits must be 0 or 1");
      v += std::ldexp(static_cast<double>(row[j]), -(j + 1));
    }
    values.push_back(v);
  }
  auto g1 = detail::fitter_layers(anchors, values, W, ell, true);
  detail::pad_depth(g1, fitter_depth(ell));
  auto g2 = detail::extractor_layers(ell, true);
  detail::pad_depth(g2, extractor_depth(ell));
  auto layers = detail::compose_layers(g2, g1);
  detail::pad_to(layers, composed_width(W), composed_depth(ell));
  return MemorizerNet{GeneratorNetwork(std::move(layers)), Construction::composed, composed_width(W),
                      composed_depth(ell), W, ell};
}

/// Evaluates a G3 memorizer at anchor z and bit index j (1-based).
inline double recall_bit(const MemorizerNet& g3, const Vec& z, int j) {
  Vec in(z.size() + 1);
  in.head(z.size()) = z;
  in[z.size()] = static_cast<double>(j);
  return g3.net.forward(in)[0];
}

/// Truncation to ell bits per coordinate, clamped so the result stays below 1.
inline Vec truncate_bits(const Vec& o, int ell) {
  const double top = 1.0 - std::ldexp(1.0, -ell);
  Vec t(o.size());
  for (Eigen::Index i = 0; i < o.size(); ++i)
    t[i] = std::min(top, std::ldexp(std::floor(std::ldexp(o[i], ell)), -ell));
  return t;
}

/// ell = ceil(log2(2n / tau)) + 1.
inline int target_bits(Eigen::Index n, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
  const double target = 2.0 * static_cast<double>(n) / tau;
  int p = 0;
  while (std::ldexp(1.0, p) < target) ++p;
  return p + 1;
}

struct TargetGenerator {
  MemorizerNet net;
  std::vector<Vec> anchors;    // latent inputs, anchor i = e_1 / i
  std::vector<Vec> truncated;  // ell-bit truncations of the targets
  int ell = 0;
  int W = 0;
  double max_truncation_gap = 0.0;  // max_i ||G(anchor_i) - T(target_i)||_inf
  double max_l2_gap = 0.0;          // max_i ||G(anchor_i) - target_i||_2
};

/// Generator G: R^k -> R^n with depth 3 ell + 2 and width (4 ceil(sqrt(sn/ell)) + 6) n
/// reproducing the ell-bit truncation of each target at a spike anchor e_1 / i.
///
/// One fitter G1 (shared weights) memorizes all s n pairs (target i,
/// coordinate c) at the scalar anchors 1/i + 2(c-1). Output coordinate c is a
/// block: relu(z_1 + 2(c-1)) -> G1 -> re-assembly extractor, the last
/// computing sum_j 2^-j b_j in one pass, i.e. sum_j 2^-j G3(., j).
inline TargetGenerator build_target_generator(const std::vector<Vec>& targets, double tau, Eigen::Index latent_dim = 1) {
  if (targets.empty()) throw InvalidArgument("need at least one target");
  if (latent_dim < 1) throw InvalidArgument("latent dimension must be >= 1");
  const auto n = targets.front().size();
  if (n < 1) throw ShapeError("targets must be nonempty vectors");
  for (const auto& t : targets) {
    if (t.size() != n) throw ShapeError("targets must share one dimension");
    if ((t.array() < 0.0).any() || (t.array() > 1.0).any()) throw InvalidArgument("targets must lie in [0, 1]^n");
  }
  const int ell = target_bits(n, tau);
  if (ell > kMaxBits) throw InvalidArgument("tau too small: ell exceeds " + std::to_string(kMaxBits));
  const int s = static_cast<int>(targets.size());
  const int W = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(s) * n / ell) - 1e-12));

  std::vector<Vec> anchors, truncated;
  std::vector<Vec> g1_anchors;
  std::vector<double> g1_values;
  for (int i = 1; i <= s; ++i) {
    truncated.push_back(truncate_bits(targets[static_cast<std::size_t>(i - 1)], ell));
    Vec a = Vec::Zero(latent_dim);
    a[0] = 1.0 / i;
    anchors.push_back(a);
  }
  for (Eigen::Index c = 0; c < n; ++c)
    for (int i = 1; i <= s; ++i) {
      g1_anchors.push_back(Vec::Constant(1, 1.0 / i + 2.0 * static_cast<double>(c)));
      g1_values.push_back(truncated[static_cast<std::size_t>(i - 1)][c]);
    }
  if (static_cast<long long>(g1_anchors.size()) > fitter_kink_capacity(W, ell))
    throw CapacityError("s n = " + std::to_string(g1_anchors.size()) +
                        " exceeds what the width budget realizes for W = " + std::to_string(W));
  const auto g1 = detail::fitter_layers(g1_anchors, g1_values, W, ell, false);
  auto g1p = g1;
  detail::pad_depth(g1p, fitter_depth(ell));
  auto reassemble = detail::extractor_layers(ell, false);
  detail::pad_depth(reassemble, extractor_depth(ell));
  const auto core = detail::compose_layers(reassemble, g1p);  // depth 3 ell + 1

  std::vector<std::vector<Layer>> blocks;
  for (Eigen::Index c = 0; c < n; ++c) {
    Layer input{Mat::Zero(1, latent_dim), Vec::Constant(1, 2.0 * static_cast<double>(c))};
    input.weight(0, 0) = 1.0;
    std::vector<Layer> block{input};
    block.insert(block.end(), core.begin(), core.end());
    detail::pad_to(block, composed_width(W), generator_depth(ell));
    blocks.push_back(std::move(block));
  }
  auto layers = detail::stack_parallel(blocks);
  const auto width = composed_width(W) * n;
  TargetGenerator out{MemorizerNet{GeneratorNetwork(std::move(layers)), Construction::generator, width,
                                    generator_depth(ell), W, ell},
                       std::move(anchors), std::move(truncated), ell, W};
  for (int i = 0; i < s; ++i) {
    const Vec g = out.net.net.forward(out.anchors[static_cast<std::size_t>(i)]);
    out.max_truncation_gap =
        std::max(out.max_truncation_gap, (g - out.truncated[static_cast<std::size_t>(i)]).lpNorm<Eigen::Infinity>());
    out.max_l2_gap = std::max(out.max_l2_gap, (g - targets[static_cast<std::size_t>(i)]).norm());
  }
  return out;
}

}  // namespace obgcs
