#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "obgcs/decoders.hpp"
#include "obgcs/errors.hpp"
#include "obgcs/generator.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/measurement.hpp"
#include "obgcs/random.hpp"

namespace obgcs {

struct ExperimentGrid {
  SynthSpec generator{};
  std::string generator_path;  // when set, weights are loaded instead of synthesized
  std::vector<Eigen::Index> m_values{50, 100, 150, 200, 250, 300};
  double sigma = 0.1;
  double q = 0.97;
  double nu = 0.3;
  int trials = 10;
  std::vector<std::string> decoders{"ls", "biht", "pv"};
  std::uint64_t base_seed = 0;
  std::string output_path;

  LsDecoderConfig ls{};
  Eigen::Index biht_sparsity = 0;  // 0: n, the support size of a dense generator output
  int biht_iters = 100;
  double biht_step = 1.0;
  double pv_ell1 = 0.0;  // 0: sqrt(n)
  int pv_iters = 200;
  double pv_step = 1.0;
  bool timing = false;  // off keeps runtime_s = 0 so files are reproducible
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const {
    if (m_values.empty()) throw InvalidArgument("grid: m_values is empty");
    for (auto m : m_values)
      if (m < 1) throw InvalidArgument("grid: every m must be >= 1");
    if (trials < 1) throw InvalidArgument("grid: trials must be >= 1");
    if (decoders.empty()) throw InvalidArgument("grid: decoders is empty");
    for (const auto& d : decoders)
      if (d != "ls" && d != "biht" && d != "pv") throw InvalidArgument("grid: unknown decoder '" + d + "'");
    check_noise_params(sigma, q);
    if (!(nu > -1.0 && nu < 1.0)) throw InvalidArgument("grid: nu must lie in (-1, 1)");
    ls.validate();
    if (biht_iters < 0 || pv_iters < 0) throw InvalidArgument("grid: iteration counts must be >= 0");
  }
};

struct CellResult {
  Eigen::Index m = 0;
  std::string decoder;
  int trial = 0;
  std::uint64_t seed = 0;
  double l2_err = 0.0;
  double cosine = 0.0;
  double per_pixel = 0.0;
  double runtime_s = 0.0;
  bool converged = true;
};

inline bool cell_less(const CellResult& a, const CellResult& b) {
  return std::tie(a.m, a.decoder, a.trial) < std::tie(b.m, b.decoder, b.trial);
}

/// Seed of cell (m, trial).
inline std::uint64_t cell_seed(std::uint64_t base, Eigen::Index m, int trial) {
  return derive_seed(base, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(trial)});
}

/// Ground truth x* = G(z*), z* ~ N(0, I_k), rescaled to unit Sigma-norm. A draw
/// that maps to 0 is redrawn from the next latent sub-stream.
inline Vec draw_signal(const GeneratorNetwork& net, const CovarianceSpec& cov, std::uint64_t seed) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng = make_rng(seed, Stream::latent, attempt);
    const Vec x = net.forward(gaussian_vector(rng, net.input_dim()));
    const double s = sigma_norm(cov, x);
    if (s > 0.0 && std::isfinite(s)) return x / s;
  }
  throw DegenerateError("draw_signal: generator maps every latent draw to 0");
}

namespace detail {

inline CellResult failed_cell(Eigen::Index m, const std::string& dec, int trial, std::uint64_t seed) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return CellResult{m, dec, trial, seed, nan, nan, nan, 0.0, false};
}

inline std::vector<CellResult> run_cell(const ExperimentGrid& g, const GeneratorNetwork& net, Eigen::Index m,
                                        int trial) {
  const std::uint64_t seed = cell_seed(g.base_seed, m, trial);
  const auto n = net.output_dim();
  const auto cov = CovarianceSpec::toeplitz(n, g.nu);
  const Vec x_star = draw_signal(net, cov, seed);
  const auto ens = sample_ensemble(m, cov, g.sigma, g.q, seed);
  const auto obs = observe(ens, x_star, seed);
  const Eigen::Index s = g.biht_sparsity > 0 ? std::min(g.biht_sparsity, n) : n;
  const double ell1 = g.pv_ell1 > 0.0 ? g.pv_ell1 : std::sqrt(static_cast<double>(n));

  std::vector<CellResult> out;
  for (const auto& dec : g.decoders) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      Vec x_hat;
      if (dec == "ls") {
        LsDecoderConfig cfg = g.ls;
        cfg.seed = seed;
        x_hat = ls_decode(obs, ens, net, cfg).x_hat;
      } else if (dec == "biht") {
        x_hat = biht_decode(obs, ens, s, g.biht_iters, g.biht_step);
      } else {
        x_hat = pv_convex_decode(obs, ens, ell1, g.pv_iters, g.pv_step);
      }
      const auto e = estimation_error(x_hat, x_star, g.sigma, g.q);
      CellResult r{m, dec, trial, seed, e.l2_err, e.cosine, e.per_pixel, 0.0, true};
      if (g.timing) r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.push_back(r);
    } catch (const NumericalError&) {
      out.push_back(failed_cell(m, dec, trial, seed));
    }
  }
  return out;
}

}  // namespace detail

/// Runs every (m, trial) cell on a thread pool. Output is sorted by
/// (m, decoder, trial) and does not depend on scheduling.
inline std::vector<CellResult> run_grid(const ExperimentGrid& grid, const GeneratorNetwork& net,
                                        std::ostream* progress = nullptr) {
  grid.validate();
  std::vector<std::pair<Eigen::Index, int>> cells;
  for (auto m : grid.m_values)
    for (int t = 0; t < grid.trials; ++t) cells.emplace_back(m, t);
  std::vector<std::vector<CellResult>> slots(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::size_t done = 0;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      slots[i] = detail::run_cell(grid, net, cells[i].first, cells[i].second);
      if (progress) {
        std::lock_guard<std::mutex> lock(io);
        *progress << "cell " << ++done << "/" << cells.size() << " (m=" << cells[i].first
                  << ", trial=" << cells[i].second << ")\n";
      }
    }
  };
  unsigned nt = grid.threads ? grid.threads : std::max(1u, std::thread::hardware_concurrency());
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, cells.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<CellResult> out;
  for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
  std::sort(out.begin(), out.end(), cell_less);
  return out;
}

inline GeneratorNetwork grid_generator(const ExperimentGrid& grid) {
  return grid.generator_path.empty() ? synth_generator(grid.generator) : load_generator(grid.generator_path);
}

inline std::vector<CellResult> run_grid(const ExperimentGrid& grid, std::ostream* progress = nullptr) {
  return run_grid(grid, grid_generator(grid), progress);
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader = "m,decoder,trial,seed,l2_err,cosine,per_pixel,runtime_s,converged";

inline void write_csv(std::ostream& os, const std::vector<CellResult>& rows) {
  using detail::fmt17;
  os << kCsvHeader << '\n';
  for (const auto& r : rows)
    os << r.m << ',' << r.decoder << ',' << r.trial << ',' << r.seed << ',' << fmt17(r.l2_err) << ','
       << fmt17(r.cosine) << ',' << fmt17(r.per_pixel) << ',' << fmt17(r.runtime_s) << ','
       << (r.converged ? "true" : "false") << '\n';
}

inline std::vector<CellResult> read_csv(std::istream& is, const std::string& context = "csv") {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw MalformedFileError(context + ": missing or unexpected header");
  std::vector<CellResult> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw MalformedFileError(context + ": line " + std::to_string(lineno) + " needs 9 fields");
    try {
      CellResult r;
      r.m = std::stoll(f[0]);
      r.decoder = f[1];
      r.trial = std::stoi(f[2]);
      r.seed = std::stoull(f[3]);
      r.l2_err = std::stod(f[4]);
      r.cosine = std::stod(f[5]);
      r.per_pixel = std::stod(f[6]);
      r.runtime_s = std::stod(f[7]);
      if (f[8] != "true" && f[8] != "false") throw std::invalid_argument("converged");
      r.converged = f[8] == "true";
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw MalformedFileError(context + ": line " + std::to_string(lineno) + " has a bad field");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scaling fits

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// OLS of log(err) on log(m). Nonpositive or non-finite errors are dropped.
inline ScalingFit fit_power_law(const std::vector<double>& ms, const std::vector<double>& errs) {
  if (ms.size() != errs.size()) throw ShapeError("fit_power_law: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ms.size(); ++i)
    if (ms[i] > 0.0 && errs[i] > 0.0 && std::isfinite(errs[i])) {
      lx.push_back(std::log(ms[i]));
      ly.push_back(std::log(errs[i]));
    }
  if (lx.size() < 3) throw InsufficientDataError("fit needs at least 3 usable points");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw InsufficientDataError("fit needs at least 3 distinct m values");
  ScalingFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  f.points = lx.size();
  return f;
}

/// Median l2_err per m for one decoder, over converged rows with positive error.
inline std::map<Eigen::Index, double> median_error_by_m(const std::vector<CellResult>& rows,
                                                        const std::string& decoder, std::size_t min_trials = 1) {
  std::map<Eigen::Index, std::vector<double>> by_m;
  for (const auto& r : rows)
    if (r.decoder == decoder && r.converged && r.l2_err > 0.0 && std::isfinite(r.l2_err))
      by_m[r.m].push_back(r.l2_err);
  std::map<Eigen::Index, double> out;
  for (auto& [m, v] : by_m)
    if (v.size() >= min_trials) out[m] = median(v);
  return out;
}

/// Log-log fit of the per-m median error. Needs 3 m values with 3 usable trials each.
inline ScalingFit fit_scaling(const std::vector<CellResult>& rows, const std::string& decoder) {
  const auto med = median_error_by_m(rows, decoder, 3);
  if (med.size() < 3)
    throw InsufficientDataError("fit_scaling: decoder '" + decoder + "' has fewer than 3 m values with 3 usable trials");
  std::vector<double> ms, es;
  for (const auto& [m, e] : med) {
    ms.push_back(static_cast<double>(m));
    es.push_back(e);
  }
  return fit_power_law(ms, es);
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidArgument("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Flip robustness

enum class RatioMetric {
  direction,  // ||x_hat/||x_hat|| - x*/||x*|| || = sqrt(2 - 2 cos), scale free
  l2,         // ||x_hat - c x*||
};

struct FlipRatio {
  Eigen::Index m = 0;
  std::string decoder;
  double noflip = 0.0;  // median error
  double flip = 0.0;
  double ratio = 0.0;   // flip / noflip
};

struct FlipReport {
  std::vector<FlipRatio> rows;
  std::vector<Eigen::Index> compared_m;  // m values where both ls and biht are present
  std::size_t ls_not_worse = 0;          // cells with ls ratio <= biht ratio
  double ls_not_worse_fraction() const {
    return compared_m.empty() ? 0.0 : static_cast<double>(ls_not_worse) / static_cast<double>(compared_m.size());
  }
};

inline double cell_error(const CellResult& r, RatioMetric metric) {
  if (metric == RatioMetric::l2) return r.l2_err;
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * r.cosine));
}

/// Median error ratio flip / no-flip per (m, decoder). Both grids must cover
/// the same (m, decoder) cells.
inline FlipReport flip_robustness_report(const std::vector<CellResult>& noflip, const std::vector<CellResult>& flip,
                                         RatioMetric metric = RatioMetric::direction) {
  using Key = std::pair<Eigen::Index, std::string>;
  auto collect = [&](const std::vector<CellResult>& rows) {
    std::map<Key, std::vector<double>> out;
    for (const auto& r : rows) {
      auto& v = out[{r.m, r.decoder}];
      if (r.converged && std::isfinite(r.l2_err)) v.push_back(cell_error(r, metric));
    }
    return out;
  };
  const auto a = collect(noflip), b = collect(flip);
  std::set<Key> ka, kb;
  for (const auto& kv : a) ka.insert(kv.first);
  for (const auto& kv : b) kb.insert(kv.first);
  if (ka != kb || ka.empty()) throw InvalidArgument("flip_robustness_report: grids cover different cells");
  FlipReport rep;
  std::map<Eigen::Index, std::map<std::string, double>> ratio;
  for (const auto& key : ka) {
    const auto& va = a.at(key);
    const auto& vb = b.at(key);
    if (va.empty() || vb.empty()) continue;
    FlipRatio fr{key.first, key.second, median(va), median(vb), 0.0};
    fr.ratio = fr.noflip > 0.0 ? fr.flip / fr.noflip : (fr.flip > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    ratio[key.first][key.second] = fr.ratio;
    rep.rows.push_back(fr);
  }
  for (const auto& [m, d] : ratio) {
    auto ls = d.find("ls");
    auto bi = d.find("biht");
    if (ls == d.end() || bi == d.end()) continue;
    rep.compared_m.push_back(m);
    if (ls->second <= bi->second) ++rep.ls_not_worse;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Config files: flat "key = value" lines, '#' starts a comment.

inline std::map<std::string, std::string> parse_key_values(std::istream& is, const std::string& context = "config") {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw MalformedFileError(context + ": line " + std::to_string(lineno) + " is not key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw MalformedFileError(context + ": line " + std::to_string(lineno) + " has an empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw InvalidArgument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw InvalidArgument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace detail

/// Builds a grid from config keys. Unknown keys are rejected.
///
///   k, n, hidden, generator_seed, generator_scale   synthetic generator
///   generator                                       weight file (overrides synthesis)
///   m_values, trials, sigma, q, nu, decoders, base_seed, out
///   mode, radius, lambda, restarts, steps, step_rule, step_size, init_scale
///   biht_s, biht_iters, biht_step, pv_l1, pv_iters, pv_step, threads, timing
inline ExperimentGrid grid_from_config(const std::map<std::string, std::string>& kv) {
  using namespace detail;
  ExperimentGrid g;
  for (const auto& [key, v] : kv) {
    if (key == "k") g.generator.k = to_int(key, v);
    else if (key == "n") g.generator.n = to_int(key, v);
    else if (key == "hidden") {
      g.generator.hidden.clear();
      for (const auto& h : split_list(v)) g.generator.hidden.push_back(to_int(key, h));
    } else if (key == "generator_seed") g.generator.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "generator_scale") g.generator.scale = to_double(key, v);
    else if (key == "generator") g.generator_path = v;
    else if (key == "m_values") {
      g.m_values.clear();
      for (const auto& m : split_list(v)) g.m_values.push_back(to_int(key, m));
    } else if (key == "trials") g.trials = static_cast<int>(to_int(key, v));
    else if (key == "sigma") g.sigma = to_double(key, v);
    else if (key == "q") g.q = to_double(key, v);
    else if (key == "nu") g.nu = to_double(key, v);
    else if (key == "decoders") g.decoders = split_list(v);
    else if (key == "base_seed") g.base_seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "out") g.output_path = v;
    else if (key == "mode") {
      if (v == "lagrangian") g.ls.mode = LsMode::lagrangian;
      else if (v == "constrained") g.ls.mode = LsMode::constrained;
      else throw InvalidArgument("config key 'mode': expected lagrangian or constrained");
    } else if (key == "radius") g.ls.radius = to_double(key, v);
    else if (key == "lambda") g.ls.lambda = to_double(key, v);
    else if (key == "restarts") g.ls.restarts = static_cast<int>(to_int(key, v));
    else if (key == "steps") g.ls.steps_per_restart = static_cast<int>(to_int(key, v));
    else if (key == "step_rule") {
      if (v == "fixed") g.ls.step_rule = StepRule::fixed;
      else if (v == "backtracking") g.ls.step_rule = StepRule::backtracking;
      else throw InvalidArgument("config key 'step_rule': expected fixed or backtracking");
    } else if (key == "step_size") g.ls.step_size = to_double(key, v);
    else if (key == "init_scale") g.ls.init_scale = to_double(key, v);
    else if (key == "biht_s") g.biht_sparsity = to_int(key, v);
    else if (key == "biht_iters") g.biht_iters = static_cast<int>(to_int(key, v));
    else if (key == "biht_step") g.biht_step = to_double(key, v);
    else if (key == "pv_l1") g.pv_ell1 = to_double(key, v);
    else if (key == "pv_iters") g.pv_iters = static_cast<int>(to_int(key, v));
    else if (key == "pv_step") g.pv_step = to_double(key, v);
    else if (key == "threads") g.threads = static_cast<unsigned>(to_int(key, v));
    else if (key == "timing") g.timing = to_bool(key, v);
    else throw InvalidArgument("unknown config key '" + key + "'");
  }
  g.validate();
  return g;
}

inline ExperimentGrid parse_grid_config(std::istream& is, const std::string& context = "config") {
  return grid_from_config(parse_key_values(is, context));
}

}  // namespace obgcs
