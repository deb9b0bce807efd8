#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "obgcs/decoders.hpp"
#include "obgcs/errors.hpp"
#include "obgcs/generator.hpp"
#include "obgcs/harness.hpp"
#include "obgcs/measurement.hpp"
#include "obgcs/memorizer.hpp"
#include "obgcs/report.hpp"
#include "obgcs/theory.hpp"

// Command line front end. Exit codes: 0 ok, 1 usage or input error,
// 2 numerical failure.

namespace obgcs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  bool quiet = false;
};

inline void add_common(CLI::App* sub, Common& c, bool cli11_config = true) {
  sub->add_option("--seed", c.seed, "base seed");
  if (cli11_config)
    sub->set_config("--config", "", "key = value file; keys are the long option names");
  else
    sub->add_option("--config", c.config, "key = value file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output path");
  sub->add_flag("--quiet", c.quiet, "suppress progress output");
}

struct GeneratorOptions {
  std::string path;
  Eigen::Index k = 5;
  Eigen::Index n = 100;
  std::vector<Eigen::Index> hidden{20, 50};
  std::uint64_t seed = 0;
  double scale = 1.0;
};

inline void add_generator_options(CLI::App* sub, GeneratorOptions& g) {
  sub->add_option("--generator", g.path, "weight file (binary or text); otherwise a network is synthesized");
  sub->add_option("--k", g.k, "latent dimension")->check(CLI::PositiveNumber);
  sub->add_option("--n", g.n, "signal dimension")->check(CLI::PositiveNumber);
  sub->add_option("--hidden", g.hidden, "hidden widths")->delimiter(',');
  sub->add_option("--gen-seed", g.seed, "seed of the synthesized weights");
  sub->add_option("--scale", g.scale, "weight scale of the synthesized network");
}

inline GeneratorNetwork make_generator(const GeneratorOptions& g) {
  if (!g.path.empty()) return load_generator(g.path);
  SynthSpec s;
  s.k = g.k;
  s.n = g.n;
  s.hidden = g.hidden;
  s.seed = g.seed;
  s.scale = g.scale;
  return synth_generator(s);
}

inline CovarianceSpec make_cov(Eigen::Index n, double nu) {
  return nu == 0.0 ? CovarianceSpec::identity(n) : CovarianceSpec::toeplitz(n, nu);
}

/// Writes text to --out when given, else to `out`.
inline void emit(const std::string& text, const Common& c, std::ostream& out) {
  if (c.out.empty()) {
    out << text;
    return;
  }
  std::ofstream os(c.out, std::ios::binary);
  if (!os) throw Error("cannot open '" + c.out + "' for writing");
  os << text;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"1-bit compressed sensing with generative priors"};
  app.require_subcommand(1);

  // synth-gen ---------------------------------------------------------------
  Common c_syn;
  GeneratorOptions g_syn;
  std::string syn_format = "binary";
  std::string syn_final = "identity";
  std::string syn_norm = "none";
  auto* syn = app.add_subcommand("synth-gen", "write a random relu generator");
  add_common(syn, c_syn);
  add_generator_options(syn, g_syn);
  syn->add_option("--format", syn_format, "binary or text")->check(CLI::IsMember({"binary", "text"}));
  syn->add_option("--final", syn_final, "final activation")->check(CLI::IsMember({"identity", "relu", "sigmoid"}));
  syn->add_option("--normalization", syn_norm, "output normalization")
      ->check(CLI::IsMember({"none", "unit_sphere", "l1_ball"}));

  // measure -----------------------------------------------------------------
  Common c_meas;
  GeneratorOptions g_meas;
  Eigen::Index meas_m = 300;
  double meas_sigma = 0.1, meas_q = 0.97, meas_nu = 0.3;
  auto* meas = app.add_subcommand("measure", "draw x* = G(z*), an ensemble and 1-bit observations");
  add_common(meas, c_meas);
  add_generator_options(meas, g_meas);
  meas->add_option("--m", meas_m, "number of measurements")->check(CLI::PositiveNumber);
  meas->add_option("--sigma", meas_sigma, "pre-quantization noise");
  meas->add_option("--q", meas_q, "probability a sign is kept");
  meas->add_option("--nu", meas_nu, "toeplitz correlation (0: identity)");

  // decode ------------------------------------------------------------------
  Common c_dec;
  GeneratorOptions g_dec;
  std::string dec_ens, dec_obs, dec_name = "ls", dec_mode = "lagrangian", dec_rule = "backtracking";
  LsDecoderConfig dec_cfg;
  std::optional<double> dec_step;
  Eigen::Index dec_s = 0;
  int dec_iters = 100;
  double dec_l1 = 0.0, dec_bstep = 1.0;
  auto* dec = app.add_subcommand("decode", "run a decoder on a saved ensemble and observation");
  add_common(dec, c_dec);
  add_generator_options(dec, g_dec);
  dec->add_option("--ens", dec_ens, "ensemble file")->required();
  dec->add_option("--obs", dec_obs, "observation file")->required();
  dec->add_option("--decoder", dec_name, "ls, biht or pv")->check(CLI::IsMember({"ls", "biht", "pv"}));
  dec->add_option("--mode", dec_mode, "ls mode")->check(CLI::IsMember({"lagrangian", "constrained"}));
  dec->add_option("--lambda", dec_cfg.lambda, "ls penalty weight");
  dec->add_option("--radius", dec_cfg.radius, "ls latent radius (constrained)");
  dec->add_option("--restarts", dec_cfg.restarts, "ls restarts");
  dec->add_option("--steps", dec_cfg.steps_per_restart, "ls steps per restart");
  dec->add_option("--step-rule", dec_rule, "fixed or backtracking")->check(CLI::IsMember({"fixed", "backtracking"}));
  dec->add_option("--step-size", dec_step, "ls step size");
  dec->add_option("--sparsity", dec_s, "biht sparsity (0: n)");
  dec->add_option("--iters", dec_iters, "biht / pv iterations");
  dec->add_option("--l1", dec_l1, "pv l1 radius (0: sqrt(n))");
  dec->add_option("--baseline-step", dec_bstep, "biht / pv step");

  // grid --------------------------------------------------------------------
  Common c_grid;
  std::optional<unsigned> grid_threads;
  auto* grid = app.add_subcommand("grid", "run an experiment sweep and write CSV");
  add_common(grid, c_grid, false);
  grid->add_option("--threads", grid_threads, "worker threads (0: all cores)");

  // fit ---------------------------------------------------------------------
  Common c_fit;
  std::string fit_in, fit_decoder = "ls";
  auto* fit = app.add_subcommand("fit", "log-log fit of median error against m");
  add_common(fit, c_fit);
  fit->add_option("--in", fit_in, "CSV produced by grid")->required()->check(CLI::ExistingFile);
  fit->add_option("--decoder", fit_decoder, "decoder rows to fit");

  // validate ----------------------------------------------------------------
  Common c_val;
  std::string val_check;
  Eigen::Index val_m = 0, val_k = 5, val_n = 0, val_points = 50;
  int val_runs = 0, val_pairs = 10000, val_gaussians = 2000, val_tests = 10000;
  double val_delta = 0.01, val_nu = -2.0, val_eps = 0.0, val_radius = 1.0, val_gamma = 0.0;
  auto* val = app.add_subcommand("validate", "seeded pass-rate checks of the theory module");
  add_common(val, c_val);
  val->add_option("check", val_check, "srec, jl, concentration, mean-width or eps-net")
      ->required()
      ->check(CLI::IsMember({"srec", "jl", "concentration", "mean-width", "eps-net"}));
  val->add_option("--m", val_m, "measurements (0: check default)");
  val->add_option("--k", val_k, "latent dimension");
  val->add_option("--n", val_n, "signal dimension (0: check default)");
  val->add_option("--runs", val_runs, "seeded runs (0: check default)");
  val->add_option("--pairs", val_pairs, "srec pairs per run");
  val->add_option("--points", val_points, "jl point count");
  val->add_option("--delta", val_delta, "srec slack");
  val->add_option("--nu", val_nu, "toeplitz correlation (0: identity)");
  val->add_option("--epsilon", val_eps, "jl distortion / net radius (0: check default)");
  val->add_option("--radius", val_radius, "latent ball radius");
  val->add_option("--gamma", val_gamma, "mean-width gamma (0: 0.1)");
  val->add_option("--gaussians", val_gaussians, "mean-width gaussian samples");
  val->add_option("--test-points", val_tests, "eps-net coverage test points");

  // memorize ----------------------------------------------------------------
  Common c_mem;
  std::string mem_targets, mem_format = "binary";
  int mem_s = 5;
  Eigen::Index mem_n = 8, mem_k = 1;
  double mem_tau = 0.25;
  auto* mem = app.add_subcommand("memorize", "build a generator that reproduces targets at spike anchors");
  add_common(mem, c_mem);
  mem->add_option("--targets", mem_targets, "text file, one whitespace-separated target per line")
      ->check(CLI::ExistingFile);
  mem->add_option("--s", mem_s, "random targets to draw when --targets is absent")->check(CLI::PositiveNumber);
  mem->add_option("--n", mem_n, "target dimension for random targets")->check(CLI::PositiveNumber);
  mem->add_option("--k", mem_k, "latent dimension")->check(CLI::PositiveNumber);
  mem->add_option("--tau", mem_tau, "l2 accuracy in (0, 1)");
  mem->add_option("--format", mem_format, "weight file format")->check(CLI::IsMember({"binary", "text"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  auto log = [&](const Common& c, const std::string& msg) {
    if (!c.quiet) err << msg << '\n';
  };

  try {
    if (*syn) {
      if (c_syn.out.empty()) throw InvalidArgument("synth-gen needs --out");
      SynthSpec s;
      s.k = g_syn.k;
      s.n = g_syn.n;
      s.hidden = g_syn.hidden;
      s.seed = c_syn.seed;
      s.scale = g_syn.scale;
      s.final_activation = parse_activation(syn_final);
      s.normalization = parse_normalization(syn_norm);
      const auto net = synth_generator(s);
      save_generator(net, c_syn.out, syn_format == "text" ? WeightFormat::text : WeightFormat::binary);
      log(c_syn, "wrote " + c_syn.out);
    } else if (*meas) {
      if (c_meas.out.empty()) throw InvalidArgument("measure needs --out (writes <out>.ens and <out>.obs)");
      const auto net = make_generator(g_meas);
      const auto cov = make_cov(net.output_dim(), meas_nu);
      const Vec x_star = draw_signal(net, cov, c_meas.seed);
      const auto ens = sample_ensemble(meas_m, cov, meas_sigma, meas_q, c_meas.seed);
      const auto obs = observe(ens, x_star, c_meas.seed);
      save_ensemble(ens, c_meas.out + ".ens");
      save_observation(obs, c_meas.out + ".obs");
      log(c_meas, "wrote " + c_meas.out + ".ens and " + c_meas.out + ".obs");
    } else if (*dec) {
      const auto ens = load_ensemble(dec_ens);
      const auto obs = load_observation(dec_obs);
      json j;
      j["decoder"] = dec_name;
      Vec x_hat;
      if (dec_name == "ls") {
        const auto net = make_generator(g_dec);
        dec_cfg.mode = dec_mode == "constrained" ? LsMode::constrained : LsMode::lagrangian;
        dec_cfg.step_rule = dec_rule == "fixed" ? StepRule::fixed : StepRule::backtracking;
        dec_cfg.step_size = dec_step;
        dec_cfg.seed = c_dec.seed;
        const auto r = ls_decode(obs, ens, net, dec_cfg);
        x_hat = r.x_hat;
        j["result"] = to_json(r);
      } else if (dec_name == "biht") {
        x_hat = biht_decode(obs, ens, dec_s > 0 ? dec_s : ens.n(), dec_iters, dec_bstep);
        j["result"] = json{{"x_hat", vec_json(x_hat)}};
      } else {
        const double l1 = dec_l1 > 0.0 ? dec_l1 : std::sqrt(static_cast<double>(ens.n()));
        x_hat = pv_convex_decode(obs, ens, l1, dec_iters, dec_bstep);
        j["result"] = json{{"x_hat", vec_json(x_hat)}};
      }
      j["metrics"] = to_json(estimation_error(x_hat, obs.truth.x_star, ens.sigma, ens.q));
      emit(j.dump() + "\n", c_dec, out);
    } else if (*grid) {
      ExperimentGrid g;
      if (!c_grid.config.empty()) {
        std::ifstream is(c_grid.config);
        if (!is) throw Error("cannot open '" + c_grid.config + "'");
        g = parse_grid_config(is, c_grid.config);
      }
      if (grid->count("--seed")) g.base_seed = c_grid.seed;
      if (!c_grid.out.empty()) g.output_path = c_grid.out;
      if (grid_threads) g.threads = *grid_threads;
      if (g.output_path.empty()) throw InvalidArgument("grid needs --out or an 'out' config key");
      const auto rows = run_grid(g, c_grid.quiet ? nullptr : &err);
      std::ostringstream os;
      write_csv(os, rows);
      Common target = c_grid;
      target.out = g.output_path;
      emit(os.str(), target, out);
      log(c_grid, "wrote " + std::to_string(rows.size()) + " rows to " + g.output_path);
    } else if (*fit) {
      std::ifstream is(fit_in);
      const auto rows = read_csv(is, fit_in);
      emit(fit_record(fit_decoder, fit_scaling(rows, fit_decoder)) + "\n", c_fit, out);
    } else if (*val) {
      json j;
      j["check"] = val_check;
      PassRate pr;
      if (val_check == "srec") {
        const Eigen::Index n = val_n ? val_n : 100;
        const double nu = val_nu > -1.0 ? val_nu : 0.3;
        SynthSpec s;
        s.k = val_k;
        s.n = n;
        s.seed = c_val.seed;
        const auto net = synth_generator(s);
        const auto cov = make_cov(n, nu);
        const double gamma = 0.5 * std::sqrt(cov.min_eigenvalue());
        const Eigen::Index m = val_m ? val_m
                                     : static_cast<Eigen::Index>(std::ceil(
                                           5.0 * val_k * std::log(std::max(2.0, net.lipschitz_bound() / val_delta))));
        SrecReport last;
        pr = seeded_pass_rate(val_runs ? val_runs : 100, c_val.seed, [&](std::uint64_t sd) {
          const auto ens = sample_ensemble(m, cov, 0.0, 1.0, sd);
          last = check_srec(ens, net, gamma, val_delta, val_pairs, sd, val_radius);
          return last.violations == 0;
        });
        j["m"] = m;
        j["last"] = to_json(last);
      } else if (val_check == "jl") {
        const Eigen::Index n = val_n ? val_n : 100;
        const double eps = val_eps > 0.0 ? val_eps : 0.5;
        const double nu = val_nu > -1.0 ? val_nu : 0.3;
        const Eigen::Index m =
            val_m ? val_m
                  : static_cast<Eigen::Index>(std::ceil(8.0 * std::log(static_cast<double>(val_points)) / (eps * eps)));
        const auto cov = make_cov(n, nu);
        JlReport last;
        pr = seeded_pass_rate(val_runs ? val_runs : 100, c_val.seed, [&](std::uint64_t sd) {
          Rng rng = make_rng(sd, Stream::signal);
          std::vector<Vec> pts;
          for (Eigen::Index i = 0; i < val_points; ++i) pts.push_back(gaussian_vector(rng, n));
          last = check_jl(sample_ensemble(m, cov, 0.0, 1.0, sd), pts, eps);
          return last.pass;
        });
        j["m"] = m;
        j["last"] = to_json(last);
      } else if (val_check == "concentration") {
        const Eigen::Index n = val_n ? val_n : 20;
        const Eigen::Index m = val_m ? val_m : 100000;
        const double nu = val_nu > -1.0 ? val_nu : 0.0;
        const auto cov = make_cov(n, nu);
        PassRate spec;
        ConcentrationReport last;
        pr = seeded_pass_rate(val_runs ? val_runs : 100, c_val.seed, [&](std::uint64_t sd) {
          const auto ens = sample_ensemble(m, cov, 0.1, 0.97, sd);
          Rng rng = make_rng(sd, Stream::signal);
          Vec x = gaussian_vector(rng, n);
          x /= sigma_norm(cov, x);
          last = concentration_diagnostics(ens, observe(ens, x, sd));
          ++spec.runs;
          if (last.spec_cov <= last.spec_reference) ++spec.passes;
          return last.linf_cov <= last.linf_reference;
        });
        j["spectral"] = to_json(spec);
        j["m"] = m;
        j["last"] = to_json(last);
      } else if (val_check == "mean-width") {
        SynthSpec s;
        s.k = val_k;
        s.n = val_n ? val_n : 100;
        s.seed = c_val.seed;
        const auto net = synth_generator(s);
        const double gamma = val_gamma > 0.0 ? val_gamma : 0.1;
        const double net_eps = val_eps > 0.0 ? val_eps : 0.5;
        LocalMeanWidthOptions opt;
        opt.radius = val_radius;
        MeanWidthEstimate last;
        pr = seeded_pass_rate(val_runs ? val_runs : 10, c_val.seed, [&](std::uint64_t sd) {
          Rng rng = make_rng(sd, Stream::latent);
          const Vec z_bar = uniform_in_ball(rng, s.k, val_radius);
          last = estimate_local_mean_width(net, z_bar, gamma, val_gaussians, net_eps, sd, opt);
          return last.omega_hat <= last.bound;
        });
        j["last"] = to_json(last);
      } else {
        const double eps = val_eps > 0.0 ? val_eps : 0.25;
        const auto k = val_k;
        std::size_t size = 0;
        double max_dist = 0.0;
        pr = seeded_pass_rate(val_runs ? val_runs : 1, c_val.seed, [&](std::uint64_t sd) {
          EpsNet net = k <= 8 ? build_eps_net(k, val_radius, eps) : build_random_eps_net(k, val_radius, eps, sd);
          const auto cov = certify_coverage(net, static_cast<std::size_t>(val_tests), sd);
          size = net.size();
          max_dist = cov.max_distance;
          return cov.pass() &&
                 std::log(static_cast<double>(net.size())) <= eps_net_log_cardinality_bound(k, val_radius, eps);
        });
        j["size"] = size;
        j["log_size_bound"] = eps_net_log_cardinality_bound(k, val_radius, eps);
        j["max_distance"] = max_dist;
      }
      j["pass_rate"] = to_json(pr);
      emit(j.dump() + "\n", c_val, out);
    } else if (*mem) {
      std::vector<Vec> targets;
      if (!mem_targets.empty()) {
        std::ifstream is(mem_targets);
        std::string line;
        while (std::getline(is, line)) {
          std::istringstream ls(line);
          std::vector<double> v;
          double d;
          while (ls >> d) v.push_back(d);
          if (!ls.eof()) throw MalformedFileError(mem_targets + ": non-numeric entry");
          if (!v.empty()) targets.push_back(Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
        }
      } else {
        Rng rng = make_rng(c_mem.seed, Stream::signal);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < mem_s; ++i) {
          Vec t(mem_n);
          for (Eigen::Index c = 0; c < mem_n; ++c) t[c] = u(rng);
          targets.push_back(t);
        }
      }
      const auto g = build_target_generator(targets, mem_tau, mem_k);
      if (!c_mem.out.empty())
        save_generator(g.net.net, c_mem.out, mem_format == "text" ? WeightFormat::text : WeightFormat::binary);
      json j = to_json(g.net);
      j["s"] = targets.size();
      j["n"] = targets.front().size();
      j["tau"] = mem_tau;
      j["max_truncation_gap"] = g.max_truncation_gap;
      j["max_l2_gap"] = g.max_l2_gap;
      j["pass"] = g.max_truncation_gap == 0.0 && g.max_l2_gap <= mem_tau;
      out << j.dump() << '\n';
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace obgcs::cli
