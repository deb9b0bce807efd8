#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "obgcs/harness.hpp"

using namespace obgcs;

namespace {

ExperimentGrid small_grid() {
  ExperimentGrid g;
  g.generator.k = 3;
  g.generator.n = 20;
  g.generator.hidden = {15};
  g.m_values = {20, 40};
  g.trials = 2;
  g.ls.restarts = 2;
  g.ls.steps_per_restart = 30;
  g.biht_iters = 20;
  g.pv_iters = 20;
  g.threads = 1;
  g.base_seed = 77;
  return g;
}

CellResult row(Eigen::Index m, const std::string& dec, int trial, double err, double cosine = 0.9) {
  CellResult r;
  r.m = m;
  r.decoder = dec;
  r.trial = trial;
  r.l2_err = err;
  r.cosine = cosine;
  return r;
}

}  // namespace

TEST(Fit, ExactPowerLaw) {
  std::vector<double> ms{100, 200, 400, 800, 1600}, es;
  for (double m : ms) es.push_back(3.0 / std::sqrt(m));
  const auto f = fit_power_law(ms, es);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_EQ(f.points, 5u);
}

TEST(Fit, ConstantErrorsGiveZeroSlope) {
  const auto f = fit_power_law({10, 20, 30}, {0.4, 0.4, 0.4});
  EXPECT_NEAR(f.slope, 0.0, 1e-15);
}

TEST(Fit, InsufficientData) {
  EXPECT_THROW(fit_power_law({10, 20}, {1, 2}), InsufficientDataError);
  EXPECT_THROW(fit_power_law({10, 20, 30}, {1, 0, NAN}), InsufficientDataError);
  EXPECT_THROW(fit_power_law({10, 10, 10}, {1, 2, 3}), InsufficientDataError);
  std::vector<CellResult> rows;
  for (Eigen::Index m : {10, 20, 30})
    for (int t = 0; t < 2; ++t) rows.push_back(row(m, "ls", t, 1.0 / m));
  EXPECT_THROW(fit_scaling(rows, "ls"), InsufficientDataError);
  for (Eigen::Index m : {10, 20, 30}) rows.push_back(row(m, "ls", 2, 1.0 / m));
  EXPECT_NEAR(fit_scaling(rows, "ls").slope, -1.0, 1e-12);
}

TEST(Fit, MedianByM) {
  std::vector<CellResult> rows{row(5, "ls", 0, 3.0), row(5, "ls", 1, 1.0), row(5, "ls", 2, 2.0),
                               row(5, "biht", 0, 9.0)};
  rows.back().converged = false;
  const auto med = median_error_by_m(rows, "ls");
  EXPECT_EQ(med.at(5), 2.0);
  EXPECT_TRUE(median_error_by_m(rows, "biht").empty());
}

TEST(Spearman, Examples) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
  // Monotone transform leaves ranks unchanged.
  EXPECT_NEAR(spearman({0.1, 0.5, 0.2, 0.9}, {std::exp(0.1), std::exp(0.5), std::exp(0.2), std::exp(0.9)}), 1.0,
              1e-15);
  // Ties: ranks (1.5, 1.5, 3) vs (1, 2, 3).
  EXPECT_NEAR(spearman({1, 1, 2}, {1, 2, 3}), 0.8660254037844386, 1e-12);
  EXPECT_THROW(spearman({1}, {1}), InvalidArgument);
}

TEST(FlipReport, IdenticalGridsGiveUnitRatios) {
  std::vector<CellResult> rows;
  for (Eigen::Index m : {10, 20})
    for (const char* d : {"ls", "biht"})
      for (int t = 0; t < 3; ++t) rows.push_back(row(m, d, t, 0.1 * (t + 1), 0.5 + 0.1 * t));
  for (auto metric : {RatioMetric::direction, RatioMetric::l2}) {
    const auto rep = flip_robustness_report(rows, rows, metric);
    ASSERT_EQ(rep.rows.size(), 4u);
    for (const auto& r : rep.rows) EXPECT_EQ(r.ratio, 1.0);
    EXPECT_EQ(rep.compared_m.size(), 2u);
    EXPECT_EQ(rep.ls_not_worse_fraction(), 1.0);
  }
}

TEST(FlipReport, DirectionMetricUsesCosine) {
  const std::vector<CellResult> a{row(10, "ls", 0, 1.0, 0.5)};
  const std::vector<CellResult> b{row(10, "ls", 0, 1.0, 0.875)};
  const auto rep = flip_robustness_report(a, b);
  EXPECT_NEAR(rep.rows[0].noflip, 1.0, 1e-15);
  EXPECT_NEAR(rep.rows[0].flip, 0.5, 1e-15);
  EXPECT_NEAR(rep.rows[0].ratio, 0.5, 1e-15);
}

TEST(FlipReport, MismatchedGridsThrow) {
  const std::vector<CellResult> a{row(10, "ls", 0, 1.0)};
  const std::vector<CellResult> b{row(20, "ls", 0, 1.0)};
  EXPECT_THROW(flip_robustness_report(a, b), InvalidArgument);
}

TEST(Grid, RowCountAndOrder) {
  const auto g = small_grid();
  const auto rows = run_grid(g);
  EXPECT_EQ(rows.size(), 2u * 2u * 3u);
  EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end(), cell_less));
  std::set<std::uint64_t> seeds;
  for (const auto& r : rows) {
    EXPECT_EQ(r.seed, cell_seed(g.base_seed, r.m, r.trial));
    EXPECT_EQ(r.runtime_s, 0.0);
    EXPECT_TRUE(std::isfinite(r.l2_err));
    seeds.insert(r.seed);
  }
  EXPECT_EQ(seeds.size(), 4u);
}

TEST(Grid, DecoderSubset) {
  auto g = small_grid();
  g.decoders = {"ls"};
  for (const auto& r : run_grid(g)) EXPECT_EQ(r.decoder, "ls");
}

TEST(Grid, DeterministicAcrossThreadCounts) {
  auto g = small_grid();
  const auto a = run_grid(g);
  g.threads = 3;
  const auto b = run_grid(g);
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Grid, CsvRoundTrip) {
  const auto rows = run_grid(small_grid());
  std::ostringstream os;
  write_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), kCsvHeader);
  std::istringstream is(os.str());
  const auto back = read_csv(is);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].m, rows[i].m);
    EXPECT_EQ(back[i].decoder, rows[i].decoder);
    EXPECT_EQ(back[i].seed, rows[i].seed);
    EXPECT_EQ(back[i].l2_err, rows[i].l2_err);
    EXPECT_EQ(back[i].cosine, rows[i].cosine);
    EXPECT_EQ(back[i].converged, rows[i].converged);
  }
}

TEST(Grid, MalformedCsv) {
  std::istringstream bad_header("m,decoder\n1,ls\n");
  EXPECT_THROW(read_csv(bad_header), MalformedFileError);
  std::istringstream short_row(std::string(kCsvHeader) + "\n1,ls,0\n");
  EXPECT_THROW(read_csv(short_row), MalformedFileError);
}

TEST(Grid, SignalHasUnitSigmaNorm) {
  const auto net = synth_generator(small_grid().generator);
  const auto cov = CovarianceSpec::toeplitz(20, 0.3);
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_NEAR(sigma_norm(cov, draw_signal(net, cov, s)), 1.0, 1e-12);
}

TEST(Config, DefaultsMatchProtocol) {
  const ExperimentGrid g;
  EXPECT_EQ(g.nu, 0.3);
  EXPECT_EQ(g.sigma, 0.1);
  EXPECT_EQ(g.q, 0.97);
  EXPECT_EQ(g.m_values, (std::vector<Eigen::Index>{50, 100, 150, 200, 250, 300}));
}

TEST(Config, ParsesKeysAndComments) {
  std::istringstream is(
      "# grid\n"
      "m_values = 10, 20,30\n"
      "decoders = ls,biht   # no pv\n"
      "q = 0.9\n"
      "trials = 4\n"
      "hidden = 8,9\n"
      "\n");
  const auto g = parse_grid_config(is);
  EXPECT_EQ(g.m_values, (std::vector<Eigen::Index>{10, 20, 30}));
  EXPECT_EQ(g.decoders, (std::vector<std::string>{"ls", "biht"}));
  EXPECT_EQ(g.q, 0.9);
  EXPECT_EQ(g.trials, 4);
  EXPECT_EQ(g.generator.hidden, (std::vector<Eigen::Index>{8, 9}));
}

TEST(Config, Errors) {
  std::istringstream unknown("bogus = 1\n");
  EXPECT_THROW(parse_grid_config(unknown), InvalidArgument);
  std::istringstream no_eq("trials 4\n");
  EXPECT_THROW(parse_grid_config(no_eq), MalformedFileError);
  std::istringstream bad_q("q = 1.5\n");
  EXPECT_THROW(parse_grid_config(bad_q), InvalidArgument);
  std::istringstream bad_dec("decoders = ls,foo\n");
  EXPECT_THROW(parse_grid_config(bad_dec), InvalidArgument);
  std::istringstream bad_num("sigma = abc\n");
  EXPECT_THROW(parse_grid_config(bad_num), InvalidArgument);
}
