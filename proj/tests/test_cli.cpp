#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "obgcs/cli.hpp"

using namespace obgcs;

namespace {

struct Run {
  int rc = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "obgcs");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.rc = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string tmp(const std::string& name) { return ::testing::TempDir() + "cli_" + name; }

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string small_grid_config(const std::string& out) {
  return "k = 3\nn = 20\nhidden = 15\nm_values = 20,40,60\ntrials = 3\ndecoders = ls,biht\n"
         "restarts = 2\nsteps = 30\nbiht_iters = 20\nthreads = 1\nout = " +
         out + "\n";
}

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
  const auto r = invoke({});
  EXPECT_EQ(r.rc, cli::kExitUsage);
}

TEST(Cli, UnknownOptionPrintsHelp) {
  const auto r = invoke({"measure", "--bogus", "1"});
  EXPECT_EQ(r.rc, cli::kExitUsage);
  EXPECT_NE(r.err.find("--sigma"), std::string::npos);
}

TEST(Cli, GridWritesCsvAndFitReadsIt) {
  const auto cfg = tmp("grid.cfg");
  const auto csv = tmp("grid.csv");
  write_file(cfg, small_grid_config(csv));
  auto r = invoke({"grid", "--config", cfg, "--quiet"});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  const auto text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), kCsvHeader);
  r = invoke({"fit", "--in", csv, "--decoder", "ls"});
  ASSERT_EQ(r.rc, cli::kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["decoder"], "ls");
  EXPECT_TRUE(j.contains("slope"));
  EXPECT_TRUE(j.contains("r2"));
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto cfg = tmp("det.cfg");
  write_file(cfg, small_grid_config(tmp("det_a.csv")));
  ASSERT_EQ(invoke({"grid", "--config", cfg, "--quiet", "--seed", "5"}).rc, 0);
  ASSERT_EQ(invoke({"grid", "--config", cfg, "--quiet", "--seed", "5", "--out", tmp("det_b.csv")}).rc, 0);
  EXPECT_EQ(slurp(tmp("det_a.csv")), slurp(tmp("det_b.csv")));
  ASSERT_EQ(invoke({"grid", "--config", cfg, "--quiet", "--seed", "6", "--out", tmp("det_c.csv")}).rc, 0);
  EXPECT_NE(slurp(tmp("det_a.csv")), slurp(tmp("det_c.csv")));

  const auto a = invoke({"validate", "srec", "--runs", "2", "--pairs", "200", "--seed", "3"});
  const auto b = invoke({"validate", "srec", "--runs", "2", "--pairs", "200", "--seed", "3"});
  ASSERT_EQ(a.rc, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, MeasureThenDecode) {
  const auto base = tmp("md");
  ASSERT_EQ(invoke({"measure", "--k", "3", "--n", "20", "--hidden", "15", "--m", "80", "--out", base, "--quiet"}).rc, 0);
  for (const char* d : {"ls", "biht", "pv"}) {
    const auto r = invoke({"decode", "--ens", base + ".ens", "--obs", base + ".obs", "--decoder", d, "--k", "3", "--n",
                        "20", "--hidden", "15", "--restarts", "2", "--steps", "50"});
    ASSERT_EQ(r.rc, 0) << d << ": " << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["decoder"], d);
    EXPECT_GT(j["metrics"]["cosine"].get<double>(), 0.0) << d;
  }
}

TEST(Cli, DivergentStepIsNumericalFailure) {
  const auto base = tmp("div");
  ASSERT_EQ(invoke({"measure", "--k", "3", "--n", "20", "--hidden", "15", "--m", "50", "--out", base, "--quiet"}).rc, 0);
  const auto r = invoke({"decode", "--ens", base + ".ens", "--obs", base + ".obs", "--k", "3", "--n", "20", "--hidden",
                      "15", "--step-rule", "fixed", "--step-size", "1e200"});
  EXPECT_EQ(r.rc, cli::kExitNumerical);
}

TEST(Cli, MissingFileIsUsageError) {
  const auto r = invoke({"decode", "--ens", tmp("nope.ens"), "--obs", tmp("nope.obs")});
  EXPECT_EQ(r.rc, cli::kExitUsage);
}

TEST(Cli, ValidateSrecReportsPassRate) {
  const auto r = invoke({"validate", "srec", "--runs", "3", "--pairs", "500", "--nu", "0"});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["pass_rate"]["runs"], 3);
  EXPECT_EQ(j["last"]["pairs_tested"], 500);
}

TEST(Cli, MemorizeReproducesTargets) {
  const auto targets = tmp("targets.txt");
  write_file(targets, "0.1 0.9 0.5\n0.3 0.3 0.7\n");
  const auto r = invoke({"memorize", "--targets", targets, "--tau", "0.25", "--out", tmp("mem.txt"), "--format", "text"});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j["pass"].get<bool>());
  const auto net = load_generator(tmp("mem.txt"));
  EXPECT_EQ(net.input_dim(), 1);
  EXPECT_EQ(net.output_dim(), 3);
}
