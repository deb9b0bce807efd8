#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "obgcs/memorizer.hpp"
#include "obgcs/random.hpp"

using namespace obgcs;

namespace {

double bits_value(const std::vector<int>& b) {
  double v = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) v += std::ldexp(static_cast<double>(b[j]), -static_cast<int>(j + 1));
  return v;
}

double extract(const MemorizerNet& g2, double x, int j) { return g2.net.forward(Vec{{x, static_cast<double>(j)}})[0]; }

std::string tmp_path(const std::string& name) { return ::testing::TempDir() + name; }

// Reads "dims" and counts "layer" headers in a text export without using the library parser.
std::pair<std::vector<long>, int> scan_text_export(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<long> dims;
  int layers = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "dims") {
      long d;
      while (ls >> d) dims.push_back(d);
    } else if (tag == "layer") {
      ++layers;
    }
  }
  return {dims, layers};
}

}  // namespace

TEST(Extractor, ExampleValue) {
  const auto g2 = build_bit_extractor(4);
  EXPECT_EQ(extract(g2, 0.6875, 1), 1.0);
  EXPECT_EQ(extract(g2, 0.6875, 2), 0.0);
  EXPECT_EQ(extract(g2, 0.6875, 3), 1.0);
  EXPECT_EQ(extract(g2, 0.6875, 4), 1.0);
}

TEST(Extractor, ExhaustiveSmallWidths) {
  for (int ell = 1; ell <= 8; ++ell) {
    const auto g2 = build_bit_extractor(ell);
    EXPECT_EQ(g2.net.depth(), extractor_depth(ell));
    EXPECT_LE(g2.net.width(), extractor_width());
    for (int code = 0; code < (1 << ell); ++code) {
      const double x = std::ldexp(static_cast<double>(code), -ell);
      for (int j = 1; j <= ell; ++j) {
        const double bit = static_cast<double>((code >> (ell - j)) & 1);
        ASSERT_EQ(extract(g2, x, j), bit) << "ell=" << ell << " code=" << code << " j=" << j;
      }
    }
  }
}

TEST(Extractor, SampledFullPrecision) {
  const int ell = kMaxBits;
  const auto g2 = build_bit_extractor(ell);
  Rng rng(52);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> b(ell);
    for (auto& v : b) v = coin(rng);
    const double x = bits_value(b);
    for (int j = 1; j <= ell; ++j) ASSERT_EQ(extract(g2, x, j), b[static_cast<std::size_t>(j - 1)]) << "j=" << j;
  }
}

TEST(Extractor, RejectsBadBitCount) {
  EXPECT_THROW(build_bit_extractor(0), InvalidArgument);
  EXPECT_THROW(build_bit_extractor(kMaxBits + 1), InvalidArgument);
}

TEST(Fitter, SinglePointExample) {
  const auto g1 = build_fitter({Vec{{0.5}}}, {0.75}, 1, 2);
  EXPECT_EQ(g1.width, 8);
  EXPECT_EQ(g1.depth, 4u);
  EXPECT_EQ(g1.net.depth(), 4u);
  EXPECT_EQ(g1.net.width(), 8);
  EXPECT_EQ(g1.net.forward(Vec{{0.5}})[0], 0.75);
}

TEST(Fitter, FullCapacityRandomSamples) {
  const int W = 2, ell = 3;
  Rng rng(7);
  std::uniform_int_distribution<int> code(0, (1 << ell) - 1);
  std::vector<Vec> anchors;
  std::vector<double> values;
  for (int i = 0; i < W * W * ell; ++i) {
    anchors.push_back(gaussian_vector(rng, 3));
    values.push_back(std::ldexp(static_cast<double>(code(rng)), -ell));
  }
  const auto g1 = build_fitter(anchors, values, W, ell);
  EXPECT_EQ(g1.net.width(), 12);
  EXPECT_EQ(g1.net.depth(), 5u);
  for (std::size_t i = 0; i < anchors.size(); ++i) EXPECT_NEAR(g1.net.forward(anchors[i])[0], values[i], 1e-12);
}

TEST(Fitter, CapacityAndInputErrors) {
  std::vector<Vec> anchors;
  std::vector<double> values;
  for (int i = 0; i < 5; ++i) {
    anchors.push_back(Vec::Constant(1, i));
    values.push_back(0.5);
  }
  EXPECT_THROW(build_fitter(anchors, values, 1, 4), CapacityError);
  EXPECT_NO_THROW(build_fitter(anchors, values, 1, 5));
  auto dup = anchors;
  dup[3] = dup[1];
  EXPECT_THROW(build_fitter(dup, values, 2, 2), InvalidArgument);
  auto bad = values;
  bad[0] = 0.3;
  EXPECT_THROW(build_fitter(anchors, bad, 2, 2), InvalidArgument);
  EXPECT_THROW(build_fitter(anchors, {0.5}, 2, 2), ShapeError);
}

TEST(Fitter, KinkCapacityLimitIsReported) {
  // W^2 ell = 100 admits the samples, the layered interpolant does not.
  const int W = 10, ell = 1;
  ASSERT_LT(fitter_kink_capacity(W, ell), W * W * ell);
  std::vector<Vec> anchors;
  for (int i = 0; i < W * W * ell; ++i) anchors.push_back(Vec::Constant(1, i));
  EXPECT_THROW(build_fitter(anchors, std::vector<double>(anchors.size(), 0.5), W, ell), CapacityError);
}

TEST(IndexedMemorizer, RecallsEveryBitAtCapacity) {
  const int W = 2, ell = 4;
  Rng rng(13);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<Vec> anchors;
  std::vector<std::vector<int>> bits;
  for (int i = 0; i < W * W * ell; ++i) {
    anchors.push_back(gaussian_vector(rng, 2));
    std::vector<int> b(ell);
    for (auto& v : b) v = coin(rng);
    bits.push_back(b);
  }
  const auto g3 = build_indexed_memorizer(anchors, bits, W, ell);
  EXPECT_EQ(g3.width, 14);
  EXPECT_EQ(g3.depth, 13u);
  EXPECT_EQ(g3.net.width(), 14);
  EXPECT_EQ(g3.net.depth(), 13u);
  for (std::size_t i = 0; i < anchors.size(); ++i)
    for (int j = 1; j <= ell; ++j)
      ASSERT_EQ(recall_bit(g3, anchors[i], j), bits[i][static_cast<std::size_t>(j - 1)]) << "i=" << i << " j=" << j;
}

TEST(IndexedMemorizer, RejectsBadBits) {
  EXPECT_THROW(build_indexed_memorizer({Vec{{1.0}}}, {{1, 2}}, 1, 2), InvalidArgument);
  EXPECT_THROW(build_indexed_memorizer({Vec{{1.0}}}, {{1}}, 1, 2), ShapeError);
}

TEST(MemorizerExport, ReloadedNetworkEvaluatesIdentically) {
  const int W = 2, ell = 3;
  std::vector<Vec> anchors;
  std::vector<std::vector<int>> bits;
  for (int i = 0; i < 10; ++i) {
    anchors.push_back(Vec{{0.1 * i, 1.0 - 0.07 * i}});
    bits.push_back({i & 1, (i >> 1) & 1, (i >> 2) & 1});
  }
  const auto g3 = build_indexed_memorizer(anchors, bits, W, ell);
  for (auto fmt : {WeightFormat::text, WeightFormat::binary}) {
    const auto path = tmp_path(fmt == WeightFormat::text ? "g3.txt" : "g3.bin");
    save_generator(g3.net, path, fmt);
    const auto back = load_generator(path);
    EXPECT_EQ(back.depth(), composed_depth(ell));
    EXPECT_EQ(back.width(), composed_width(W));
    for (std::size_t i = 0; i < anchors.size(); ++i)
      for (int j = 1; j <= ell; ++j) {
        Vec in(3);
        in << anchors[i], static_cast<double>(j);
        EXPECT_EQ(back.forward(in)[0], bits[i][static_cast<std::size_t>(j - 1)]);
      }
  }
  const auto [dims, layers] = scan_text_export(tmp_path("g3.txt"));
  EXPECT_EQ(layers, static_cast<int>(composed_depth(ell)));
  ASSERT_EQ(dims.size(), composed_depth(ell) + 1);
  EXPECT_EQ(*std::max_element(dims.begin() + 1, dims.end() - 1), composed_width(W));
}

TEST(TargetGenerator, BitsFormula) {
  EXPECT_EQ(target_bits(4, 0.5), 5);
  EXPECT_EQ(target_bits(1, 0.5), 3);
  EXPECT_THROW(target_bits(4, 0.0), InvalidArgument);
}

TEST(TargetGenerator, TruncatesEachTargetWithinTau) {
  Rng rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int s = 5, n = 4;
  const double tau = 0.5;
  std::vector<Vec> targets;
  for (int i = 0; i < s; ++i) {
    Vec t(n);
    for (auto& v : t) v = unif(rng);
    targets.push_back(t);
  }
  targets[0][0] = 1.0;
  const auto g = build_target_generator(targets, tau, 3);
  EXPECT_EQ(g.ell, target_bits(n, tau));
  EXPECT_EQ(g.net.net.depth(), generator_depth(g.ell));
  EXPECT_EQ(g.net.net.width(), generator_width(s, n, g.ell));
  EXPECT_EQ(g.net.net.input_dim(), 3);
  EXPECT_EQ(g.max_truncation_gap, 0.0);
  for (int i = 0; i < s; ++i) {
    const Vec out = g.net.net.forward(g.anchors[static_cast<std::size_t>(i)]);
    EXPECT_EQ(out, g.truncated[static_cast<std::size_t>(i)]);
    EXPECT_LE((out - targets[static_cast<std::size_t>(i)]).norm(), tau);
    EXPECT_EQ(g.anchors[static_cast<std::size_t>(i)], Vec::Unit(3, 0) / (i + 1.0));
  }
  EXPECT_LE(g.max_l2_gap, tau);
}

TEST(TargetGenerator, RejectsTargetsOutsideCube) {
  EXPECT_THROW(build_target_generator({Vec{{0.5, 1.5}}}, 0.5), InvalidArgument);
  EXPECT_THROW(build_target_generator({Vec{{0.5}}, Vec{{0.5, 0.5}}}, 0.5), ShapeError);
  EXPECT_THROW(build_target_generator({}, 0.5), InvalidArgument);
}

TEST(Memorizer, TruncateBits) {
  EXPECT_EQ(truncate_bits(Vec{{0.7, 1.0, 0.0}}, 2), (Vec{{0.5, 0.75, 0.0}}));
}
