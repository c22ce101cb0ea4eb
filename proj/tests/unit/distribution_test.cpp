#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "lqe/distribution.hpp"
#include "lqe/errors.hpp"
#include "lqe/rng.hpp"

using namespace lqe;

namespace {

std::vector<double> probs_of(const GeneralDistribution& d) {
  return {d.probs().begin(), d.probs().end()};
}

}  // namespace

TEST(Normalize, ZeroLogitsAreUniform) {
  const auto d = normalize({BinGrid(0, 3, 3), {0, 0, 0, 0}});
  for (double p : probs_of(d)) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Normalize, DominantLogit) {
  const auto d = normalize({BinGrid(0, 3, 3), {1000, 0, 0, 0}});
  EXPECT_NEAR(d[0], 1.0, 1e-9);
  EXPECT_NEAR(d[1], 0.0, 1e-9);
}

TEST(Normalize, PowersOfTwo) {
  const auto d = normalize({BinGrid(0, 3, 3), {0, std::log(2.0), std::log(4.0), 0}});
  EXPECT_NEAR(d[0], 1.0 / 8, 1e-12);
  EXPECT_NEAR(d[1], 2.0 / 8, 1e-12);
  EXPECT_NEAR(d[2], 4.0 / 8, 1e-12);
  EXPECT_NEAR(d[3], 1.0 / 8, 1e-12);
}

TEST(Normalize, ShiftInvariantAndSumsToOne) {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> z(17);
    for (double& v : z) v = 5 * rng.normal();
    std::vector<double> shifted = z;
    for (double& v : shifted) v += 123.0;
    const auto a = normalize({BinGrid(0, 16, 16), z});
    const auto b = normalize({BinGrid(0, 16, 16), shifted});
    const auto pa = probs_of(a);
    EXPECT_NEAR(std::accumulate(pa.begin(), pa.end(), 0.0), 1.0, 1e-9);
    for (int i = 0; i < 17; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Normalize, RejectsNonFinite) {
  EXPECT_THROW(normalize({BinGrid(0, 1, 1), {0, NAN}}), InvalidInput);
  EXPECT_THROW(normalize({BinGrid(0, 1, 1), {0, INFINITY}}), InvalidInput);
  EXPECT_THROW(normalize({BinGrid(0, 2, 2), {0, 0}}), InvalidInput);
}

TEST(Expectation, OneHotIsBinValue) {
  const BinGrid g(0.5, 8.5, 16);
  for (int i = 0; i < g.size(); ++i) {
    EXPECT_EQ(expectation(GeneralDistribution::one_hot(g, i)), g.bin(i));
  }
}

TEST(Expectation, UniformIsMidpoint) {
  EXPECT_DOUBLE_EQ(expectation(GeneralDistribution::uniform(BinGrid(0, 16, 16))), 8.0);
}

TEST(Expectation, WeightedSum) {
  const GeneralDistribution d(BinGrid(0, 3, 3), {0.1, 0.2, 0.3, 0.4});
  EXPECT_NEAR(expectation(d), 2.0, 1e-12);
}

TEST(Expectation, LinearInProbs) {
  const BinGrid g(0, 4, 4);
  const GeneralDistribution a(g, {0.1, 0.2, 0.3, 0.2, 0.2});
  const GeneralDistribution b(g, {0.5, 0.0, 0.0, 0.1, 0.4});
  std::vector<double> mix(5);
  for (int i = 0; i < 5; ++i) mix[i] = 0.3 * a[i] + 0.7 * b[i];
  EXPECT_NEAR(expectation(g, mix), 0.3 * expectation(a) + 0.7 * expectation(b), 1e-12);
}

TEST(Distribution, RejectsBadProbabilities) {
  EXPECT_THROW(GeneralDistribution(BinGrid(0, 1, 1), {0.5, 0.6}), InvalidInput);
  EXPECT_THROW(GeneralDistribution(BinGrid(0, 1, 1), {1.0}), InvalidInput);
  EXPECT_THROW(BinGrid(1, 1, 4), InvalidInput);
  EXPECT_THROW(BinGrid(0, 1, 0), InvalidInput);
}

TEST(Topkm, OneHot) {
  const auto block = topkm(GeneralDistribution::one_hot(BinGrid(0, 16, 16), 3), 4, false);
  EXPECT_EQ(block.values, (std::vector<double>{1, 0, 0, 0, 0.25}));
}

TEST(Topkm, SortThenAverage) {
  const GeneralDistribution d(BinGrid(0, 5, 5), {0.05, 0.05, 0.1, 0.2, 0.5, 0.1});
  const auto block = topkm(d, 2, false);
  ASSERT_EQ(block.values.size(), 3u);
  EXPECT_NEAR(block.values[0], 0.5, 1e-12);
  EXPECT_NEAR(block.values[1], 0.2, 1e-12);
  EXPECT_NEAR(block.values[2], 0.35, 1e-12);
}

TEST(Topkm, PermutationInvariant) {
  std::vector<double> p{0.05, 0.05, 0.1, 0.2, 0.5, 0.1};
  const auto ref = topkm(GeneralDistribution(BinGrid(0, 5, 5), p), 2, true).values;
  std::sort(p.begin(), p.end());
  do {
    EXPECT_EQ(topkm(GeneralDistribution(BinGrid(0, 5, 5), p), 2, true).values, ref);
  } while (std::next_permutation(p.begin(), p.end()));
}

TEST(Topkm, VarianceIsPopulationVariance) {
  const GeneralDistribution d(BinGrid(0, 3, 3), {0.1, 0.4, 0.2, 0.3});
  const auto block = topkm(d, 3, true);
  ASSERT_EQ(block.values.size(), 5u);
  const double m = 0.3;
  const double var = ((0.4 - m) * (0.4 - m) + 0 + (0.2 - m) * (0.2 - m)) / 3;
  EXPECT_NEAR(block.values[3], m, 1e-12);
  EXPECT_NEAR(block.values[4], var, 1e-12);
}

TEST(Topkm, SortedAndMeanConsistent) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(17);
    for (double& v : z) v = 3 * rng.normal();
    const auto block = topkm(normalize({BinGrid(0, 16, 16), z}), 4, false);
    double sum = 0;
    for (int i = 0; i < 4; ++i) {
      if (i > 0) {
        EXPECT_GE(block.values[i - 1], block.values[i]);
      }
      EXPECT_GE(block.values[i], 0.0);
      EXPECT_LE(block.values[i], 1.0);
      sum += block.values[i];
    }
    EXPECT_NEAR(block.values[4], sum / 4, 1e-12);
  }
}

TEST(Topkm, TiesPreferLowestIndex) {
  const GeneralDistribution d(BinGrid(0, 3, 3), {0.25, 0.25, 0.25, 0.25});
  const auto block = topkm(d, 2, false);
  EXPECT_EQ(block.indices, (std::vector<int>{0, 1}));
}

TEST(Topkm, KOutOfRange) {
  const auto d = GeneralDistribution::uniform(BinGrid(0, 3, 3));
  EXPECT_THROW(topkm(d, 0, false), InvalidArgument);
  EXPECT_THROW(topkm(d, 5, false), InvalidArgument);
  EXPECT_NO_THROW(topkm(d, 4, false));
}

TEST(BackpropTopkm, ZeroUpstream) {
  const GeneralDistribution d(BinGrid(0, 3, 3), {0.1, 0.4, 0.2, 0.3});
  const auto block = topkm(d, 2, false);
  for (double g : backprop_topkm(block, 4, std::vector<double>{0, 0, 0})) EXPECT_EQ(g, 0.0);
}

TEST(BackpropTopkm, KEqualsOne) {
  const GeneralDistribution d(BinGrid(0, 3, 3), {0.1, 0.4, 0.2, 0.3});
  const auto g = backprop_topkm(topkm(d, 1, false), 4, std::vector<double>{0.7, 0.2});
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 0.9, 1e-15);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 0.0);
}

TEST(BackpropTopkm, RoutesMeanSlot) {
  const GeneralDistribution d(BinGrid(0, 3, 3), {0.1, 0.4, 0.2, 0.3});
  const auto g = backprop_topkm(topkm(d, 2, false), 4, std::vector<double>{1.0, 2.0, 4.0});
  EXPECT_NEAR(g[1], 3.0, 1e-12);
  EXPECT_NEAR(g[3], 4.0, 1e-12);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(StatFeature, IdenticalOneHots) {
  const BinGrid g(0, 16, 16);
  const auto oh = GeneralDistribution::one_hot(g, 5);
  const auto f = assemble_stat_feature({oh, oh, oh, oh}, 4, false);
  ASSERT_EQ(f.values.size(), 20u);
  for (int s = 0; s < 4; ++s) {
    EXPECT_EQ(std::vector<double>(f.values.begin() + 5 * s, f.values.begin() + 5 * s + 5),
              (std::vector<double>{1, 0, 0, 0, 0.25}));
  }
  EXPECT_EQ(StatFeature::width(4, true), 24);
}

TEST(StatFeature, MatchesPerSideTopkm) {
  const BinGrid g(0, 16, 16);
  Rng rng(3);
  auto draw = [&] {
    std::vector<double> z(17);
    for (double& v : z) v = 2 * rng.normal();
    return normalize({g, z});
  };
  const std::array<GeneralDistribution, 4> sides{draw(), draw(), draw(), draw()};
  const auto f = assemble_stat_feature(sides, 3, true);
  ASSERT_EQ(f.values.size(), 20u);
  for (int s = 0; s < 4; ++s) {
    std::vector<double> p = probs_of(sides[s]);
    std::sort(p.begin(), p.end(), std::greater<>());
    const double mean = (p[0] + p[1] + p[2]) / 3;
    const double var =
        ((p[0] - mean) * (p[0] - mean) + (p[1] - mean) * (p[1] - mean) + (p[2] - mean) * (p[2] - mean)) / 3;
    const std::vector<double> expect{p[0], p[1], p[2], mean, var};
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(f.values[5 * s + i], expect[i], 1e-15);
  }
}

TEST(StatFeature, MismatchedGrids) {
  const auto a = GeneralDistribution::uniform(BinGrid(0, 16, 16));
  const auto b = GeneralDistribution::uniform(BinGrid(0, 8, 16));
  EXPECT_THROW(assemble_stat_feature({a, a, a, b}, 4, false), InvalidInput);
}

TEST(MeanTop1, OneHotAndUniform) {
  const BinGrid g(0, 16, 16);
  const auto oh = GeneralDistribution::one_hot(g, 2);
  const auto u = GeneralDistribution::uniform(g);
  EXPECT_DOUBLE_EQ(mean_top1({oh, oh, oh, oh}), 1.0);
  EXPECT_NEAR(mean_top1({u, u, u, u}), 1.0 / 17, 1e-15);
}
