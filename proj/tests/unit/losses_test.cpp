#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "lqe/errors.hpp"
#include "lqe/losses.hpp"
#include "lqe/quality_head.hpp"
#include "lqe/rng.hpp"

using namespace lqe;

TEST(Qfl, ZeroAtTarget) {
  EXPECT_NEAR(qfl_from_prob(0.7, 0.7).loss, 0.0, 1e-15);
  const double logit = std::log(0.7 / 0.3);
  EXPECT_NEAR(qfl_from_logit(logit, 0.7).loss, 0.0, 1e-15);
}

TEST(Qfl, HalfProbabilityPositive) {
  EXPECT_NEAR(qfl_from_prob(0.5, 1.0, {2.0}).loss, 0.25 * std::log(2.0), 1e-9);
  EXPECT_NEAR(qfl_from_logit(0.0, 1.0, {2.0}).loss, 0.17328679513998632, 1e-9);
}

TEST(Qfl, BetaZeroIsSoftBce) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const double j = rng.uniform(0.01, 0.99), y = rng.uniform();
    const double bce = -(y * std::log(j) + (1 - y) * std::log(1 - j));
    EXPECT_NEAR(qfl_from_prob(j, y, {0.0}).loss, bce, 1e-12);
  }
}

TEST(Qfl, MonotoneInDistance) {
  for (double y : {0.0, 1.0}) {
    double prev = -1;
    for (int i = 0; i <= 20; ++i) {
      const double d = 0.049 * i;
      const double j = y == 0.0 ? d : 1.0 - d;
      const double loss = qfl_from_prob(j, y).loss;
      EXPECT_GE(loss, 0.0);
      EXPECT_GT(loss, prev);
      prev = loss;
    }
  }
}

TEST(Qfl, GradientMatchesFiniteDifference) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const double z = rng.uniform(-4, 4), y = rng.uniform();
    const QflConfig cfg{rng.uniform(0.5, 3.0)};
    const double h = 1e-5;
    if (std::abs(sigmoid(z) - y) < 1e-3) continue;
    const double num = (qfl_from_logit(z + h, y, cfg).loss - qfl_from_logit(z - h, y, cfg).loss) / (2 * h);
    const double ana = qfl_from_logit(z, y, cfg).grad;
    EXPECT_LT(std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-7}), 1e-4);

    const double j = sigmoid(z);
    const double nump = (qfl_from_prob(j + h, y, cfg).loss - qfl_from_prob(j - h, y, cfg).loss) / (2 * h);
    const double anap = qfl_from_prob(j, y, cfg).grad;
    EXPECT_LT(std::abs(anap - nump) / std::max({std::abs(anap), std::abs(nump), 1e-7}), 1e-4);
  }
}

TEST(Qfl, RejectsTargetOutOfRange) {
  EXPECT_THROW(qfl_from_logit(0, 1.5), InvalidInput);
  EXPECT_THROW(qfl_from_prob(0.5, -0.1), InvalidInput);
  EXPECT_THROW(validate(QflConfig{-1.0}), InvalidInput);
}

TEST(Dfl, ExactBinIsZero) {
  const BinGrid g(0, 4, 4);
  const auto r = dfl(GeneralDistribution::one_hot(g, 2), 2.0);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  EXPECT_FALSE(r.clamped);
}

TEST(Dfl, MidwaySplit) {
  const BinGrid g(0, 3, 3);
  const auto r = dfl(GeneralDistribution(g, {0, 0.5, 0.5, 0}), 1.5);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-6);
}

TEST(Dfl, ClampsOutsideGrid) {
  const BinGrid g(0, 3, 3);
  const auto r = dfl(GeneralDistribution::one_hot(g, 3), 7.0);
  EXPECT_TRUE(r.clamped);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(Dfl, GradientMatchesFiniteDifference) {
  Rng rng(13);
  const BinGrid g(0, 16, 16);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(17);
    for (double& v : z) v = rng.normal();
    const double y = rng.uniform(0, 16);
    const auto r = dfl(normalize({g, z}), y);
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto zp = z, zm = z;
      zp[i] += 1e-5;
      zm[i] -= 1e-5;
      const double num = (dfl(normalize({g, zp}), y).loss - dfl(normalize({g, zm}), y).loss) / 2e-5;
      diff += (num - r.grad_logits[i]) * (num - r.grad_logits[i]);
      na += r.grad_logits[i] * r.grad_logits[i];
      nn += num * num;
    }
    EXPECT_LT(std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-7}), 1e-4);
  }
}

TEST(Dfl, DescentConvergesToTarget) {
  const BinGrid g(0, 16, 16);
  for (double y : {0.0, 3.3, 7.5, 12.01, 16.0}) {
    std::vector<double> z(17, 0.0);
    for (int it = 0; it < 20000; ++it) {
      const auto r = dfl(normalize({g, z}), y);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= 1.0 * r.grad_logits[i];
    }
    EXPECT_NEAR(expectation(normalize({g, z})), y, 1e-3) << "y=" << y;
  }
}

TEST(GiouLoss, Examples) {
  EXPECT_NEAR(giou_loss({0, 0, 1, 1}, {0, 0, 1, 1}).loss, 0.0, 1e-15);
  EXPECT_NEAR(giou_loss({0, 0, 1, 1}, {2, 0, 3, 1}).loss, 4.0 / 3, 1e-15);
}

TEST(GiouLoss, GradientIsNegatedGiouGradient) {
  const Box a{0, 0, 3, 2}, b{1, 1, 4, 5};
  const auto g = giou_with_grad(a, b);
  const auto l = giou_loss(a, b);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(l.grad[i], -g.grad[i]);
}

namespace {

struct PerfectBatch {
  BinGrid grid{0, 4, 4};
  Eigen::MatrixXd joint;
  Eigen::MatrixXd probs;
  std::vector<Point> locations;
  std::vector<LocationTarget> targets;

  PerfectBatch() {
    joint = Eigen::MatrixXd::Zero(2, 2);
    probs = Eigen::MatrixXd::Zero(4 * 5, 2);
    locations = {{4, 4}, {20, 20}};
    // location (4,4) with offsets (1,2,3,1) in stride-1 bins
    targets = {{1, Box{3, 1, 6, 5}}, {-1, Box{}}};
    joint(1, 0) = 1.0;
    const int sides[4] = {1, 2, 3, 1};
    for (int s = 0; s < 4; ++s) probs(s * 5 + sides[s], 0) = 1.0;
    for (int s = 0; s < 4; ++s) probs(s * 5, 1) = 1.0;
  }

  LossBatch view() const {
    LossBatch b;
    b.grid = grid;
    b.stride = 1.0;
    b.joint = &joint;
    b.joint_is_logit = false;
    b.dist_probs = &probs;
    b.locations = locations;
    b.targets = targets;
    return b;
  }
};

}  // namespace

TEST(TotalLoss, PerfectPredictionIsZero) {
  PerfectBatch pb;
  const auto out = total_loss(pb.view());
  EXPECT_EQ(out.num_pos, 1);
  EXPECT_NEAR(out.quality_targets[0], 1.0, 1e-15);
  EXPECT_NEAR(out.total, 0.0, 1e-12);
}

TEST(TotalLoss, QflOnlyWeighting) {
  PerfectBatch pb;
  pb.joint(0, 1) = 0.3;
  pb.joint(1, 0) = 0.6;
  const auto out = total_loss(pb.view(), {1, 0, 0});
  const double expect = qfl_from_prob(0.3, 0).loss + qfl_from_prob(0.6, 1.0).loss;
  EXPECT_NEAR(out.total, expect, 1e-12);
  EXPECT_NEAR(out.qfl_pos, qfl_from_prob(0.6, 1.0).loss, 1e-12);
}

TEST(TotalLoss, NoPositivesIsQflOnly) {
  PerfectBatch pb;
  pb.targets[0].cls = -1;
  pb.joint(1, 0) = 0.2;
  const auto out = total_loss(pb.view());
  EXPECT_EQ(out.num_pos, 0);
  EXPECT_EQ(out.dfl, 0.0);
  EXPECT_EQ(out.giou, 0.0);
  EXPECT_NEAR(out.total, qfl_from_prob(0.2, 0).loss, 1e-12);
}

TEST(TotalLoss, RejectsInconsistentShapes) {
  PerfectBatch pb;
  pb.probs = Eigen::MatrixXd::Zero(19, 2);
  EXPECT_THROW(total_loss(pb.view()), InvalidInput);
  EXPECT_THROW(validate(LossWeights{0, 0, 0}), InvalidInput);
}
