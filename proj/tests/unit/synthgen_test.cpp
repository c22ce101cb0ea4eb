#include <cstring>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "lqe/errors.hpp"
#include "lqe/synthgen.hpp"

using namespace lqe;

TEST(Generate, SameSeedIsBitwiseIdentical) {
  SceneConfig cfg;
  cfg.seed = 17;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const Scene a = generate(cfg, i), b = generate(cfg, i);
    EXPECT_EQ(a.objects, b.objects);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.blur, b.blur);
    ASSERT_EQ(a.features.size(), b.features.size());
    EXPECT_EQ(std::memcmp(a.features.data(), b.features.data(), sizeof(double) * a.features.size()), 0);
  }
  EXPECT_NE(generate(cfg, 0).objects, generate(cfg, 1).objects);
}

TEST(Generate, PositivesInsideTheirBox) {
  SceneConfig cfg;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const Scene s = generate(cfg, i);
    std::vector<int> hits(s.objects.size(), 0);
    for (int li = 0; li < s.num_locations(); ++li) {
      const int a = s.assignment[static_cast<std::size_t>(li)];
      if (a < 0) continue;
      EXPECT_TRUE(s.objects[static_cast<std::size_t>(a)].box.contains(s.locations[static_cast<std::size_t>(li)]));
      ++hits[static_cast<std::size_t>(a)];
    }
    for (int h : hits) EXPECT_GT(h, 0);
  }
}

TEST(Generate, OnlyPositivesCarryEvidence) {
  SceneConfig cfg;
  cfg.noise_sigma = 0.0;
  const Scene s = generate(cfg, 3);
  for (int li = 0; li < s.num_locations(); ++li) {
    const bool pos = s.assignment[static_cast<std::size_t>(li)] >= 0;
    EXPECT_EQ(s.features.col(li).isZero(0.0), !pos);
  }
}

TEST(Generate, NoiseFreeFeaturesDecodeOffsetsExactly) {
  SceneConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.ambiguity = 0.0;
  const Eigen::MatrixXd a = embedding_matrix(cfg);
  const auto solver = a.colPivHouseholderQr();
  ASSERT_EQ(solver.rank(), a.cols());
  const BinGrid grid = default_grid(cfg);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Scene s = generate(cfg, i, a);
    for (int li = 0; li < s.num_locations(); ++li) {
      const int owner = s.assignment[static_cast<std::size_t>(li)];
      if (owner < 0) continue;
      const Eigen::VectorXd u = solver.solve(s.features.col(li));
      const auto truth = encode(s.objects[static_cast<std::size_t>(owner)].box,
                                s.locations[static_cast<std::size_t>(li)]).as_array();
      for (int side = 0; side < 4; ++side) {
        EXPECT_NEAR(u(side) * grid.yn() * cfg.stride, truth[static_cast<std::size_t>(side)], 1e-9);
      }
    }
  }
}

TEST(Generate, AmbiguityIncreasesTargetNoise) {
  double prev = -1.0;
  for (double amb : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    SceneConfig cfg;
    cfg.ambiguity = amb;
    double sum = 0.0;
    int objects = 0, sides = 0;
    for (std::uint64_t i = 0; objects < 1000; ++i) {
      const Scene s = generate(cfg, i);
      objects += static_cast<int>(s.objects.size());
      for (int li = 0; li < s.num_locations(); ++li) {
        if (s.assignment[static_cast<std::size_t>(li)] < 0) continue;
        for (int side = 0; side < 4; ++side, ++sides) sum += s.evidence_sd(li, side);
      }
    }
    const double mean = sum / sides;
    EXPECT_GT(mean, prev) << "ambiguity " << amb;
    prev = mean;
  }
}

TEST(Generate, RejectsInvalidConfig) {
  SceneConfig cfg;
  cfg.image_width = 130;
  EXPECT_THROW(generate(cfg), InvalidInput);
  cfg = SceneConfig{};
  cfg.feature_dim = 10;
  EXPECT_THROW(generate(cfg), InvalidInput);
  cfg = SceneConfig{};
  cfg.ambiguity = 1.5;
  EXPECT_THROW(generate(cfg), InvalidInput);
}

TEST(Generate, InfeasiblePlacement) {
  SceneConfig cfg;
  cfg.min_objects = 30;
  cfg.max_objects = 30;
  cfg.min_size = 64;
  cfg.max_size = 72;
  cfg.max_overlap_iou = 0.0;
  EXPECT_THROW(generate(cfg), GenerationError);
}

TEST(Assign, CenterAndOutside) {
  const std::vector<Box> boxes{{0, 0, 40, 40}};
  const std::vector<Point> pts{{20, 20}, {100, 100}, {2, 2}};
  EXPECT_EQ(assign(pts, boxes), (std::vector<int>{0, -1, -1}));
}

TEST(Assign, NestedPrefersSmaller) {
  const std::vector<Box> boxes{{0, 0, 80, 80}, {30, 30, 50, 50}};
  std::vector<Point> pts;
  for (double x = 0.5; x < 80; x += 1.0) {
    for (double y = 0.5; y < 80; y += 1.0) pts.push_back({x, y});
  }
  const auto got = assign(pts, boxes);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // brute force: smallest-area box whose central half contains the point
    int expect = -1;
    double best_area = 1e300;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const Point c = boxes[b].center();
      if (std::abs(pts[i].x - c.x) <= 0.25 * boxes[b].width() &&
          std::abs(pts[i].y - c.y) <= 0.25 * boxes[b].height() && boxes[b].area() < best_area) {
        expect = static_cast<int>(b);
        best_area = boxes[b].area();
      }
    }
    EXPECT_EQ(got[i], expect);
  }
  EXPECT_EQ(assign(std::vector<Point>{{40, 40}}, boxes)[0], 1);
}
