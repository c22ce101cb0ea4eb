#pragma once

// Synthetic dense-detection scenes. Each location inside an object carries a
// feature vector x = A u + noise_sigma * eps with a fixed random embedding A.
// The latent u stacks
//   - the four observed side offsets (normalized by the grid range),
//   - per side, an edge-evidence bump over the bin centers proportional to
//     exp(-d^2 / 2), d = (y_i - observed) / width, normalized to unit mass,
//     with width = code_width * (1 + blur_widen * s) bins,
//   - the class one-hot.
// Objects flagged as ambiguous get per-location, per-side blur levels
// s ~ U[0, 1]; the observed offset of that side is the true one displaced
// by +-blur_sigma * s stride units (random sign), and its evidence bump widens.
// Only positive locations carry object evidence; every other location has
// u = 0.

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "lqe/distribution.hpp"
#include "lqe/geometry.hpp"

namespace lqe {

struct SceneConfig {
  int image_width = 128;
  int image_height = 128;
  int stride = 8;
  int min_objects = 1;
  int max_objects = 4;
  int num_classes = 3;
  double ambiguity = 0.5;
  int feature_dim = 80;
  double noise_sigma = 0.01;
  double blur_sigma = 1.0;  // stride units
  double code_width = 1.0;  // bins
  double blur_widen = 2.0;
  double min_size = 24.0;
  double max_size = 72.0;
  double max_overlap_iou = 0.3;
  std::uint64_t seed = 0;

  bool operator==(const SceneConfig&) const = default;
};

// Throws InvalidInput naming the offending field.
void validate(const SceneConfig& config);

// Width of the latent vector u.
int latent_dim(const SceneConfig& config);

// Bin grid in stride units covering the largest positive offset
// (0.75 * max_size / stride), n = 16.
BinGrid default_grid(const SceneConfig& config, int n = 16);

struct SceneObject {
  Box box;
  int cls = 0;
  bool ambiguous = false;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  SceneConfig config;
  std::uint64_t index = 0;
  int cols = 0;
  int rows = 0;
  std::vector<SceneObject> objects;
  std::vector<Point> locations;             // row-major grid centers
  std::vector<int> assignment;              // object index or -1
  std::vector<std::array<double, 4>> blur;  // per-location side blur in [0, 1]
  Eigen::MatrixXd features;                 // feature_dim x locations

  int num_locations() const { return static_cast<int>(locations.size()); }
  int num_positives() const;
  // Evidence noise standard deviation (stride units) of one side.
  double evidence_sd(int location, int side) const;
};

// Fixed embedding A (feature_dim x latent_dim) for a configuration seed.
Eigen::MatrixXd embedding_matrix(const SceneConfig& config);

// Center-region rule: a location is positive for a box when it lies within
// the box's central region scaled by `center_ratio`; overlaps go to the
// smaller box (lowest index on equal area).
std::vector<int> assign(std::span<const Point> locations, std::span<const Box> boxes,
                        double center_ratio = 0.5);

// Pure function of (config, index). Throws GenerationError when objects
// cannot be placed within the retry budget.
Scene generate(const SceneConfig& config, std::uint64_t index = 0);
// Same, with a precomputed embedding_matrix(config).
Scene generate(const SceneConfig& config, std::uint64_t index, const Eigen::MatrixXd& embed);

}  // namespace lqe
