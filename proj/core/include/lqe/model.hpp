#pragma once

// Toy dense detection head: a one-hidden-layer backbone shared by a
// classification branch and a distribution (regression) branch, plus the
// quality path selected by HeadVariant. All gradients are hand-derived.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lqe/distribution.hpp"
#include "lqe/losses.hpp"
#include "lqe/quality_head.hpp"
#include "lqe/synthgen.hpp"

namespace lqe {

enum class HeadVariant {
  kGflv1,       // J = sigmoid(class logits)
  kDecomposed,  // J = sigmoid(class logits) * DGQP(stats)
  kComposed,    // J = sigmoid(FC([hidden ; embed(stats)]))
};

std::string_view to_string(HeadVariant variant);
// Accepts gflv1 / gflv2 / composed and the long forms gflv1_style,
// gflv2_decomposed, gflv2_composed. Throws InvalidArgument otherwise.
HeadVariant parse_variant(std::string_view name);

struct HeadConfig {
  HeadVariant variant = HeadVariant::kDecomposed;
  int feature_dim = 80;
  int hidden = 64;
  int num_classes = 3;
  BinGrid grid{0.0, 6.75, 16};
  double stride = 8.0;
  int k = 4;
  int p = 64;
  bool include_variance = false;
  DgqpBias dgqp_bias = DgqpBias::kBoth;
  int composed_dim = 64;
  bool detach_stats = false;
  double prior_prob = 0.01;

  int stat_dim() const { return StatFeature::width(k, include_variance); }
  int dist_rows() const { return 4 * grid.size(); }
  bool operator==(const HeadConfig&) const = default;
};

void validate(const HeadConfig& config);

// Head config matching a scene configuration (feature width, classes,
// grid, stride).
HeadConfig head_config_for(const SceneConfig& scene, HeadVariant variant);

// Column-major view of one parameter array.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
};

struct HeadParams {
  HeadConfig config;

  Eigen::MatrixXd w0;  // hidden x feature_dim
  Eigen::VectorXd b0;
  Eigen::MatrixXd wc;  // num_classes x hidden (gflv1, decomposed)
  Eigen::VectorXd bc;
  Eigen::MatrixXd wr;  // dist_rows x hidden
  Eigen::VectorXd br;
  DgqpParams dgqp;               // decomposed only
  ComposedHeadParams composed;   // composed only

  static HeadParams zeros(const HeadConfig& config);
  static HeadParams init(const HeadConfig& config, std::uint64_t seed);

  // Trainable blocks for the configured variant, in a fixed order.
  std::vector<ParamBlock> blocks();
  std::int64_t parameter_count() const;
};

// Parameters owned by the quality path (DGQP or composed FC) only.
std::int64_t quality_parameter_count(const HeadParams& params);

struct Batch {
  Eigen::MatrixXd features;  // feature_dim x N
  std::vector<Point> locations;
  std::vector<LocationTarget> targets;
  // (scene position in the batch, location index) per column.
  std::vector<std::pair<int, int>> origin;

  Eigen::Index size() const { return features.cols(); }
};

Batch make_batch(std::span<const Scene> scenes);

struct HeadForward {
  Eigen::MatrixXd hidden_pre;
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd cls_logits;   // gflv1 / decomposed
  Eigen::MatrixXd cls_prob;     // decomposed
  Eigen::MatrixXd dist_logits;
  Eigen::MatrixXd dist_probs;
  Eigen::MatrixXd stats;        // stat_dim x N
  std::vector<int> top_indices; // 4k per column
  DgqpBatch dgqp;
  ComposedBatch composed;
  Eigen::RowVectorXd quality;   // decomposed: I
  Eigen::MatrixXd loss_input;   // logits (gflv1, composed) or J (decomposed)
  Eigen::MatrixXd scores;       // J in [0, 1]
  bool loss_input_is_logit = true;
};

// `frozen_stats`, when given, replaces the computed statistic (used to
// check detached-statistic gradients by finite differences).
HeadForward forward(const HeadParams& params, const Eigen::MatrixXd& features,
                    const Eigen::MatrixXd* frozen_stats = nullptr);

LossBatch loss_batch(const HeadParams& params, const HeadForward& fwd, const Batch& batch,
                     std::span<const double> frozen_quality_targets = {});

// Accumulates d loss / d params into `grads`, which must come from
// HeadParams::zeros(params.config).
void backward(const HeadParams& params, const Eigen::MatrixXd& features, const HeadForward& fwd,
              const LossOutput& loss, HeadParams& grads);

struct LossAndGrad {
  LossOutput loss;
  HeadParams grads;
};

LossAndGrad loss_and_grad(const HeadParams& params, const Batch& batch, const LossWeights& weights,
                          const QflConfig& qfl, std::span<const double> frozen_quality_targets = {},
                          const Eigen::MatrixXd* frozen_stats = nullptr);

}  // namespace lqe
