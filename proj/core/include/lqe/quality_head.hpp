#pragma once

// Distribution-guided quality predictor (DGQP), the decomposed
// classification-IoU joint score J = C * I, and the composed-form baseline
// in which J comes straight out of a fully connected layer.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lqe/distribution.hpp"

namespace lqe {

class Rng;

enum class DgqpBias {
  kBoth,        // hidden and output biases
  kOutputOnly,  // scalar output bias only
  kNone,        // I = sigmoid(W2 relu(W1 F)) exactly
};

// Two-layer predictor: I = sigmoid(w2 . relu(w1 F + b1) + b2).
struct DgqpParams {
  int k = 4;
  int p = 64;
  bool include_variance = false;
  DgqpBias bias = DgqpBias::kBoth;

  Eigen::MatrixXd w1;  // p x input_dim
  Eigen::VectorXd b1;  // p
  Eigen::VectorXd w2;  // p
  double b2 = 0.0;

  int input_dim() const { return StatFeature::width(k, include_variance); }
  bool has_hidden_bias() const { return bias == DgqpBias::kBoth; }
  bool has_output_bias() const { return bias != DgqpBias::kNone; }
  std::int64_t parameter_count() const;

  // Zero weights and biases.
  static DgqpParams zeros(int k, int p, bool include_variance, DgqpBias bias = DgqpBias::kBoth);
  // Weights uniform in +-1/sqrt(fan_in); hidden bias likewise; b2 = 0.
  static DgqpParams init(int k, int p, bool include_variance, DgqpBias bias, Rng& rng);
};

std::int64_t dgqp_parameter_count(int k, int p, bool include_variance, DgqpBias bias);

struct DgqpCache {
  Eigen::VectorXd feature;
  Eigen::VectorXd hidden_pre;
  Eigen::VectorXd hidden;
  double logit = 0.0;
  double quality = 0.0;
  std::uint64_t params_fingerprint = 0;
};

struct DgqpGrads {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
  Eigen::VectorXd feature;
};

std::uint64_t fingerprint(const DgqpParams& params);

// Throws InvalidInput when the feature width does not match the params.
DgqpCache dgqp_forward(const DgqpParams& params, std::span<const double> feature);
DgqpCache dgqp_forward(const DgqpParams& params, const StatFeature& feature);

// Throws ContractViolation when `cache` was produced by different params.
DgqpGrads dgqp_backward(const DgqpParams& params, const DgqpCache& cache, double d_quality);

// Column-batched evaluation used by the dense head: features is
// input_dim x N, one location per column.
struct DgqpBatch {
  Eigen::MatrixXd hidden_pre;  // p x N
  Eigen::MatrixXd hidden;      // p x N
  Eigen::RowVectorXd quality;  // 1 x N
};

DgqpBatch dgqp_forward_batch(const DgqpParams& params, const Eigen::MatrixXd& features);

// Accumulates parameter gradients into the params-shaped `grads` and writes
// d features into `d_features`.
void dgqp_backward_batch(const DgqpParams& params, const DgqpBatch& batch,
                         const Eigen::MatrixXd& features, const Eigen::RowVectorXd& d_quality,
                         DgqpParams& grads, Eigen::MatrixXd& d_features);

struct JointScore {
  std::vector<double> c;
  double i = 0.0;
  std::vector<double> j;
};

// j = c * i elementwise. Throws InvalidInput for inputs outside [0, 1].
JointScore join_decomposed(std::span<const double> c, double i);

// Index of the largest joint score; ties resolve to the lowest index.
int argmax_class(std::span<const double> j);
int argmax_class(const JointScore& score);

// Composed form: joint logits = W [class_feature ; E] + b, where
// E = embed_w * stat + embed_b when embed_dim > 0 and E = stat otherwise.
struct ComposedHeadParams {
  int class_dim = 0;
  int stat_dim = 0;
  int embed_dim = 0;
  int num_classes = 0;

  Eigen::MatrixXd embed_w;  // embed_dim x stat_dim
  Eigen::VectorXd embed_b;  // embed_dim
  Eigen::MatrixXd joint_w;  // num_classes x (class_dim + enriched_dim)
  Eigen::VectorXd joint_b;  // num_classes

  int enriched_dim() const { return embed_dim > 0 ? embed_dim : stat_dim; }
  std::int64_t parameter_count() const;

  static ComposedHeadParams zeros(int class_dim, int stat_dim, int embed_dim, int num_classes);
  static ComposedHeadParams init(int class_dim, int stat_dim, int embed_dim, int num_classes,
                                 double prior_bias, Rng& rng);
};

Eigen::VectorXd composed_forward(const ComposedHeadParams& params,
                                 std::span<const double> class_feature,
                                 std::span<const double> stat_feature);

struct ComposedBatch {
  Eigen::MatrixXd enriched;  // enriched_dim x N
  Eigen::MatrixXd logits;    // num_classes x N
};

ComposedBatch composed_forward_batch(const ComposedHeadParams& params,
                                     const Eigen::MatrixXd& class_features,
                                     const Eigen::MatrixXd& stat_features);

void composed_backward_batch(const ComposedHeadParams& params, const ComposedBatch& batch,
                             const Eigen::MatrixXd& class_features,
                             const Eigen::MatrixXd& stat_features, const Eigen::MatrixXd& d_logits,
                             ComposedHeadParams& grads, Eigen::MatrixXd& d_class_features,
                             Eigen::MatrixXd& d_stat_features);

double sigmoid(double x);

}  // namespace lqe
