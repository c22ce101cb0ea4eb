#pragma once

// Training objectives with analytic gradients: Quality Focal Loss on the
// joint score, Distribution Focal Loss on edge distributions, GIoU loss on
// the decoded box, and their positive-normalized weighted sum.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lqe/distribution.hpp"
#include "lqe/geometry.hpp"

namespace lqe {

struct QflConfig {
  double beta = 2.0;
};

struct LossWeights {
  double qfl = 1.0;
  double dfl = 0.25;
  double giou = 2.0;
};

void validate(const QflConfig& cfg);
void validate(const LossWeights& weights);

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;
};

// -|y - J|^beta ((1 - y) log(1 - J) + y log J) with J = sigmoid(logit).
// Gradient is w.r.t. the logit. Throws InvalidInput when y is outside [0, 1].
ScalarLoss qfl_from_logit(double logit, double y, const QflConfig& cfg = {});

// Same loss for a score already in (0, 1), e.g. J = C * I. Gradient is
// w.r.t. J. Probabilities are clamped to [1e-12, 1 - 1e-12] inside logs.
ScalarLoss qfl_from_prob(double j, double y, const QflConfig& cfg = {});

struct DflResult {
  double loss = 0.0;
  std::vector<double> grad_logits;
  bool clamped = false;
};

// Cross-entropy against the two-bin linear interpolation of `y`. Targets
// outside [y0, yn] are clamped and flagged.
DflResult dfl(const GeneralDistribution& dist, double y);

// Kernel form over raw probs; adds scale * d loss / d logits into grad_logits
// and returns the unscaled loss.
double dfl_accumulate(const BinGrid& grid, std::span<const double> probs, double y, double scale,
                      std::span<double> grad_logits, bool* clamped = nullptr);

struct GiouLoss {
  double loss = 0.0;
  std::array<double, 4> grad{};  // d loss / d (x1, y1, x2, y2) of pred
};

GiouLoss giou_loss(const Box& pred, const Box& gt);

// Per-location supervision: cls < 0 marks a negative.
struct LocationTarget {
  int cls = -1;
  Box box;

  bool positive() const { return cls >= 0; }
};

// One dense-prediction batch, one location per column.
struct LossBatch {
  BinGrid grid{0.0, 1.0, 1};
  double stride = 1.0;
  // num_classes x N; logits when joint_is_logit, otherwise scores in (0, 1).
  const Eigen::MatrixXd* joint = nullptr;
  bool joint_is_logit = true;
  // 4 * (n + 1) x N softmax probabilities, sides stacked l, r, t, b.
  const Eigen::MatrixXd* dist_probs = nullptr;
  std::span<const Point> locations;
  std::span<const LocationTarget> targets;
  // Frozen QFL targets per location; recomputed from predictions when empty.
  std::span<const double> quality_targets;
};

struct LossOutput {
  double total = 0.0;
  // Unweighted components, each normalized the same way total is.
  double qfl = 0.0;
  double qfl_pos = 0.0;  // gt-class QFL at positives only
  double dfl = 0.0;
  double giou = 0.0;
  int num_pos = 0;
  int dfl_clamped = 0;

  Eigen::MatrixXd d_joint;       // same shape as joint
  Eigen::MatrixXd d_dist_logits;  // same shape as dist_probs
  std::vector<double> quality_targets;
};

// Decoded box of column `col` from the expectation of each side.
Box decode_prediction(const LossBatch& batch, Eigen::Index col);

// IoU(decoded prediction, gt) at positives, 0 at negatives.
std::vector<double> compute_quality_targets(const LossBatch& batch);

// QFL over all locations and classes, DFL (mean over the four sides) and
// GIoU over positives, each normalized by max(num_pos, 1).
LossOutput total_loss(const LossBatch& batch, const LossWeights& weights = {},
                      const QflConfig& qfl_cfg = {});

}  // namespace lqe
