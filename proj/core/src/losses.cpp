#include "lqe/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lqe/errors.hpp"
#include "lqe/quality_head.hpp"

namespace lqe {

namespace {

constexpr double kLogClamp = 1e-12;

void check_target(double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw InvalidInput("qfl: target outside [0, 1]");
}

// d |J - y|^beta / d J
double modulator_grad(double diff, double beta) {
  if (beta == 0.0 || diff == 0.0) return 0.0;
  const double sign = diff > 0.0 ? 1.0 : -1.0;
  return beta * std::pow(std::abs(diff), beta - 1.0) * sign;
}

double safe_log(double p) { return std::log(std::clamp(p, kLogClamp, 1.0 - kLogClamp)); }

}  // namespace

void validate(const QflConfig& cfg) {
  if (!std::isfinite(cfg.beta) || cfg.beta < 0.0) throw InvalidInput("qfl: beta must be >= 0");
}

void validate(const LossWeights& w) {
  if (!(w.qfl >= 0.0 && w.dfl >= 0.0 && w.giou >= 0.0)) {
    throw InvalidInput("loss weights must be non-negative");
  }
  if (w.qfl + w.dfl + w.giou <= 0.0) throw InvalidInput("loss weights must not all be zero");
}

ScalarLoss qfl_from_logit(double logit, double y, const QflConfig& cfg) {
  check_target(y);
  const double j = sigmoid(logit);
  const double bce = std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
  const double diff = j - y;
  const double mod = cfg.beta == 0.0 ? 1.0 : std::pow(std::abs(diff), cfg.beta);
  ScalarLoss out;
  out.loss = mod * bce;
  out.grad = modulator_grad(diff, cfg.beta) * j * (1.0 - j) * bce + mod * diff;
  return out;
}

ScalarLoss qfl_from_prob(double j, double y, const QflConfig& cfg) {
  check_target(y);
  const double jc = std::clamp(j, kLogClamp, 1.0 - kLogClamp);
  const double bce = -(y * std::log(jc) + (1.0 - y) * std::log(1.0 - jc));
  const double diff = j - y;
  const double mod = cfg.beta == 0.0 ? 1.0 : std::pow(std::abs(diff), cfg.beta);
  ScalarLoss out;
  out.loss = mod * bce;
  out.grad = modulator_grad(diff, cfg.beta) * bce + mod * (-y / jc + (1.0 - y) / (1.0 - jc));
  return out;
}

double dfl_accumulate(const BinGrid& grid, std::span<const double> probs, double y, double scale,
                      std::span<double> grad_logits, bool* clamped) {
  const double yc = std::clamp(y, grid.y0(), grid.yn());
  if (clamped != nullptr) *clamped = yc != y;
  const double t = (yc - grid.y0()) / grid.delta();
  const int left = std::min(static_cast<int>(std::floor(t)), grid.n() - 1);
  const double w_left = (left + 1) - t;
  const double w_right = t - left;
  const auto li = static_cast<std::size_t>(left);
  const double loss = -(w_left * safe_log(probs[li]) + w_right * safe_log(probs[li + 1]));
  // Softmax cross-entropy against a soft target summing to one: p - target.
  for (std::size_t i = 0; i < probs.size(); ++i) grad_logits[i] += scale * probs[i];
  grad_logits[li] -= scale * w_left;
  grad_logits[li + 1] -= scale * w_right;
  return loss;
}

DflResult dfl(const GeneralDistribution& dist, double y) {
  DflResult out;
  out.grad_logits.assign(dist.probs().size(), 0.0);
  out.loss = dfl_accumulate(dist.grid(), dist.probs(), y, 1.0, out.grad_logits, &out.clamped);
  return out;
}

GiouLoss giou_loss(const Box& pred, const Box& gt) {
  const auto g = giou_with_grad(pred, gt);
  GiouLoss out;
  out.loss = 1.0 - g.value;
  for (std::size_t i = 0; i < 4; ++i) out.grad[i] = -g.grad[i];
  return out;
}

Box decode_prediction(const LossBatch& batch, Eigen::Index col) {
  const int bins = batch.grid.size();
  std::array<double, 4> off{};
  for (int s = 0; s < 4; ++s) {
    const double* p = batch.dist_probs->data() + col * batch.dist_probs->rows() + s * bins;
    off[static_cast<std::size_t>(s)] =
        expectation(batch.grid, std::span<const double>(p, static_cast<std::size_t>(bins))) *
        batch.stride;
  }
  return decode(batch.locations[static_cast<std::size_t>(col)],
                SideOffsets{off[0], off[1], off[2], off[3]});
}

std::vector<double> compute_quality_targets(const LossBatch& batch) {
  std::vector<double> out(batch.targets.size(), 0.0);
  for (std::size_t col = 0; col < batch.targets.size(); ++col) {
    if (!batch.targets[col].positive()) continue;
    out[col] = iou(decode_prediction(batch, static_cast<Eigen::Index>(col)), batch.targets[col].box);
  }
  return out;
}

LossOutput total_loss(const LossBatch& batch, const LossWeights& weights,
                      const QflConfig& qfl_cfg) {
  validate(weights);
  validate(qfl_cfg);
  if (batch.joint == nullptr || batch.dist_probs == nullptr) {
    throw InvalidInput("total_loss: missing prediction matrices");
  }
  const Eigen::MatrixXd& joint = *batch.joint;
  const Eigen::MatrixXd& probs = *batch.dist_probs;
  const auto num = static_cast<Eigen::Index>(batch.targets.size());
  const int bins = batch.grid.size();
  if (num == 0) throw InvalidInput("total_loss: empty batch");
  if (joint.cols() != num || probs.cols() != num ||
      static_cast<Eigen::Index>(batch.locations.size()) != num || probs.rows() != 4 * bins) {
    throw InvalidInput("total_loss: batch shapes are inconsistent");
  }
  if (!batch.quality_targets.empty() &&
      static_cast<Eigen::Index>(batch.quality_targets.size()) != num) {
    throw InvalidInput("total_loss: quality target count mismatch");
  }

  LossOutput out;
  out.quality_targets = batch.quality_targets.empty()
                            ? compute_quality_targets(batch)
                            : std::vector<double>(batch.quality_targets.begin(),
                                                  batch.quality_targets.end());
  for (const auto& t : batch.targets) out.num_pos += t.positive() ? 1 : 0;
  const double norm = out.num_pos > 0 ? static_cast<double>(out.num_pos) : 1.0;

  out.d_joint = Eigen::MatrixXd::Zero(joint.rows(), num);
  out.d_dist_logits = Eigen::MatrixXd::Zero(probs.rows(), num);

  double qfl_sum = 0.0;
  double qfl_pos_sum = 0.0;
  double dfl_sum = 0.0;
  double giou_sum = 0.0;
  const double qfl_scale = weights.qfl / norm;
  const double dfl_scale = weights.dfl / norm / 4.0;
  const double giou_scale = weights.giou / norm;

  std::vector<double> d_probs(static_cast<std::size_t>(bins));
  std::vector<double> d_logits(static_cast<std::size_t>(bins));

  for (Eigen::Index col = 0; col < num; ++col) {
    const auto& target = batch.targets[static_cast<std::size_t>(col)];
    for (Eigen::Index c = 0; c < joint.rows(); ++c) {
      const double y = (target.positive() && c == target.cls)
                           ? out.quality_targets[static_cast<std::size_t>(col)]
                           : 0.0;
      const ScalarLoss q = batch.joint_is_logit ? qfl_from_logit(joint(c, col), y, qfl_cfg)
                                                : qfl_from_prob(joint(c, col), y, qfl_cfg);
      qfl_sum += q.loss;
      if (target.positive() && c == target.cls) qfl_pos_sum += q.loss;
      out.d_joint(c, col) = qfl_scale * q.grad;
    }
    if (!target.positive()) continue;

    const Point loc = batch.locations[static_cast<std::size_t>(col)];
    const SideOffsets gt_off = encode(target.box, loc);
    const auto gt_sides = gt_off.as_array();
    const Box pred = decode_prediction(batch, col);
    const GiouLoss gl = giou_loss(pred, target.box);
    giou_sum += gl.loss;
    // d box / d side offset: x1 = x - l, x2 = x + r, y1 = y - t, y2 = y + b.
    const std::array<double, 4> d_offset{-gl.grad[0], gl.grad[2], -gl.grad[1], gl.grad[3]};

    for (int s = 0; s < 4; ++s) {
      const auto rows = static_cast<Eigen::Index>(s) * bins;
      const std::span<const double> p(probs.data() + col * probs.rows() + rows,
                                      static_cast<std::size_t>(bins));
      std::span<double> g(out.d_dist_logits.data() + col * probs.rows() + rows,
                          static_cast<std::size_t>(bins));
      bool clamped = false;
      dfl_sum += dfl_accumulate(batch.grid, p, gt_sides[static_cast<std::size_t>(s)] / batch.stride,
                                dfl_scale, g, &clamped) /
                 4.0;
      out.dfl_clamped += clamped ? 1 : 0;

      const double d_side = giou_scale * d_offset[static_cast<std::size_t>(s)] * batch.stride;
      if (d_side != 0.0) {
        for (int i = 0; i < bins; ++i) {
          d_probs[static_cast<std::size_t>(i)] = d_side * batch.grid.bin(i);
        }
        softmax_backward(p, d_probs, d_logits);
        for (int i = 0; i < bins; ++i) g[static_cast<std::size_t>(i)] += d_logits[static_cast<std::size_t>(i)];
      }
    }
  }

  out.qfl = qfl_sum / norm;
  out.qfl_pos = qfl_pos_sum / norm;
  out.dfl = dfl_sum / norm;
  out.giou = giou_sum / norm;
  out.total = weights.qfl * out.qfl + weights.dfl * out.dfl + weights.giou * out.giou;
  return out;
}

}  // namespace lqe
