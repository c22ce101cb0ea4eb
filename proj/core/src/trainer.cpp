#include "lqe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lqe/errors.hpp"

namespace lqe {

void validate(const TrainConfig& c) {
  if (c.steps < 1) throw InvalidInput("train config: steps must be positive");
  if (c.batch_scenes < 1) throw InvalidInput("train config: batch_scenes must be positive");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw InvalidInput("train config: learning_rate must be >= 0");
  }
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) {
    throw InvalidInput("train config: momentum must lie in [0, 1)");
  }
  if (!(c.weight_decay >= 0.0)) throw InvalidInput("train config: weight_decay must be >= 0");
  if (c.log_every < 1) throw InvalidInput("train config: log_every must be positive");
  validate(c.weights);
  validate(c.qfl);
}

void Optimizer::apply(std::span<const ParamBlock> params, std::span<const ParamBlock> grads,
                      double lr) {
  if (params.size() != grads.size()) throw ContractViolation("optimizer: block count mismatch");
  if (first_.empty()) {
    for (const auto& b : params) {
      first_.emplace_back(b.values.size(), 0.0);
      if (config_.optimizer == OptimizerKind::kAdam) second_.emplace_back(b.values.size(), 0.0);
    }
  }
  ++t_;
  const double wd = config_.weight_decay;
  for (std::size_t bi = 0; bi < params.size(); ++bi) {
    auto theta = params[bi].values;
    const auto g = grads[bi].values;
    auto& m = first_[bi];
    if (theta.size() != g.size() || theta.size() != m.size()) {
      throw ContractViolation("optimizer: block size mismatch for " + params[bi].name);
    }
    if (config_.optimizer == OptimizerKind::kSgd) {
      const double mu = config_.momentum;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g[i] + wd * theta[i];
        m[i] = mu * m[i] + gi;
        theta[i] -= lr * m[i];
      }
    } else {
      auto& v = second_[bi];
      const double b1 = config_.adam_beta1;
      const double b2 = config_.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, t_);
      const double c2 = 1.0 - std::pow(b2, t_);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g[i] + wd * theta[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
      }
    }
  }
}

void Optimizer::apply(HeadParams& params, HeadParams& grads, double lr) {
  const auto p = params.blocks();
  const auto g = grads.blocks();
  apply(p, g, lr);
}

StepMetrics step(HeadParams& params, Optimizer& optimizer, const Batch& batch,
                 const TrainConfig& config, double lr) {
  LossAndGrad lg = loss_and_grad(params, batch, config.weights, config.qfl);
  StepMetrics m;
  m.total = lg.loss.total;
  m.qfl = lg.loss.qfl;
  m.qfl_pos = lg.loss.qfl_pos;
  m.dfl = lg.loss.dfl;
  m.giou = lg.loss.giou;
  m.num_pos = lg.loss.num_pos;
  double iou_sum = 0.0;
  for (std::size_t i = 0; i < lg.loss.quality_targets.size(); ++i) {
    if (batch.targets[i].positive()) iou_sum += lg.loss.quality_targets[i];
  }
  m.mean_pos_iou = m.num_pos > 0 ? iou_sum / m.num_pos : 0.0;
  if (std::isfinite(m.total)) optimizer.apply(params, lg.grads, lr);
  return m;
}

FixtureSceneStream::FixtureSceneStream(std::vector<Scene> scenes) : scenes_(std::move(scenes)) {
  if (scenes_.empty()) throw InvalidInput("FixtureSceneStream: no scenes");
}

Scene FixtureSceneStream::next() {
  Scene s = scenes_[cursor_];
  cursor_ = (cursor_ + 1) % scenes_.size();
  return s;
}

TrainResult train(const TrainConfig& config, SceneStream& scenes, const HeadConfig& head) {
  return train(config, scenes, HeadParams::init(head, config.seed));
}

TrainResult train(const TrainConfig& config, SceneStream& scenes, HeadParams initial) {
  validate(config);
  TrainResult result{std::move(initial), {}};
  Optimizer optimizer(config);
  double lr = config.learning_rate;
  const auto start = std::chrono::steady_clock::now();

  std::vector<Scene> batch_scenes;
  for (int s = 0; s < config.steps; ++s) {
    if (std::find(config.decay_steps.begin(), config.decay_steps.end(), s) !=
        config.decay_steps.end()) {
      lr *= config.decay_factor;
    }
    batch_scenes.clear();
    for (int b = 0; b < config.batch_scenes; ++b) batch_scenes.push_back(scenes.next());
    const Batch batch = make_batch(batch_scenes);

    HeadParams before = result.params;
    const StepMetrics m = step(result.params, optimizer, batch, config, lr);
    if (!std::isfinite(m.total)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(s) +
                                 ": non-finite loss",
                             std::move(before), result.log);
    }
    if (s % config.log_every == 0 || s == config.steps - 1) {
      TrainRecord r;
      r.step = s;
      r.total = m.total;
      r.qfl = m.qfl;
      r.qfl_pos = m.qfl_pos;
      r.dfl = m.dfl;
      r.giou = m.giou;
      r.mean_pos_iou = m.mean_pos_iou;
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
      result.log.records.push_back(r);
    }
  }
  return result;
}

std::vector<Scene> eval_scenes(const SceneConfig& config, int count) {
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  const Eigen::MatrixXd embed = embedding_matrix(config);
  for (int i = 0; i < count; ++i) {
    out.push_back(generate(config, kEvalSceneOffset + static_cast<std::uint64_t>(i), embed));
  }
  return out;
}

EvalReport evaluate(const HeadParams& params, std::span<const Scene> scenes,
                    const NmsConfig& nms_config) {
  EvalReport report;
  report.variant = std::string(to_string(params.config.variant));
  const int bins = params.config.grid.size();
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const Scene& scene = scenes[si];
    if (scene.config.feature_dim != params.config.feature_dim ||
        scene.config.num_classes != params.config.num_classes) {
      throw InvalidInput("evaluate: scene is incompatible with the checkpoint");
    }
    if (scene.num_locations() == 0) continue;
    const std::span<const Scene> one(&scene, 1);
    const Batch batch = make_batch(one);
    const HeadForward f = forward(params, batch.features);
    const LossBatch lb = loss_batch(params, f, batch);

    std::vector<DetectionCandidate> dets;
    dets.reserve(static_cast<std::size_t>(batch.size()));
    for (Eigen::Index col = 0; col < batch.size(); ++col) {
      DetectionCandidate d;
      d.location = batch.locations[static_cast<std::size_t>(col)];
      d.box = decode_prediction(lb, col);
      d.joint_scores.assign(f.scores.col(col).data(), f.scores.col(col).data() + f.scores.rows());
      const auto& target = batch.targets[static_cast<std::size_t>(col)];
      if (target.positive()) {
        EvalCandidate c;
        c.scene = static_cast<int>(si);
        c.location = static_cast<int>(col);
        c.object = scene.assignment[static_cast<std::size_t>(col)];
        c.gt_class = target.cls;
        c.box = d.box;
        c.joint_scores = d.joint_scores;
        c.real_iou = iou(d.box, target.box);
        c.quality = params.config.variant == HeadVariant::kDecomposed
                        ? f.quality(col)
                        : f.scores(target.cls, col);
        if (params.config.variant == HeadVariant::kDecomposed) {
          c.confidence = f.cls_prob(target.cls, col);
        }
        for (int s = 0; s < 4; ++s) {
          const auto seg = f.dist_probs.col(col).segment(s * bins, bins);
          c.top1[static_cast<std::size_t>(s)] = seg.maxCoeff();
        }
        d.real_iou = c.real_iou;
        report.candidates.push_back(std::move(c));
      }
      dets.push_back(std::move(d));
    }
    for (const auto& k : nms(dets, nms_config)) {
      report.detections.push_back({static_cast<int>(si), k.candidate, k.cls, k.score,
                                   dets[static_cast<std::size_t>(k.candidate)].box});
    }
  }
  return report;
}

}  // namespace lqe
