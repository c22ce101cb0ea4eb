#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqe/geometry.hpp"
#include "lqe/losses.hpp"
#include "lqe/model.hpp"
#include "lqe/synthgen.hpp"

namespace lqe {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  int steps = 2000;
  int batch_scenes = 2;
  double learning_rate = 0.2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Learning rate is multiplied by decay_factor at each listed step.
  std::vector<int> decay_steps;
  double decay_factor = 0.1;
  std::uint64_t seed = 0;
  LossWeights weights;
  QflConfig qfl;
  int log_every = 10;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);

// SGD with momentum (v = mu v + g + wd theta; theta -= lr v) or Adam with
// L2 weight decay folded into the gradient.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {}

  void apply(std::span<const ParamBlock> params, std::span<const ParamBlock> grads, double lr);
  void apply(HeadParams& params, HeadParams& grads, double lr);
  int steps_taken() const { return t_; }

 private:
  TrainConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  int t_ = 0;
};

struct StepMetrics {
  double total = 0.0;
  double qfl = 0.0;
  double qfl_pos = 0.0;
  double dfl = 0.0;
  double giou = 0.0;
  int num_pos = 0;
  double mean_pos_iou = 0.0;
};

// One optimizer update using exactly the gradient of total_loss.
StepMetrics step(HeadParams& params, Optimizer& optimizer, const Batch& batch,
                 const TrainConfig& config, double lr);

class SceneStream {
 public:
  virtual ~SceneStream() = default;
  virtual Scene next() = 0;
};

class SyntheticSceneStream : public SceneStream {
 public:
  explicit SyntheticSceneStream(SceneConfig config, std::uint64_t first_index = 0)
      : config_(config), embed_(embedding_matrix(config)), index_(first_index) {}
  Scene next() override { return generate(config_, index_++, embed_); }

 private:
  SceneConfig config_;
  Eigen::MatrixXd embed_;
  std::uint64_t index_;
};

// Cycles over a fixed list of scenes.
class FixtureSceneStream : public SceneStream {
 public:
  explicit FixtureSceneStream(std::vector<Scene> scenes);
  Scene next() override;

 private:
  std::vector<Scene> scenes_;
  std::size_t cursor_ = 0;
};

struct TrainRecord {
  int step = 0;
  double total = 0.0;
  double qfl = 0.0;
  double qfl_pos = 0.0;
  double dfl = 0.0;
  double giou = 0.0;
  double mean_pos_iou = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
};

struct TrainResult {
  HeadParams params;
  TrainLog log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, HeadParams last_good, TrainLog log)
      : std::runtime_error(what), last_good_(std::move(last_good)), log_(std::move(log)) {}
  const HeadParams& last_good() const { return last_good_; }
  const TrainLog& log() const { return log_; }

 private:
  HeadParams last_good_;
  TrainLog log_;
};

// Deterministic given (config, stream contents, head). Throws
// TrainingDiverged on a non-finite loss.
TrainResult train(const TrainConfig& config, SceneStream& scenes, const HeadConfig& head);
TrainResult train(const TrainConfig& config, SceneStream& scenes, HeadParams initial);

// Evaluation scenes use generator indices starting here so they never
// overlap the training stream.
inline constexpr std::uint64_t kEvalSceneOffset = 1'000'000'000ULL;

std::vector<Scene> eval_scenes(const SceneConfig& config, int count);

struct EvalCandidate {
  int scene = 0;
  int location = 0;
  int object = 0;
  int gt_class = 0;
  Box box;
  std::vector<double> joint_scores;
  // Predicted localization quality: I for the decomposed head, J at the
  // ground-truth class otherwise.
  double quality = 0.0;
  // C at the ground-truth class for the decomposed head, 1 otherwise, so
  // that confidence * quality is the ranking score.
  double confidence = 1.0;
  double real_iou = 0.0;
  std::array<double, 4> top1{};

  bool operator==(const EvalCandidate&) const = default;
};

struct EvalDetection {
  int scene = 0;
  int location = 0;
  int cls = 0;
  double score = 0.0;
  Box box;

  bool operator==(const EvalDetection&) const = default;
};

struct EvalReport {
  std::string variant;
  std::vector<EvalCandidate> candidates;  // positives only
  std::vector<EvalDetection> detections;  // post-NMS, all locations

  bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(const HeadParams& params, std::span<const Scene> scenes,
                    const NmsConfig& nms_config = {});

}  // namespace lqe
