#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lqe/geometry.hpp"
#include "lqe/trainer.hpp"

namespace lqe {

// Pearson coefficient. Needs equal lengths >= 3; throws UndefinedCorrelation
// when either series is constant.
double pcc(std::span<const double> x, std::span<const double> y);

// Pearson coefficient of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct PccReport {
  std::string variant;
  double pcc = 0.0;
  int samples = 0;
  std::vector<std::uint64_t> seeds;
};

// PCC(predicted quality, real IoU) over the positive candidates.
PccReport pcc_report(const EvalReport& report, std::vector<std::uint64_t> seeds = {});

enum class ScatterKind { kTop1, kQuality };

struct ScatterRow {
  double x = 0.0;
  double real_iou = 0.0;
};

struct ScatterExport {
  ScatterKind kind = ScatterKind::kTop1;
  std::vector<ScatterRow> rows;
};

// Mean over the four sides of the largest bin probability.
double top1_mean(const EvalCandidate& candidate);

// One row per positive candidate: mean Top-1 or predicted quality against
// real IoU.
ScatterExport sharpness_scatter(const EvalReport& report, ScatterKind kind = ScatterKind::kTop1);

// Rows of (mean Top-1, predicted quality) for the DGQP input/output view.
std::vector<ScatterRow> dgqp_io_scatter(const EvalReport& report);

struct SuppressionCandidate {
  int scene = 0;
  int object = 0;
  int cls = 0;
  Box box;
  double real_iou = 0.0;
  double confidence = 1.0;
  double quality = 0.0;
};

std::vector<SuppressionCandidate> suppression_candidates(const EvalReport& report);

// confidence := 1 and quality := real IoU.
std::vector<SuppressionCandidate> with_oracle_scores(std::vector<SuppressionCandidate> candidates);

struct SuppressionConfig {
  double retention_tolerance = 0.02;
  double iou_threshold = 0.6;
};

// Fraction of objects whose best surviving candidate after class-wise NMS is
// within the tolerance of the best candidate before NMS. Scores are
// confidence * quality; every candidate is eligible.
double retention(std::span<const SuppressionCandidate> candidates,
                 std::span<const double> scores, const SuppressionConfig& config = {});

struct SuppressionRow {
  double corruption = 0.0;
  double retention = 0.0;
};

// For each corruption level sigma the quality becomes
// clamp(quality + sigma * eps, 0, 1). The draws eps and the tie-breaking
// candidate order are shared across levels for a given seed.
std::vector<SuppressionRow> suppression_study(std::span<const SuppressionCandidate> candidates,
                                              std::span<const double> levels,
                                              std::uint64_t seed,
                                              const SuppressionConfig& config = {});

// Per-level mean of suppression_study over seeds first_seed .. first_seed + seeds - 1.
std::vector<SuppressionRow> mean_suppression_study(std::span<const SuppressionCandidate> candidates,
                                                   std::span<const double> levels,
                                                   std::uint64_t first_seed, int seeds,
                                                   const SuppressionConfig& config = {});

// Mean retention over `trials` uniformly random rankings.
double random_ranking_retention(std::span<const SuppressionCandidate> candidates, int trials,
                                std::uint64_t seed, const SuppressionConfig& config = {});

enum class LossComponent { kTotal, kQfl, kQflPos, kDfl, kGiou };

std::string_view to_string(LossComponent component);
LossComponent parse_loss_component(std::string_view name);
double component_value(const TrainRecord& record, LossComponent component);

// Mean of the last max(1, n / 10) records.
double final_loss(const TrainLog& log, LossComponent component);

struct LossCurveRow {
  int step = 0;
  double first = 0.0;
  double second = 0.0;
};

struct LossCurveComparison {
  LossComponent component = LossComponent::kQflPos;
  std::vector<LossCurveRow> rows;
  double final_gap = 0.0;  // final(first) - final(second)
  double auc_gap = 0.0;    // trapezoid area of first - second over steps
};

// Logs must have the same steps; throws InvalidInput otherwise.
LossCurveComparison loss_curve_compare(const TrainLog& first, const TrainLog& second,
                                       LossComponent component = LossComponent::kQflPos);

}  // namespace lqe
