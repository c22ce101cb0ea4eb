#pragma once

// Central finite-difference checks of every hand-derived gradient.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lqe {

struct GradCheckConfig {
  std::uint64_t seed = 0;
  int trials = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Instances whose top-k boundary, relu inputs or box coordinates lie
  // closer than max(tie_gap, 4 * step) to a kink are redrawn.
  double tie_gap = 1e-6;
  // Negative control: corrupts every analytic gradient before comparison.
  bool sabotage = false;
};

struct SuiteResult {
  std::string name;
  int instances = 0;
  int redrawn = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<SuiteResult> suites;
  bool passed() const;
};

// ||a - n|| / max(||a||, ||n||, 1e-7).
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

// Suites: softmax_expectation, topkm, dgqp, qfl_logit, qfl_prob, dfl, giou,
// head_gflv1, head_decomposed, head_composed, head_detached. trials = 0
// yields vacuously passing suites.
GradCheckReport run_gradcheck(const GradCheckConfig& config);

}  // namespace lqe
