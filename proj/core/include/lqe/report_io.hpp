#pragma once

// JSON form of an EvalReport ("lqe-eval-report", version 1).

#include <string>
#include <string_view>

#include "lqe/trainer.hpp"

namespace lqe {

inline constexpr int kEvalReportVersion = 1;

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(std::string_view text);

}  // namespace lqe
