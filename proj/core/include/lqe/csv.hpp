#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lqe/analysis.hpp"
#include "lqe/trainer.hpp"

namespace lqe {

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
// Throws FormatError unless the whole field is a number.
double parse_double(std::string_view field);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Plain comma separated values without quoting; fields may not contain
// commas or newlines.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

// step,total,qfl,qfl_pos,dfl,giou,mean_pos_iou and wall_ms when requested.
CsvTable train_log_table(const TrainLog& log, bool include_timing = false);
TrainLog train_log_from_table(const CsvTable& table);

CsvTable scatter_table(const ScatterExport& scatter);
CsvTable dgqp_io_table(const std::vector<ScatterRow>& rows);
CsvTable pcc_table(const std::vector<PccReport>& reports);
CsvTable suppression_table(const std::vector<SuppressionRow>& rows);
CsvTable loss_curve_table(const LossCurveComparison& comparison);

}  // namespace lqe
