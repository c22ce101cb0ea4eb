#include "lqe/csv.hpp"

#include <charconv>
#include <cmath>

#include "lqe/errors.hpp"

namespace lqe {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view field) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError("not a number: '" + std::string(field) + "'");
  }
  return v;
}

namespace {

int parse_int(std::string_view field) {
  int v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError("not an integer: '" + std::string(field) + "'");
  }
  return v;
}

void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find_first_of(",\n\r") != std::string::npos) {
      throw InvalidInput("csv: field contains a separator: '" + fields[i] + "'");
    }
    if (i > 0) out += ',';
    out += fields[i];
  }
  out += '\n';
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw InvalidInput("csv: row width differs from header");
    append_row(out, row);
  }
  return out;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  bool first = true;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.empty()) continue;
    auto fields = split(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != table.header.size()) throw FormatError("csv: ragged row");
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw FormatError("csv: missing header");
  return table;
}

CsvTable train_log_table(const TrainLog& log, bool include_timing) {
  CsvTable t;
  t.header = {"step", "total", "qfl", "qfl_pos", "dfl", "giou", "mean_pos_iou"};
  if (include_timing) t.header.push_back("wall_ms");
  for (const auto& r : log.records) {
    std::vector<std::string> row = {std::to_string(r.step), format_double(r.total),
                                    format_double(r.qfl), format_double(r.qfl_pos),
                                    format_double(r.dfl), format_double(r.giou),
                                    format_double(r.mean_pos_iou)};
    if (include_timing) row.push_back(format_double(r.wall_ms));
    t.rows.push_back(std::move(row));
  }
  return t;
}

TrainLog train_log_from_table(const CsvTable& table) {
  const std::vector<std::string> base = {"step", "total", "qfl", "qfl_pos",
                                         "dfl", "giou", "mean_pos_iou"};
  if (table.header.size() < base.size() ||
      !std::equal(base.begin(), base.end(), table.header.begin())) {
    throw FormatError("train log: unexpected header");
  }
  const bool timing = table.header.size() == base.size() + 1 && table.header.back() == "wall_ms";
  if (table.header.size() != base.size() && !timing) throw FormatError("train log: unexpected header");
  TrainLog log;
  for (const auto& row : table.rows) {
    TrainRecord r;
    r.step = parse_int(row[0]);
    r.total = parse_double(row[1]);
    r.qfl = parse_double(row[2]);
    r.qfl_pos = parse_double(row[3]);
    r.dfl = parse_double(row[4]);
    r.giou = parse_double(row[5]);
    r.mean_pos_iou = parse_double(row[6]);
    if (timing) r.wall_ms = parse_double(row[7]);
    log.records.push_back(r);
  }
  return log;
}

CsvTable scatter_table(const ScatterExport& scatter) {
  CsvTable t;
  t.header = {scatter.kind == ScatterKind::kTop1 ? "top1_mean" : "predicted_quality", "real_iou"};
  for (const auto& r : scatter.rows) t.rows.push_back({format_double(r.x), format_double(r.real_iou)});
  return t;
}

CsvTable dgqp_io_table(const std::vector<ScatterRow>& rows) {
  CsvTable t;
  t.header = {"top1_mean", "predicted_quality"};
  for (const auto& r : rows) t.rows.push_back({format_double(r.x), format_double(r.real_iou)});
  return t;
}

CsvTable pcc_table(const std::vector<PccReport>& reports) {
  CsvTable t;
  t.header = {"variant", "pcc", "samples", "seeds"};
  for (const auto& r : reports) {
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
      if (i > 0) seeds += ' ';
      seeds += std::to_string(r.seeds[i]);
    }
    t.rows.push_back({r.variant, format_double(r.pcc), std::to_string(r.samples), seeds});
  }
  return t;
}

CsvTable suppression_table(const std::vector<SuppressionRow>& rows) {
  CsvTable t;
  t.header = {"corruption", "retention"};
  for (const auto& r : rows) t.rows.push_back({format_double(r.corruption), format_double(r.retention)});
  return t;
}

CsvTable loss_curve_table(const LossCurveComparison& comparison) {
  CsvTable t;
  const std::string c(to_string(comparison.component));
  t.header = {"step", "first_" + c, "second_" + c};
  for (const auto& r : comparison.rows) {
    t.rows.push_back({std::to_string(r.step), format_double(r.first), format_double(r.second)});
  }
  return t;
}

}  // namespace lqe
