#include "lqe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>

#include "lqe/errors.hpp"
#include "lqe/rng.hpp"

namespace lqe {

double pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("pcc: series lengths differ");
  if (x.size() < 3) throw InvalidInput("pcc: need at least 3 samples");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InvalidInput("pcc: non-finite value");
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pcc: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("spearman: series lengths differ");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pcc(rx, ry);
}

PccReport pcc_report(const EvalReport& report, std::vector<std::uint64_t> seeds) {
  std::vector<double> q;
  std::vector<double> r;
  for (const auto& c : report.candidates) {
    q.push_back(c.quality);
    r.push_back(c.real_iou);
  }
  PccReport out;
  out.variant = report.variant;
  out.pcc = pcc(q, r);
  out.samples = static_cast<int>(q.size());
  out.seeds = std::move(seeds);
  return out;
}

double top1_mean(const EvalCandidate& candidate) {
  return std::accumulate(candidate.top1.begin(), candidate.top1.end(), 0.0) / 4.0;
}

ScatterExport sharpness_scatter(const EvalReport& report, ScatterKind kind) {
  ScatterExport out;
  out.kind = kind;
  out.rows.reserve(report.candidates.size());
  for (const auto& c : report.candidates) {
    out.rows.push_back({kind == ScatterKind::kTop1 ? top1_mean(c) : c.quality, c.real_iou});
  }
  return out;
}

std::vector<ScatterRow> dgqp_io_scatter(const EvalReport& report) {
  std::vector<ScatterRow> rows;
  rows.reserve(report.candidates.size());
  for (const auto& c : report.candidates) rows.push_back({top1_mean(c), c.quality});
  return rows;
}

std::vector<SuppressionCandidate> suppression_candidates(const EvalReport& report) {
  std::vector<SuppressionCandidate> out;
  out.reserve(report.candidates.size());
  for (const auto& c : report.candidates) {
    out.push_back({c.scene, c.object, c.gt_class, c.box, c.real_iou, c.confidence, c.quality});
  }
  return out;
}

std::vector<SuppressionCandidate> with_oracle_scores(std::vector<SuppressionCandidate> candidates) {
  for (auto& c : candidates) {
    c.confidence = 1.0;
    c.quality = c.real_iou;
  }
  return candidates;
}

double retention(std::span<const SuppressionCandidate> candidates, std::span<const double> scores,
                 const SuppressionConfig& config) {
  if (scores.size() != candidates.size()) throw InvalidInput("retention: one score per candidate");
  if (candidates.empty()) throw InvalidInput("retention: no candidates");

  std::map<int, std::vector<std::size_t>> by_scene;
  for (std::size_t i = 0; i < candidates.size(); ++i) by_scene[candidates[i].scene].push_back(i);

  const NmsConfig nms_config{config.iou_threshold, -1.0, true};
  int objects = 0;
  int retained = 0;
  std::vector<DetectionCandidate> dets;
  for (const auto& [scene, members] : by_scene) {
    int num_classes = 0;
    for (std::size_t i : members) num_classes = std::max(num_classes, candidates[i].cls + 1);
    dets.clear();
    for (std::size_t i : members) {
      DetectionCandidate d;
      d.box = candidates[i].box;
      d.joint_scores.assign(static_cast<std::size_t>(num_classes), -2.0);
      d.joint_scores[static_cast<std::size_t>(candidates[i].cls)] = scores[i];
      dets.push_back(std::move(d));
    }
    std::vector<char> survived(members.size(), 0);
    for (const auto& k : nms(dets, nms_config)) {
      if (k.cls == candidates[members[static_cast<std::size_t>(k.candidate)]].cls) {
        survived[static_cast<std::size_t>(k.candidate)] = 1;
      }
    }
    std::map<int, std::pair<double, double>> best;  // object -> (before, after)
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto& c = candidates[members[m]];
      auto [it, inserted] = best.try_emplace(c.object, -1.0, -1.0);
      it->second.first = std::max(it->second.first, c.real_iou);
      if (survived[m]) it->second.second = std::max(it->second.second, c.real_iou);
    }
    for (const auto& [object, pair] : best) {
      ++objects;
      if (pair.second >= pair.first - config.retention_tolerance) ++retained;
    }
  }
  return static_cast<double>(retained) / static_cast<double>(objects);
}

std::vector<SuppressionRow> suppression_study(std::span<const SuppressionCandidate> candidates,
                                              std::span<const double> levels,
                                              std::uint64_t seed,
                                              const SuppressionConfig& config) {
  for (double sigma : levels) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw InvalidArgument("suppression_study: corruption levels must be finite and >= 0");
    }
  }
  Rng rng(seed);
  // Clamping creates exact ties; a per-seed shuffle makes NMS break them at random.
  std::vector<SuppressionCandidate> shuffled(candidates.begin(), candidates.end());
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(shuffled[i - 1], shuffled[j]);
  }
  std::vector<double> eps(shuffled.size());
  for (double& e : eps) e = rng.normal();
  std::vector<SuppressionRow> rows;
  std::vector<double> scores(shuffled.size());
  for (double sigma : levels) {
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
      const double q = std::clamp(shuffled[i].quality + sigma * eps[i], 0.0, 1.0);
      scores[i] = shuffled[i].confidence * q;
    }
    rows.push_back({sigma, retention(shuffled, scores, config)});
  }
  return rows;
}

std::vector<SuppressionRow> mean_suppression_study(std::span<const SuppressionCandidate> candidates,
                                                   std::span<const double> levels,
                                                   std::uint64_t first_seed, int seeds,
                                                   const SuppressionConfig& config) {
  if (seeds < 1) throw InvalidArgument("mean_suppression_study: seeds must be positive");
  std::vector<SuppressionRow> mean;
  for (double sigma : levels) mean.push_back({sigma, 0.0});
  for (int s = 0; s < seeds; ++s) {
    const auto rows =
        suppression_study(candidates, levels, first_seed + static_cast<std::uint64_t>(s), config);
    for (std::size_t i = 0; i < rows.size(); ++i) mean[i].retention += rows[i].retention;
  }
  for (auto& r : mean) r.retention /= seeds;
  return mean;
}

double random_ranking_retention(std::span<const SuppressionCandidate> candidates, int trials,
                                std::uint64_t seed, const SuppressionConfig& config) {
  if (trials < 1) throw InvalidArgument("random_ranking_retention: trials must be positive");
  Rng rng(seed);
  std::vector<double> scores(candidates.size());
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    for (double& s : scores) s = rng.uniform();
    sum += retention(candidates, scores, config);
  }
  return sum / trials;
}

std::string_view to_string(LossComponent component) {
  switch (component) {
    case LossComponent::kTotal:
      return "total";
    case LossComponent::kQfl:
      return "qfl";
    case LossComponent::kQflPos:
      return "qfl_pos";
    case LossComponent::kDfl:
      return "dfl";
    case LossComponent::kGiou:
      return "giou";
  }
  return "total";
}

LossComponent parse_loss_component(std::string_view name) {
  for (auto c : {LossComponent::kTotal, LossComponent::kQfl, LossComponent::kQflPos,
                 LossComponent::kDfl, LossComponent::kGiou}) {
    if (to_string(c) == name) return c;
  }
  throw InvalidArgument("unknown loss component '" + std::string(name) + "'");
}

double component_value(const TrainRecord& record, LossComponent component) {
  switch (component) {
    case LossComponent::kTotal:
      return record.total;
    case LossComponent::kQfl:
      return record.qfl;
    case LossComponent::kQflPos:
      return record.qfl_pos;
    case LossComponent::kDfl:
      return record.dfl;
    case LossComponent::kGiou:
      return record.giou;
  }
  return record.total;
}

double final_loss(const TrainLog& log, LossComponent component) {
  const auto& r = log.records;
  if (r.empty()) throw InvalidInput("final_loss: empty log");
  const std::size_t tail = std::max<std::size_t>(1, r.size() / 10);
  double sum = 0.0;
  for (std::size_t i = r.size() - tail; i < r.size(); ++i) sum += component_value(r[i], component);
  return sum / static_cast<double>(tail);
}

LossCurveComparison loss_curve_compare(const TrainLog& first, const TrainLog& second,
                                       LossComponent component) {
  if (first.records.size() != second.records.size() || first.records.empty()) {
    throw InvalidInput("loss_curve_compare: logs must be non-empty with equal lengths");
  }
  LossCurveComparison out;
  out.component = component;
  for (std::size_t i = 0; i < first.records.size(); ++i) {
    const auto& a = first.records[i];
    const auto& b = second.records[i];
    if (a.step != b.step) throw InvalidInput("loss_curve_compare: logs disagree on steps");
    out.rows.push_back({a.step, component_value(a, component), component_value(b, component)});
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const double dt = out.rows[i].step - out.rows[i - 1].step;
    const double g0 = out.rows[i - 1].first - out.rows[i - 1].second;
    const double g1 = out.rows[i].first - out.rows[i].second;
    out.auc_gap += 0.5 * dt * (g0 + g1);
  }
  out.final_gap = final_loss(first, component) - final_loss(second, component);
  return out;
}

}  // namespace lqe
