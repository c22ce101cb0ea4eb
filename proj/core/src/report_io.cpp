#include "lqe/report_io.hpp"

#include "json_util.hpp"

namespace lqe {

using detail::Json;

namespace {

Json box_json(const Box& b) { return {b.x1, b.y1, b.x2, b.y2}; }

Box box_from(const Json& j, const char* key, const std::string& what) {
  const auto v = detail::get<std::vector<double>>(j, key, what);
  if (v.size() != 4) throw FormatError(what + ": box needs 4 coordinates");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

std::string eval_report_to_json(const EvalReport& report) {
  Json j;
  j["format"] = "lqe-eval-report";
  j["version"] = kEvalReportVersion;
  j["variant"] = report.variant;
  Json cands = Json::array();
  for (const auto& c : report.candidates) {
    Json e;
    e["scene"] = c.scene;
    e["location"] = c.location;
    e["object"] = c.object;
    e["gt_class"] = c.gt_class;
    e["box"] = box_json(c.box);
    e["joint_scores"] = c.joint_scores;
    e["quality"] = c.quality;
    e["confidence"] = c.confidence;
    e["real_iou"] = c.real_iou;
    e["top1"] = c.top1;
    cands.push_back(std::move(e));
  }
  j["candidates"] = std::move(cands);
  Json dets = Json::array();
  for (const auto& d : report.detections) {
    Json e;
    e["scene"] = d.scene;
    e["location"] = d.location;
    e["cls"] = d.cls;
    e["score"] = d.score;
    e["box"] = box_json(d.box);
    dets.push_back(std::move(e));
  }
  j["detections"] = std::move(dets);
  return j.dump() + "\n";
}

EvalReport eval_report_from_json(std::string_view text) {
  const std::string what = "eval report";
  const Json j = detail::parse(text, what);
  detail::require_header(j, "lqe-eval-report", kEvalReportVersion);
  EvalReport r;
  r.variant = detail::get<std::string>(j, "variant", what);
  for (const auto& e : detail::get<Json>(j, "candidates", what)) {
    EvalCandidate c;
    c.scene = detail::get<int>(e, "scene", what);
    c.location = detail::get<int>(e, "location", what);
    c.object = detail::get<int>(e, "object", what);
    c.gt_class = detail::get<int>(e, "gt_class", what);
    c.box = box_from(e, "box", what);
    c.joint_scores = detail::get<std::vector<double>>(e, "joint_scores", what);
    c.quality = detail::get<double>(e, "quality", what);
    c.confidence = detail::get<double>(e, "confidence", what);
    c.real_iou = detail::get<double>(e, "real_iou", what);
    c.top1 = detail::get<std::array<double, 4>>(e, "top1", what);
    r.candidates.push_back(std::move(c));
  }
  for (const auto& e : detail::get<Json>(j, "detections", what)) {
    EvalDetection d;
    d.scene = detail::get<int>(e, "scene", what);
    d.location = detail::get<int>(e, "location", what);
    d.cls = detail::get<int>(e, "cls", what);
    d.score = detail::get<double>(e, "score", what);
    d.box = box_from(e, "box", what);
    r.detections.push_back(d);
  }
  return r;
}

}  // namespace lqe
