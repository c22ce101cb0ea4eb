#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace lqe {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned box in image units.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool is_valid() const;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  Point center() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }
  bool contains(Point p) const { return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2; }

  bool operator==(const Box&) const = default;
};

// Distances from an anchor location to the four box sides.
struct SideOffsets {
  double l = 0.0;
  double r = 0.0;
  double t = 0.0;
  double b = 0.0;

  std::array<double, 4> as_array() const { return {l, r, t, b}; }
  bool operator==(const SideOffsets&) const = default;
};

Box decode(Point location, const SideOffsets& offsets);
SideOffsets encode(const Box& box, Point location);

// Zero whenever the union area is zero, including any degenerate box.
double iou(const Box& a, const Box& b);

struct GiouResult {
  double value = 0.0;
  // d value / d (a.x1, a.y1, a.x2, a.y2)
  std::array<double, 4> grad{};
};

double giou(const Box& a, const Box& b);
GiouResult giou_with_grad(const Box& a, const Box& b);

struct DetectionCandidate {
  Point location;
  Box box;
  std::vector<double> joint_scores;
  std::optional<double> real_iou;
};

struct NmsConfig {
  double iou_threshold = 0.6;
  double score_threshold = 0.05;
  bool per_class = true;
};

struct KeptDetection {
  int candidate = 0;
  int cls = 0;
  double score = 0.0;

  bool operator==(const KeptDetection&) const = default;
};

// Greedy suppression in descending score order. A (candidate, class) pair is
// eligible when its score exceeds score_threshold; when per_class is false
// each candidate enters once with its best class and suppression ignores
// classes. A kept box removes later boxes whose IoU with it exceeds
// iou_threshold. Output is sorted by score, ties by candidate index, then
// class. A negative score_threshold admits every pair.
std::vector<KeptDetection> nms(std::span<const DetectionCandidate> candidates,
                               const NmsConfig& config = {});

// Quadratic selection-based greedy suppression with the same contract as nms.
std::vector<KeptDetection> nms_reference(std::span<const DetectionCandidate> candidates,
                                         const NmsConfig& config = {});

}  // namespace lqe
