#include "lqe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lqe/errors.hpp"

namespace lqe {

namespace {

void require_valid(const Box& box, const char* what) {
  if (!box.is_valid()) throw InvalidInput(std::string(what) + ": invalid box");
}

}  // namespace

bool Box::is_valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 >= x1 && y2 >= y1;
}

Box decode(Point location, const SideOffsets& o) {
  if (!(o.l >= 0.0 && o.r >= 0.0 && o.t >= 0.0 && o.b >= 0.0)) {
    throw InvalidInput("decode: negative offset");
  }
  return {location.x - o.l, location.y - o.t, location.x + o.r, location.y + o.b};
}

SideOffsets encode(const Box& box, Point location) {
  require_valid(box, "encode");
  if (!box.contains(location)) throw InvalidInput("encode: location outside box");
  return {location.x - box.x1, box.x2 - location.x, location.y - box.y1, box.y2 - location.y};
}

double iou(const Box& a, const Box& b) {
  require_valid(a, "iou");
  require_valid(b, "iou");
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (a.area() <= 0.0 || b.area() <= 0.0 || uni <= 0.0) return 0.0;
  return inter / uni;
}

GiouResult giou_with_grad(const Box& a, const Box& b) {
  require_valid(a, "giou");
  require_valid(b, "giou");
  GiouResult out;

  const double ix1 = std::max(a.x1, b.x1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy1 = std::max(a.y1, b.y1);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;

  const double aw = a.width();
  const double ah = a.height();
  const double uni = a.area() + b.area() - inter;

  const double cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const double enclose = cw * ch;

  if (uni <= 0.0 || enclose <= 0.0) return out;

  out.value = inter / uni - (enclose - uni) / enclose;

  // Partial derivatives of the intersection, a's area and the enclosing area
  // w.r.t. (x1, y1, x2, y2) of box a.
  std::array<double, 4> d_inter{};
  if (iw > 0.0 && ih > 0.0) {
    d_inter[0] = a.x1 > b.x1 ? -ih : 0.0;
    d_inter[1] = a.y1 > b.y1 ? -iw : 0.0;
    d_inter[2] = a.x2 < b.x2 ? ih : 0.0;
    d_inter[3] = a.y2 < b.y2 ? iw : 0.0;
  }
  const std::array<double, 4> d_area{-ah, -aw, ah, aw};
  const std::array<double, 4> d_enclose{
      a.x1 < b.x1 ? -ch : 0.0,
      a.y1 < b.y1 ? -cw : 0.0,
      a.x2 > b.x2 ? ch : 0.0,
      a.y2 > b.y2 ? cw : 0.0,
  };
  for (std::size_t i = 0; i < 4; ++i) {
    const double d_uni = d_area[i] - d_inter[i];
    out.grad[i] = (d_inter[i] * uni - inter * d_uni) / (uni * uni) +
                  (d_uni * enclose - uni * d_enclose[i]) / (enclose * enclose);
  }
  return out;
}

double giou(const Box& a, const Box& b) { return giou_with_grad(a, b).value; }

namespace {

void check_nms_config(const NmsConfig& config) {
  if (!(config.iou_threshold >= 0.0 && config.iou_threshold <= 1.0) ||
      !(config.score_threshold <= 1.0) || std::isnan(config.score_threshold)) {
    throw InvalidArgument("nms: iou_threshold must lie in [0, 1] and score_threshold <= 1");
  }
}

std::vector<KeptDetection> eligible(std::span<const DetectionCandidate> candidates,
                                    const NmsConfig& config) {
  std::vector<KeptDetection> pool;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& scores = candidates[i].joint_scores;
    if (config.per_class) {
      for (std::size_t c = 0; c < scores.size(); ++c) {
        if (scores[c] > config.score_threshold) {
          pool.push_back({static_cast<int>(i), static_cast<int>(c), scores[c]});
        }
      }
    } else if (!scores.empty()) {
      const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
      if (scores[static_cast<std::size_t>(best)] > config.score_threshold) {
        pool.push_back({static_cast<int>(i), static_cast<int>(best),
                        scores[static_cast<std::size_t>(best)]});
      }
    }
  }
  return pool;
}

bool ranks_before(const KeptDetection& x, const KeptDetection& y) {
  if (x.score != y.score) return x.score > y.score;
  if (x.candidate != y.candidate) return x.candidate < y.candidate;
  return x.cls < y.cls;
}

}  // namespace

std::vector<KeptDetection> nms(std::span<const DetectionCandidate> candidates,
                               const NmsConfig& config) {
  check_nms_config(config);
  std::vector<KeptDetection> pool = eligible(candidates, config);
  std::sort(pool.begin(), pool.end(), ranks_before);

  // Suppression only interacts within a class bucket when per_class is set.
  std::vector<std::vector<std::size_t>> buckets;
  std::vector<int> bucket_of_class;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int key = config.per_class ? pool[i].cls : 0;
    if (static_cast<std::size_t>(key) >= bucket_of_class.size()) {
      bucket_of_class.resize(static_cast<std::size_t>(key) + 1, -1);
    }
    int& b = bucket_of_class[static_cast<std::size_t>(key)];
    if (b < 0) {
      b = static_cast<int>(buckets.size());
      buckets.emplace_back();
    }
    buckets[static_cast<std::size_t>(b)].push_back(i);
  }

  std::vector<char> keep(pool.size(), 0);
  std::vector<Box> boxes;
  std::vector<double> areas;
  std::vector<char> alive;
  for (const auto& bucket : buckets) {
    boxes.clear();
    areas.clear();
    for (std::size_t i : bucket) {
      boxes.push_back(candidates[static_cast<std::size_t>(pool[i].candidate)].box);
      areas.push_back(boxes.back().area());
    }
    alive.assign(bucket.size(), 1);
    for (std::size_t a = 0; a < bucket.size(); ++a) {
      if (!alive[a]) continue;
      keep[bucket[a]] = 1;
      const Box& ka = boxes[a];
      for (std::size_t b = a + 1; b < bucket.size(); ++b) {
        if (!alive[b]) continue;
        const Box& kb = boxes[b];
        const double iw = std::min(ka.x2, kb.x2) - std::max(ka.x1, kb.x1);
        if (iw <= 0.0) continue;
        const double ih = std::min(ka.y2, kb.y2) - std::max(ka.y1, kb.y1);
        if (ih <= 0.0) continue;
        if (iou(ka, kb) > config.iou_threshold) alive[b] = 0;
      }
    }
  }

  std::vector<KeptDetection> kept;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (keep[i]) kept.push_back(pool[i]);
  }
  return kept;
}

std::vector<KeptDetection> nms_reference(std::span<const DetectionCandidate> candidates,
                                         const NmsConfig& config) {
  check_nms_config(config);
  std::vector<KeptDetection> pool = eligible(candidates, config);
  std::vector<char> done(pool.size(), 0);
  std::vector<KeptDetection> kept;
  for (;;) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!done[i] && (best == pool.size() || ranks_before(pool[i], pool[best]))) best = i;
    }
    if (best == pool.size()) break;
    done[best] = 1;
    kept.push_back(pool[best]);
    const Box& box = candidates[static_cast<std::size_t>(pool[best].candidate)].box;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (done[j]) continue;
      if (config.per_class && pool[j].cls != pool[best].cls) continue;
      if (iou(box, candidates[static_cast<std::size_t>(pool[j].candidate)].box) >
          config.iou_threshold) {
        done[j] = 1;
      }
    }
  }
  return kept;
}

}  // namespace lqe
