#include "lqe/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lqe/errors.hpp"
#include "lqe/rng.hpp"

namespace lqe {

namespace {

constexpr std::uint64_t kEmbeddingStream = 0xE3B0C44298FC1C14ULL;
constexpr int kPlacementRetries = 200;
constexpr int kSceneRetries = 50;

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw InvalidInput(std::string("scene config: ") + field + " " + rule);
}

SceneObject sample_object(const SceneConfig& cfg, Rng& rng) {
  SceneObject obj;
  const double w = rng.uniform(cfg.min_size, cfg.max_size);
  const double h = rng.uniform(cfg.min_size, cfg.max_size);
  const double x1 = rng.uniform(0.0, cfg.image_width - w);
  const double y1 = rng.uniform(0.0, cfg.image_height - h);
  obj.box = Box{x1, y1, x1 + w, y1 + h};
  obj.cls = rng.uniform_int(0, cfg.num_classes - 1);
  obj.ambiguous = rng.bernoulli(cfg.ambiguity);
  return obj;
}

}  // namespace

void validate(const SceneConfig& c) {
  require(c.stride > 0, "stride", "must be positive");
  require(c.image_width > 0 && c.image_width % c.stride == 0, "image_width",
          "must be a positive multiple of stride");
  require(c.image_height > 0 && c.image_height % c.stride == 0, "image_height",
          "must be a positive multiple of stride");
  require(c.min_objects >= 0, "min_objects", "must be >= 0");
  require(c.max_objects >= c.min_objects, "max_objects", "must be >= min_objects");
  require(c.num_classes >= 1, "num_classes", "must be >= 1");
  require(c.ambiguity >= 0.0 && c.ambiguity <= 1.0, "ambiguity", "must lie in [0, 1]");
  require(c.feature_dim >= latent_dim(c), "feature_dim", "must be >= the latent dimension (72 + num_classes at n = 16)");
  require(c.noise_sigma >= 0.0 && std::isfinite(c.noise_sigma), "noise_sigma", "must be >= 0");
  require(c.blur_sigma >= 0.0 && std::isfinite(c.blur_sigma), "blur_sigma", "must be >= 0");
  require(c.min_size >= 2.0 * c.stride, "min_size", "must be >= 2 * stride");
  require(c.max_size >= c.min_size, "max_size", "must be >= min_size");
  require(c.max_size <= std::min(c.image_width, c.image_height), "max_size",
          "must fit inside the image");
  require(c.code_width > 0.0 && std::isfinite(c.code_width), "code_width", "must be positive");
  require(c.blur_widen >= 0.0 && std::isfinite(c.blur_widen), "blur_widen", "must be >= 0");
  require(c.max_overlap_iou >= 0.0 && c.max_overlap_iou <= 1.0, "max_overlap_iou",
          "must lie in [0, 1]");
}

int latent_dim(const SceneConfig& config) {
  return 4 + 4 * default_grid(config).size() + config.num_classes;
}

BinGrid default_grid(const SceneConfig& config, int n) {
  return BinGrid(0.0, 0.75 * config.max_size / config.stride, n);
}

int Scene::num_positives() const {
  return static_cast<int>(std::count_if(assignment.begin(), assignment.end(),
                                        [](int a) { return a >= 0; }));
}

double Scene::evidence_sd(int location, int side) const {
  return config.blur_sigma *
         blur[static_cast<std::size_t>(location)][static_cast<std::size_t>(side)];
}

Eigen::MatrixXd embedding_matrix(const SceneConfig& config) {
  Rng rng = Rng::stream(config.seed, kEmbeddingStream);
  const int latent = latent_dim(config);
  const double scale = 1.0 / std::sqrt(static_cast<double>(latent));
  Eigen::MatrixXd a(config.feature_dim, latent);
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = scale * rng.normal();
  }
  return a;
}

std::vector<int> assign(std::span<const Point> locations, std::span<const Box> boxes,
                        double center_ratio) {
  std::vector<int> out(locations.size(), -1);
  for (std::size_t li = 0; li < locations.size(); ++li) {
    const Point p = locations[li];
    for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
      const Box& b = boxes[bi];
      const Point c = b.center();
      const double hw = 0.5 * center_ratio * b.width();
      const double hh = 0.5 * center_ratio * b.height();
      if (std::abs(p.x - c.x) > hw || std::abs(p.y - c.y) > hh) continue;
      const int cur = out[li];
      if (cur < 0 || b.area() < boxes[static_cast<std::size_t>(cur)].area()) {
        out[li] = static_cast<int>(bi);
      }
    }
  }
  return out;
}

Scene generate(const SceneConfig& config, std::uint64_t index) {
  validate(config);
  return generate(config, index, embedding_matrix(config));
}

Scene generate(const SceneConfig& config, std::uint64_t index, const Eigen::MatrixXd& embed) {
  validate(config);
  if (embed.rows() != config.feature_dim || embed.cols() != latent_dim(config)) {
    throw InvalidInput("generate: embedding shape does not match the config");
  }
  Rng rng = Rng::stream(config.seed, index);

  Scene scene;
  scene.config = config;
  scene.index = index;
  scene.cols = config.image_width / config.stride;
  scene.rows = config.image_height / config.stride;
  for (int r = 0; r < scene.rows; ++r) {
    for (int c = 0; c < scene.cols; ++c) {
      scene.locations.push_back({(c + 0.5) * config.stride, (r + 0.5) * config.stride});
    }
  }

  bool placed = false;
  for (int attempt = 0; attempt < kSceneRetries && !placed; ++attempt) {
    scene.objects.clear();
    const int count = rng.uniform_int(config.min_objects, config.max_objects);
    bool ok = true;
    for (int o = 0; o < count && ok; ++o) {
      ok = false;
      for (int t = 0; t < kPlacementRetries; ++t) {
        SceneObject obj = sample_object(config, rng);
        const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(),
                                       [&](const SceneObject& other) {
                                         return iou(obj.box, other.box) <= config.max_overlap_iou;
                                       });
        if (clear) {
          scene.objects.push_back(obj);
          ok = true;
          break;
        }
      }
    }
    if (!ok) continue;

    std::vector<Box> boxes;
    for (const auto& o : scene.objects) boxes.push_back(o.box);
    scene.assignment = assign(scene.locations, boxes);
    std::vector<int> hits(scene.objects.size(), 0);
    for (int a : scene.assignment) {
      if (a >= 0) ++hits[static_cast<std::size_t>(a)];
    }
    placed = std::all_of(hits.begin(), hits.end(), [](int h) { return h > 0; });
  }
  if (!placed) {
    throw GenerationError("generate: could not place objects for scene " + std::to_string(index));
  }

  const int latent = latent_dim(config);
  const BinGrid grid = default_grid(config);
  const int code_bins = grid.size();
  const auto num = static_cast<Eigen::Index>(scene.locations.size());
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(latent, num);
  scene.blur.assign(scene.locations.size(), {0.0, 0.0, 0.0, 0.0});

  for (Eigen::Index li = 0; li < num; ++li) {
    const Point p = scene.locations[static_cast<std::size_t>(li)];
    const int owner = scene.assignment[static_cast<std::size_t>(li)];
    if (owner < 0) continue;
    const SceneObject& obj = scene.objects[static_cast<std::size_t>(owner)];
    const auto sides = encode(obj.box, p).as_array();
    auto& blur = scene.blur[static_cast<std::size_t>(li)];
    for (std::size_t s = 0; s < 4; ++s) {
      blur[s] = obj.ambiguous ? rng.uniform() : 0.0;
      const double direction = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double observed = sides[s] / config.stride + config.blur_sigma * blur[s] * direction;
      const auto side = static_cast<Eigen::Index>(s);
      u(side, li) = observed / grid.yn();
      // Edge evidence: a unit-mass bump over the bin centers, widened by blur.
      const double width = config.code_width * (1.0 + config.blur_widen * blur[s]) * grid.delta();
      auto bump = u.col(li).segment(4 + side * code_bins, code_bins);
      for (int b = 0; b < code_bins; ++b) {
        const double d = (grid.bin(b) - observed) / width;
        bump(b) = std::exp(-0.5 * d * d);
      }
      const double mass = bump.sum();
      if (mass > 0.0) bump /= mass;
    }
    u(4 + 4 * code_bins + obj.cls, li) = 1.0;
  }

  scene.features = Eigen::MatrixXd::Zero(config.feature_dim, num);
  for (Eigen::Index li = 0; li < num; ++li) {
    if (u.col(li).any()) scene.features.col(li).noalias() = embed * u.col(li);
  }
  if (config.noise_sigma > 0.0) {
    for (Eigen::Index li = 0; li < num; ++li) {
      for (Eigen::Index r = 0; r < scene.features.rows(); ++r) {
        scene.features(r, li) += config.noise_sigma * rng.normal();
      }
    }
  }
  return scene;
}

}  // namespace lqe
