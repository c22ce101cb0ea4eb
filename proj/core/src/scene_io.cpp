#include "lqe/scene_io.hpp"

#include <algorithm>
#include <cstdio>

#include "json_util.hpp"
#include "lqe/checkpoint.hpp"

namespace lqe {

using detail::Json;

std::string scene_to_json(const Scene& scene) {
  Json j;
  j["format"] = "lqe-scene";
  j["version"] = kSceneFormatVersion;
  j["config"] = detail::to_json(scene.config);
  j["index"] = scene.index;
  j["cols"] = scene.cols;
  j["rows"] = scene.rows;
  Json objects = Json::array();
  for (const auto& o : scene.objects) {
    Json e;
    e["box"] = {o.box.x1, o.box.y1, o.box.x2, o.box.y2};
    e["cls"] = o.cls;
    e["ambiguous"] = o.ambiguous;
    objects.push_back(std::move(e));
  }
  j["objects"] = std::move(objects);
  j["assignment"] = scene.assignment;
  Json blur = Json::array();
  for (const auto& b : scene.blur) blur.push_back({b[0], b[1], b[2], b[3]});
  j["blur"] = std::move(blur);
  j["features"] = detail::matrix_to_json(scene.features);
  return j.dump() + "\n";
}

Scene scene_from_json(std::string_view text) {
  const std::string what = "scene";
  const Json j = detail::parse(text, what);
  detail::require_header(j, "lqe-scene", kSceneFormatVersion);
  Scene s;
  try {
    s.config = detail::scene_config_from_json(detail::get<Json>(j, "config", what));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("scene: ") + e.what());
  }
  s.index = detail::get<std::uint64_t>(j, "index", what);
  s.cols = detail::get<int>(j, "cols", what);
  s.rows = detail::get<int>(j, "rows", what);
  if (s.cols != s.config.image_width / s.config.stride ||
      s.rows != s.config.image_height / s.config.stride) {
    throw FormatError("scene: cols/rows disagree with the config");
  }
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      s.locations.push_back({(c + 0.5) * s.config.stride, (r + 0.5) * s.config.stride});
    }
  }
  const auto num = s.locations.size();

  for (const auto& e : detail::get<Json>(j, "objects", what)) {
    const auto box = detail::get<std::vector<double>>(e, "box", what);
    if (box.size() != 4) throw FormatError("scene: box needs 4 coordinates");
    SceneObject o;
    o.box = Box{box[0], box[1], box[2], box[3]};
    o.cls = detail::get<int>(e, "cls", what);
    o.ambiguous = detail::get<bool>(e, "ambiguous", what);
    if (!o.box.is_valid() || o.cls < 0 || o.cls >= s.config.num_classes) {
      throw FormatError("scene: invalid object");
    }
    s.objects.push_back(o);
  }

  s.assignment = detail::get<std::vector<int>>(j, "assignment", what);
  if (s.assignment.size() != num) throw FormatError("scene: assignment length mismatch");
  for (int a : s.assignment) {
    if (a < -1 || a >= static_cast<int>(s.objects.size())) {
      throw FormatError("scene: assignment refers to a missing object");
    }
  }

  const auto blur = detail::get<std::vector<std::vector<double>>>(j, "blur", what);
  if (blur.size() != num) throw FormatError("scene: blur length mismatch");
  for (const auto& b : blur) {
    if (b.size() != 4 || std::any_of(b.begin(), b.end(), [](double v) { return !(v >= 0.0 && v <= 1.0); })) {
      throw FormatError("scene: blur entries must be 4 values in [0, 1]");
    }
    s.blur.push_back({b[0], b[1], b[2], b[3]});
  }

  s.features = detail::matrix_from_json(detail::get<Json>(j, "features", what), "scene features");
  if (s.features.rows() != s.config.feature_dim ||
      s.features.cols() != static_cast<Eigen::Index>(num)) {
    throw FormatError("scene: features must be feature_dim x locations");
  }
  return s;
}

std::string scene_file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06llu.json", static_cast<unsigned long long>(index));
  return buf;
}

std::vector<Scene> load_scene_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("scene_") && name.ends_with(".json")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Scene> scenes;
  for (const auto& f : files) scenes.push_back(scene_from_json(read_text_file(f)));
  return scenes;
}

}  // namespace lqe
