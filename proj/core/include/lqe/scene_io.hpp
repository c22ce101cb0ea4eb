#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lqe/synthgen.hpp"

namespace lqe {

inline constexpr int kSceneFormatVersion = 1;

// JSON document "lqe-scene" described by docs/scene.schema.json.
std::string scene_to_json(const Scene& scene);
// Throws FormatError for malformed documents or inconsistent fields.
Scene scene_from_json(std::string_view text);

// Scene fixture file name for an index, e.g. scene_000042.json.
std::string scene_file_name(std::uint64_t index);

// Reads every scene_*.json in the directory in file name order.
std::vector<Scene> load_scene_dir(const std::filesystem::path& dir);

}  // namespace lqe
