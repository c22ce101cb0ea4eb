#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "lqe/model.hpp"
#include "lqe/synthgen.hpp"

namespace lqe {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  HeadParams params;
  SceneConfig scene;
  std::uint64_t seed = 0;
  int steps = 0;
};

// JSON document "lqe-checkpoint" (see docs/checkpoint.md). Throws InvalidInput
// for non-finite parameters.
std::string checkpoint_to_json(const Checkpoint& checkpoint);
// Throws FormatError for malformed or mismatched documents.
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace lqe
