#include "lqe/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace lqe {

using detail::Json;

std::string checkpoint_to_json(const Checkpoint& checkpoint) {
  HeadParams params = checkpoint.params;
  Json j;
  j["format"] = "lqe-checkpoint";
  j["version"] = kCheckpointVersion;
  j["seed"] = checkpoint.seed;
  j["steps"] = checkpoint.steps;
  j["scene"] = detail::to_json(checkpoint.scene);
  j["head"] = detail::to_json(params.config);
  Json arrays = Json::array();
  for (const auto& block : params.blocks()) {
    Json a = detail::array_to_json(block.values.data(), block.rows, block.cols);
    Json entry;
    entry["name"] = block.name;
    entry["shape"] = std::move(a["shape"]);
    entry["data"] = std::move(a["data"]);
    arrays.push_back(std::move(entry));
  }
  j["params"] = std::move(arrays);
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  const std::string what = "checkpoint";
  const Json j = detail::parse(text, what);
  detail::require_header(j, "lqe-checkpoint", kCheckpointVersion);
  Checkpoint out;
  out.seed = detail::get<std::uint64_t>(j, "seed", what);
  out.steps = detail::get<int>(j, "steps", what);
  try {
    out.scene = detail::scene_config_from_json(detail::get<Json>(j, "scene", what));
    out.params = HeadParams::zeros(detail::head_config_from_json(detail::get<Json>(j, "head", what)));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const Json arrays = detail::get<Json>(j, "params", what);
  auto blocks = out.params.blocks();
  if (!arrays.is_array() || arrays.size() != blocks.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(blocks.size()) + " parameter arrays");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto name = detail::get<std::string>(arrays[i], "name", what);
    if (name != blocks[i].name) {
      throw FormatError("checkpoint: expected array '" + blocks[i].name + "', got '" + name + "'");
    }
    const Eigen::MatrixXd m = detail::matrix_from_json(arrays[i], what + " array '" + name + "'");
    if (m.rows() != blocks[i].rows || m.cols() != blocks[i].cols) {
      throw FormatError("checkpoint: array '" + name + "' has the wrong shape");
    }
    std::copy(m.data(), m.data() + m.size(), blocks[i].values.begin());
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_text_file(path, checkpoint_to_json(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_text_file(path));
}

}  // namespace lqe
