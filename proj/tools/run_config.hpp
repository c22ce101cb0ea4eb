#pragma once

// Resolved settings for one CLI invocation. Values come from built-in
// defaults, then a key = value config file, then command-line flags.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lqe/model.hpp"
#include "lqe/synthgen.hpp"
#include "lqe/trainer.hpp"

namespace lqe::cli {

// Usage or configuration problem; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SceneConfig scene;
  TrainConfig train;
  HeadVariant variant = HeadVariant::kDecomposed;
  int hidden = 64;
  int k = 4;
  int p = 64;
  bool include_variance = false;
  DgqpBias dgqp_bias = DgqpBias::kBoth;
  int composed_dim = 64;
  bool detach_stats = false;

  int gen_count = 8;
  int eval_scenes = 100;
  std::vector<double> corruption_levels{0.0, 0.05, 0.1, 0.2, 0.4, 0.8};
  int suppression_seeds = 20;
  int random_trials = 50;
  int checkgrad_trials = 100;

  // Propagates `seed` into the scene and training seeds.
  void set_seed(std::uint64_t value);
  HeadConfig head() const;
};

// Every accepted key in a fixed order.
const std::vector<std::string>& config_keys();

// Throws ConfigError naming the key when it is unknown or the value does not
// parse.
void set_key(RunConfig& config, std::string_view key, std::string_view value);
std::string get_key(const RunConfig& config, std::string_view key);

// Lines "key = value"; '#' starts a comment; blank lines are ignored.
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Runs every module validator; rethrows failures as ConfigError.
void validate(const RunConfig& config);

// key -> value snapshot of every setting.
std::map<std::string, std::string> snapshot(const RunConfig& config);

struct RunManifest {
  std::string command;
  std::string tool_version;
  std::uint64_t seed = 0;
  std::string variant;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> inputs;     // role -> path as given
  std::vector<std::string> artifacts;            // file names in the output directory
};

RunManifest make_manifest(std::string command, const RunConfig& config);
std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(std::string_view text);

}  // namespace lqe::cli
