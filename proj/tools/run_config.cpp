#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>

#include <json.hpp>

#include "lqe/checkpoint.hpp"
#include "lqe/csv.hpp"
#include "lqe/errors.hpp"

#ifndef LQE_VERSION
#define LQE_VERSION "0.0.0"
#endif

namespace lqe::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("invalid value '" + std::string(v) + "' for key '" + std::string(key) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  try {
    return parse_double(v);
  } catch (const FormatError&) {
    throw ConfigError("invalid value '" + std::string(v) + "' for key '" + std::string(key) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid value '" + std::string(v) + "' for key '" + std::string(key) +
                    "' (expected true or false)");
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

const char* bias_text(DgqpBias b) {
  switch (b) {
    case DgqpBias::kBoth:
      return "both";
    case DgqpBias::kOutputOnly:
      return "output_only";
    case DgqpBias::kNone:
      return "none";
  }
  return "both";
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LQE_INT(KEY, FIELD)                                                                \
  Entry {                                                                                  \
    KEY, [](RunConfig& c, std::string_view v) { c.FIELD = parse_integer<int>(KEY, v); },   \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                         \
  }
#define LQE_REAL(KEY, FIELD)                                                         \
  Entry {                                                                            \
    KEY, [](RunConfig& c, std::string_view v) { c.FIELD = parse_real(KEY, v); },     \
        [](const RunConfig& c) { return format_double(c.FIELD); }                    \
  }
#define LQE_BOOL(KEY, FIELD)                                                         \
  Entry {                                                                            \
    KEY, [](RunConfig& c, std::string_view v) { c.FIELD = parse_bool(KEY, v); },     \
        [](const RunConfig& c) { return bool_text(c.FIELD); }                        \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"seed",
            [](RunConfig& c, std::string_view v) { c.set_seed(parse_integer<std::uint64_t>("seed", v)); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      LQE_INT("scene.image_width", scene.image_width),
      LQE_INT("scene.image_height", scene.image_height),
      LQE_INT("scene.stride", scene.stride),
      LQE_INT("scene.min_objects", scene.min_objects),
      LQE_INT("scene.max_objects", scene.max_objects),
      LQE_INT("scene.num_classes", scene.num_classes),
      LQE_REAL("scene.ambiguity", scene.ambiguity),
      LQE_INT("scene.feature_dim", scene.feature_dim),
      LQE_REAL("scene.noise_sigma", scene.noise_sigma),
      LQE_REAL("scene.blur_sigma", scene.blur_sigma),
      LQE_REAL("scene.code_width", scene.code_width),
      LQE_REAL("scene.blur_widen", scene.blur_widen),
      LQE_REAL("scene.min_size", scene.min_size),
      LQE_REAL("scene.max_size", scene.max_size),
      LQE_REAL("scene.max_overlap_iou", scene.max_overlap_iou),
      LQE_INT("train.steps", train.steps),
      LQE_INT("train.batch_scenes", train.batch_scenes),
      LQE_REAL("train.learning_rate", train.learning_rate),
      LQE_REAL("train.momentum", train.momentum),
      LQE_REAL("train.weight_decay", train.weight_decay),
      Entry{"train.optimizer",
            [](RunConfig& c, std::string_view v) {
              if (v == "sgd") {
                c.train.optimizer = OptimizerKind::kSgd;
              } else if (v == "adam") {
                c.train.optimizer = OptimizerKind::kAdam;
              } else {
                throw ConfigError("invalid value '" + std::string(v) +
                                  "' for key 'train.optimizer' (expected sgd or adam)");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.train.optimizer == OptimizerKind::kSgd ? "sgd" : "adam");
            }},
      LQE_REAL("train.adam_beta1", train.adam_beta1),
      LQE_REAL("train.adam_beta2", train.adam_beta2),
      LQE_REAL("train.adam_eps", train.adam_eps),
      Entry{"train.decay_steps",
            [](RunConfig& c, std::string_view v) {
              c.train.decay_steps.clear();
              for (const auto& item : split_list(v)) {
                c.train.decay_steps.push_back(parse_integer<int>("train.decay_steps", item));
              }
            },
            [](const RunConfig& c) { return join(c.train.decay_steps); }},
      LQE_REAL("train.decay_factor", train.decay_factor),
      LQE_INT("train.log_every", train.log_every),
      LQE_REAL("train.w_qfl", train.weights.qfl),
      LQE_REAL("train.w_dfl", train.weights.dfl),
      LQE_REAL("train.w_giou", train.weights.giou),
      LQE_REAL("train.beta", train.qfl.beta),
      Entry{"head.variant",
            [](RunConfig& c, std::string_view v) {
              try {
                c.variant = parse_variant(v);
              } catch (const InvalidArgument& e) {
                throw ConfigError(std::string(e.what()) + " for key 'head.variant'");
              }
            },
            [](const RunConfig& c) { return std::string(to_string(c.variant)); }},
      LQE_INT("head.hidden", hidden),
      LQE_INT("head.k", k),
      LQE_INT("head.p", p),
      LQE_BOOL("head.include_variance", include_variance),
      Entry{"head.dgqp_bias",
            [](RunConfig& c, std::string_view v) {
              if (v == "both") {
                c.dgqp_bias = DgqpBias::kBoth;
              } else if (v == "output_only") {
                c.dgqp_bias = DgqpBias::kOutputOnly;
              } else if (v == "none") {
                c.dgqp_bias = DgqpBias::kNone;
              } else {
                throw ConfigError("invalid value '" + std::string(v) +
                                  "' for key 'head.dgqp_bias' (expected both, output_only or none)");
              }
            },
            [](const RunConfig& c) { return std::string(bias_text(c.dgqp_bias)); }},
      LQE_INT("head.composed_dim", composed_dim),
      LQE_BOOL("head.detach_stats", detach_stats),
      LQE_INT("gen.count", gen_count),
      LQE_INT("analyze.eval_scenes", eval_scenes),
      Entry{"analyze.corruption_levels",
            [](RunConfig& c, std::string_view v) {
              c.corruption_levels.clear();
              for (const auto& item : split_list(v)) {
                c.corruption_levels.push_back(parse_real("analyze.corruption_levels", item));
              }
            },
            [](const RunConfig& c) { return join(c.corruption_levels); }},
      LQE_INT("analyze.suppression_seeds", suppression_seeds),
      LQE_INT("analyze.random_trials", random_trials),
      LQE_INT("checkgrad.trials", checkgrad_trials),
  };
  return table;
}

#undef LQE_INT
#undef LQE_REAL
#undef LQE_BOOL

const Entry& find(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  scene.seed = value;
  train.seed = value;
}

HeadConfig RunConfig::head() const {
  HeadConfig h = head_config_for(scene, variant);
  h.hidden = hidden;
  h.k = k;
  h.p = p;
  h.include_variance = include_variance;
  h.dgqp_bias = dgqp_bias;
  h.composed_dim = composed_dim;
  h.detach_stats = detach_stats;
  return h;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void set_key(RunConfig& config, std::string_view key, std::string_view value) {
  find(key).set(config, value);
}

std::string get_key(const RunConfig& config, std::string_view key) { return find(key).get(config); }

void apply_config_text(RunConfig& config, std::string_view text) {
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  apply_config_text(config, text);
}

void validate(const RunConfig& config) {
  try {
    lqe::validate(config.scene);
    lqe::validate(config.train);
    lqe::validate(config.head());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (config.gen_count < 0) throw ConfigError("gen.count must be >= 0");
  if (config.eval_scenes < 1) throw ConfigError("analyze.eval_scenes must be positive");
  if (config.suppression_seeds < 1) throw ConfigError("analyze.suppression_seeds must be positive");
  if (config.random_trials < 1) throw ConfigError("analyze.random_trials must be positive");
  if (config.checkgrad_trials < 0) throw ConfigError("checkgrad.trials must be >= 0");
  for (double l : config.corruption_levels) {
    if (!(l >= 0.0)) throw ConfigError("analyze.corruption_levels must be >= 0");
  }
}

std::map<std::string, std::string> snapshot(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& e : entries()) out[e.key] = e.get(config);
  return out;
}

RunManifest make_manifest(std::string command, const RunConfig& config) {
  RunManifest m;
  m.command = std::move(command);
  m.tool_version = LQE_VERSION;
  m.seed = config.seed;
  m.variant = std::string(to_string(config.variant));
  m.config = snapshot(config);
  return m;
}

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "lqe-run-manifest";
  j["version"] = 1;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["seed"] = m.seed;
  j["variant"] = m.variant;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["artifacts"] = m.artifacts;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "lqe-run-manifest") {
      throw FormatError("not a run manifest");
    }
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.variant = j.at("variant").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run manifest: ") + e.what());
  }
}

}  // namespace lqe::cli
