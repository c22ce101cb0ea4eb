#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "lqe/analysis.hpp"
#include "lqe/checkpoint.hpp"
#include "lqe/csv.hpp"
#include "lqe/errors.hpp"
#include "lqe/gradcheck.hpp"
#include "lqe/report_io.hpp"
#include "lqe/scene_io.hpp"
#include "lqe/trainer.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace lqe;
using namespace lqe::cli;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;
  std::string out;
};

struct HeadFlags {
  std::optional<std::string> variant;
  std::optional<int> k;
  std::optional<int> p;
  bool detach_stats = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--seed", f.seed, "seed for scenes, init and noise");
  cmd->add_option("--set", f.set, "override a config key (key=value), repeatable");
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (out_required) out->required();
}

void add_head(CLI::App* cmd, HeadFlags& f) {
  cmd->add_option("--variant", f.variant, "gflv1 | gflv2 | composed");
  cmd->add_option("--k", f.k, "Topk size");
  cmd->add_option("--p", f.p, "DGQP hidden width");
  cmd->add_flag("--detach-stats", f.detach_stats, "stop gradients from DGQP into the distributions");
}

RunConfig resolve(const CommonFlags& common, const HeadFlags* head) {
  RunConfig cfg;
  if (!common.config.empty()) apply_config_file(cfg, common.config);
  for (const auto& kv : common.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) cfg.set_seed(*common.seed);
  if (head != nullptr) {
    if (head->variant) set_key(cfg, "head.variant", *head->variant);
    if (head->k) cfg.k = *head->k;
    if (head->p) cfg.p = *head->p;
    if (head->detach_stats) cfg.detach_stats = true;
  }
  validate(cfg);
  return cfg;
}

void write_artifact(const fs::path& dir, RunManifest& manifest, const std::string& name,
                    const std::string& text) {
  write_text_file(dir / name, text);
  manifest.artifacts.push_back(name);
}

void write_manifest(const fs::path& dir, const RunManifest& manifest) {
  write_text_file(dir / "manifest.json", manifest_to_json(manifest));
}

int cmd_gen(const CommonFlags& common) {
  const RunConfig cfg = resolve(common, nullptr);
  const fs::path out = common.out;
  fs::create_directories(out);
  RunManifest manifest = make_manifest("gen", cfg);
  const Eigen::MatrixXd embed = embedding_matrix(cfg.scene);
  for (int i = 0; i < cfg.gen_count; ++i) {
    const auto index = static_cast<std::uint64_t>(i);
    write_artifact(out, manifest, scene_file_name(index),
                   scene_to_json(generate(cfg.scene, index, embed)));
  }
  write_manifest(out, manifest);
  std::cout << "wrote " << cfg.gen_count << " scenes to " << out.string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& common, const HeadFlags& head, const std::string& scenes_dir) {
  RunConfig cfg = resolve(common, &head);
  const fs::path out = common.out;
  fs::create_directories(out);

  std::unique_ptr<SceneStream> stream;
  if (!scenes_dir.empty()) {
    std::vector<Scene> scenes = load_scene_dir(scenes_dir);
    if (scenes.empty()) throw ConfigError("no scene_*.json files in " + scenes_dir);
    cfg.scene = scenes.front().config;
    stream = std::make_unique<FixtureSceneStream>(std::move(scenes));
  } else {
    stream = std::make_unique<SyntheticSceneStream>(cfg.scene);
  }

  RunManifest manifest = make_manifest("train", cfg);
  if (!scenes_dir.empty()) manifest.inputs["scenes"] = scenes_dir;

  auto save = [&](const char* name, const HeadParams& params, const TrainLog& log) {
    write_artifact(out, manifest, name,
                   checkpoint_to_json({params, cfg.scene, cfg.seed, cfg.train.steps}));
    write_artifact(out, manifest, "train_log.csv", to_csv(train_log_table(log)));
    write_manifest(out, manifest);
  };

  try {
    const TrainResult result = train(cfg.train, *stream, cfg.head());
    save("checkpoint.json", result.params, result.log);
    const auto& last = result.log.records.back();
    std::cout << to_string(cfg.variant) << ": step " << last.step << " total " << last.total
              << " qfl_pos " << last.qfl_pos << " mean_pos_iou " << last.mean_pos_iou << "\n";
    return 0;
  } catch (const TrainingDiverged& e) {
    save("last_good.json", e.last_good(), e.log());
    std::cerr << "error: " << e.what() << " (last good parameters saved)\n";
    return kExitRuntime;
  }
}

std::vector<std::string> parse_reports(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::size_t start = 0;
    while (start <= r.size()) {
      const auto comma = r.find(',', start);
      std::string item = r.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!item.empty()) {
        if (item != "pcc" && item != "scatter" && item != "suppression" && item != "losscurves") {
          throw ConfigError("unknown report '" + item + "' (expected pcc, scatter, suppression, losscurves)");
        }
        if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

struct AnalyzeFlags {
  std::string checkpoint;
  std::string scenes;
  std::vector<std::string> reports;
  std::string log_a;
  std::string log_b;
  std::string component = "qfl_pos";
};

int cmd_analyze(const CommonFlags& common, const AnalyzeFlags& flags) {
  const RunConfig cfg = resolve(common, nullptr);
  const auto reports = parse_reports(flags.reports);
  const fs::path out = common.out;
  fs::create_directories(out);
  RunManifest manifest = make_manifest("analyze", cfg);
  manifest.config["analyze.reports"] = [&] {
    std::string s;
    for (const auto& r : reports) s += (s.empty() ? "" : ",") + r;
    return s;
  }();

  auto wants = [&](const char* name) {
    return std::find(reports.begin(), reports.end(), name) != reports.end();
  };
  const bool needs_eval = wants("pcc") || wants("scatter") || wants("suppression");

  if (needs_eval) {
    if (flags.checkpoint.empty()) throw ConfigError("--checkpoint is required for pcc, scatter and suppression");
    const Checkpoint ckpt = load_checkpoint(flags.checkpoint);
    manifest.inputs["checkpoint"] = flags.checkpoint;
    manifest.variant = std::string(to_string(ckpt.params.config.variant));
    std::vector<Scene> scenes;
    if (!flags.scenes.empty()) {
      scenes = load_scene_dir(flags.scenes);
      manifest.inputs["scenes"] = flags.scenes;
    } else {
      scenes = eval_scenes(ckpt.scene, cfg.eval_scenes);
    }
    const EvalReport report = evaluate(ckpt.params, scenes);
    write_artifact(out, manifest, "eval_report.json", eval_report_to_json(report));

    if (wants("pcc")) {
      write_artifact(out, manifest, "pcc.csv", to_csv(pcc_table({pcc_report(report, {ckpt.seed})})));
    }
    if (wants("scatter")) {
      write_artifact(out, manifest, "scatter_top1.csv",
                     to_csv(scatter_table(sharpness_scatter(report, ScatterKind::kTop1))));
      write_artifact(out, manifest, "scatter_quality.csv",
                     to_csv(scatter_table(sharpness_scatter(report, ScatterKind::kQuality))));
      write_artifact(out, manifest, "dgqp_io.csv", to_csv(dgqp_io_table(dgqp_io_scatter(report))));
    }
    if (wants("suppression")) {
      const auto learned = suppression_candidates(report);
      const auto oracle = with_oracle_scores(learned);
      const auto mean_learned =
          mean_suppression_study(learned, cfg.corruption_levels, cfg.seed, cfg.suppression_seeds);
      const auto mean_oracle =
          mean_suppression_study(oracle, cfg.corruption_levels, cfg.seed, cfg.suppression_seeds);
      write_artifact(out, manifest, "suppression.csv", to_csv(suppression_table(mean_learned)));
      write_artifact(out, manifest, "suppression_oracle.csv", to_csv(suppression_table(mean_oracle)));
      CsvTable random;
      random.header = {"trials", "retention"};
      random.rows.push_back({std::to_string(cfg.random_trials),
                             format_double(random_ranking_retention(learned, cfg.random_trials, cfg.seed))});
      write_artifact(out, manifest, "suppression_random.csv", to_csv(random));
    }
  }

  if (wants("losscurves")) {
    if (flags.log_a.empty() || flags.log_b.empty()) {
      throw ConfigError("losscurves needs --log-a and --log-b");
    }
    const TrainLog a = train_log_from_table(parse_csv(read_text_file(flags.log_a)));
    const TrainLog b = train_log_from_table(parse_csv(read_text_file(flags.log_b)));
    manifest.inputs["log_a"] = flags.log_a;
    manifest.inputs["log_b"] = flags.log_b;
    LossComponent component;
    try {
      component = parse_loss_component(flags.component);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    const auto cmp = loss_curve_compare(a, b, component);
    write_artifact(out, manifest, "losscurves.csv", to_csv(loss_curve_table(cmp)));
    CsvTable summary;
    summary.header = {"component", "final_gap", "auc_gap"};
    summary.rows.push_back({std::string(to_string(component)), format_double(cmp.final_gap),
                            format_double(cmp.auc_gap)});
    write_artifact(out, manifest, "losscurves_summary.csv", to_csv(summary));
  }

  write_manifest(out, manifest);
  return 0;
}

int cmd_checkgrad(const CommonFlags& common, std::optional<int> trials, bool sabotage) {
  RunConfig cfg = resolve(common, nullptr);
  if (trials) cfg.checkgrad_trials = *trials;
  if (cfg.checkgrad_trials < 0) throw ConfigError("--trials must be >= 0");
  GradCheckConfig gc;
  gc.seed = cfg.seed;
  gc.trials = cfg.checkgrad_trials;
  gc.sabotage = sabotage;
  if (gc.trials == 0) std::cerr << "warning: trials = 0, every suite passes vacuously\n";
  const GradCheckReport report = run_gradcheck(gc);

  CsvTable table;
  table.header = {"suite", "instances", "redrawn", "max_rel_error", "passed"};
  for (const auto& s : report.suites) {
    std::printf("%-20s %-4s instances=%d redrawn=%d max_rel_error=%.3g\n", s.name.c_str(),
                s.passed ? "PASS" : "FAIL", s.instances, s.redrawn, s.max_rel_error);
    table.rows.push_back({s.name, std::to_string(s.instances), std::to_string(s.redrawn),
                          format_double(s.max_rel_error), s.passed ? "true" : "false"});
  }
  if (!common.out.empty()) {
    RunManifest manifest = make_manifest("checkgrad", cfg);
    manifest.config["checkgrad.sabotage"] = sabotage ? "true" : "false";
    write_artifact(common.out, manifest, "checkgrad.csv", to_csv(table));
    write_manifest(common.out, manifest);
  }
  std::printf("%s\n", report.passed() ? "all suites passed" : "gradient check FAILED");
  return report.passed() ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep the per-step matrix buffers on the heap instead of fresh mappings.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif

  CLI::App app{"Localization quality estimation experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LQE_VERSION);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen", "write synthetic scene fixtures");
  add_common(gen, gen_flags, true);

  CommonFlags train_flags;
  HeadFlags train_head;
  std::string train_scenes;
  auto* train_cmd = app.add_subcommand("train", "train one head variant");
  add_common(train_cmd, train_flags, true);
  add_head(train_cmd, train_head);
  train_cmd->add_option("--scenes", train_scenes, "train on fixture scenes instead of the generator");

  CommonFlags analyze_flags;
  AnalyzeFlags analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "write analysis reports");
  add_common(analyze_cmd, analyze_flags, true);
  analyze_cmd->add_option("--checkpoint", analyze.checkpoint, "checkpoint.json from train");
  analyze_cmd->add_option("--scenes", analyze.scenes, "fixture directory; default: held-out generated scenes");
  analyze_cmd->add_option("--reports", analyze.reports, "pcc,scatter,suppression,losscurves");
  analyze_cmd->add_option("--log-a", analyze.log_a, "first train_log.csv for losscurves");
  analyze_cmd->add_option("--log-b", analyze.log_b, "second train_log.csv for losscurves");
  analyze_cmd->add_option("--component", analyze.component, "loss component for losscurves");

  CommonFlags check_flags;
  std::optional<int> check_trials;
  bool sabotage = false;
  auto* check = app.add_subcommand("checkgrad", "finite-difference gradient suites");
  add_common(check, check_flags, false);
  check->add_option("--trials", check_trials, "instances per suite");
  check->add_flag("--sabotage", sabotage, "corrupt analytic gradients (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_flags);
    if (*train_cmd) return cmd_train(train_flags, train_head, train_scenes);
    if (*analyze_cmd) return cmd_analyze(analyze_flags, analyze);
    if (*check) return cmd_checkgrad(check_flags, check_trials, sabotage);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
