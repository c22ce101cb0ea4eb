// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: lqe_acceptance <path to lqe executable> <scratch directory>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lqe/analysis.hpp"
#include "lqe/checkpoint.hpp"
#include "lqe/csv.hpp"
#include "lqe/distribution.hpp"
#include "lqe/geometry.hpp"
#include "lqe/gradcheck.hpp"
#include "lqe/losses.hpp"
#include "lqe/model.hpp"
#include "lqe/quality_head.hpp"
#include "lqe/rng.hpp"
#include "lqe/trainer.hpp"

namespace fs = std::filesystem;
using namespace lqe;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("[%s] criterion %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

int run(const std::string& command) {
  const int rc = std::system((command + " > /dev/null 2>&1").c_str());
  return rc;
}

// Gradient suites

void criterion_gradients() {
  const auto t0 = Clock::now();
  GradCheckConfig cfg;
  cfg.seed = 2024;
  cfg.trials = 100;
  const auto r = run_gradcheck(cfg);
  const double secs = seconds_since(t0);
  bool ok = r.passed() && secs < 30.0 && r.suites.size() == 11;
  double worst = 0.0;
  for (const auto& s : r.suites) {
    ok = ok && s.instances >= 100;
    worst = std::max(worst, s.max_rel_error);
  }
  report(1, ok, "gradient suites",
         fmt("%zu suites x 100 instances, max rel err %.2e (< 1e-4), %.1f s (< 30 s)",
             r.suites.size(), worst, secs));
}

// Exact values

void criterion_exact_values() {
  std::vector<std::string> bad;
  auto check = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) bad.push_back(fmt("%s=%.12g want %.12g", what, got, want));
  };

  const BinGrid g3(0, 3, 3);
  check("expectation", expectation(GeneralDistribution(g3, {0.1, 0.2, 0.3, 0.4})), 2.0, 1e-9);
  check("expectation one-hot", expectation(GeneralDistribution::one_hot(g3, 2)), 2.0, 1e-9);
  const BinGrid g4(0, 4, 4);
  check("expectation uniform", expectation(GeneralDistribution::uniform(g4)), 2.0, 1e-9);
  const auto soft = normalize({g3, {0, std::log(2.0), std::log(4.0), 0}});
  check("softmax", soft[2], 0.5, 1e-9);

  const BinGrid g5(0, 5, 5);
  const auto tk = topkm(GeneralDistribution(g5, {0.05, 0.05, 0.1, 0.2, 0.5, 0.1}), 2, false);
  check("topkm[0]", tk.values[0], 0.5, 1e-9);
  check("topkm[1]", tk.values[1], 0.2, 1e-9);
  check("topkm mean", tk.values[2], 0.35, 1e-9);
  const auto hot = topkm(GeneralDistribution::one_hot(g5, 3), 4, false);
  check("topkm one-hot mean", hot.values[4], 0.25, 1e-9);

  check("iou", iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7, 1e-9);
  check("giou", giou({0, 0, 1, 1}, {2, 0, 3, 1}), -1.0 / 3, 1e-9);
  check("qfl", qfl_from_prob(0.5, 1.0).loss, 0.25 * std::log(2.0), 1e-6);
  check("qfl zero", qfl_from_prob(0.7, 0.7).loss, 0.0, 1e-6);
  check("dfl", dfl(GeneralDistribution(g3, {0, 0.5, 0.5, 0}), 1.5).loss, std::log(2.0), 1e-6);
  check("dfl exact bin", dfl(GeneralDistribution::one_hot(g3, 1), 1.0).loss, 0.0, 1e-6);

  std::string detail = "16 unit values reproduced";
  if (!bad.empty()) {
    detail.clear();
    for (const auto& b : bad) detail += b + "; ";
  }
  report(2, bad.empty(), "exact unit values", detail);
}

// Parameter count

void criterion_parameter_count() {
  const auto both = dgqp_parameter_count(4, 64, false, DgqpBias::kBoth);
  const auto output_only = dgqp_parameter_count(4, 64, false, DgqpBias::kOutputOnly);
  const auto none = dgqp_parameter_count(4, 64, false, DgqpBias::kNone);
  const SceneConfig sc;
  const auto added = HeadParams::zeros(head_config_for(sc, HeadVariant::kDecomposed)).parameter_count() -
                     HeadParams::zeros(head_config_for(sc, HeadVariant::kGflv1)).parameter_count();
  const bool ok = both == 1409 && output_only == 1345 && added == 1409;
  report(3, ok, "DGQP parameter count",
         fmt("k=4 p=64: %lld with biases, %lld hidden bias disabled, %lld no biases; "
             "decomposed head adds %lld over gflv1",
             static_cast<long long>(both), static_cast<long long>(output_only),
             static_cast<long long>(none), static_cast<long long>(added)));
}

// Shared trainings for the learned-behaviour criteria

struct Run {
  std::uint64_t seed = 0;
  HeadVariant variant = HeadVariant::kGflv1;
  HeadParams params;
  TrainLog log;
  EvalReport report;
  double pcc = 0.0;
  double seconds = 0.0;
};

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr HeadVariant kVariants[] = {HeadVariant::kGflv1, HeadVariant::kDecomposed,
                                     HeadVariant::kComposed};

std::vector<Run> train_all() {
  std::vector<Run> runs;
  for (std::uint64_t seed : kSeeds) {
    SceneConfig sc;
    sc.seed = seed;
    TrainConfig tc;
    tc.seed = seed;
    const auto eval = eval_scenes(sc, 100);
    for (HeadVariant v : kVariants) {
      const auto t0 = Clock::now();
      SyntheticSceneStream stream(sc);
      auto result = train(tc, stream, head_config_for(sc, v));
      Run r{seed, v, std::move(result.params), std::move(result.log), {}, 0.0, 0.0};
      r.report = evaluate(r.params, eval);
      r.pcc = pcc_report(r.report).pcc;
      r.seconds = seconds_since(t0);
      std::printf("  trained seed %llu %-18s %.1f s  pcc %.4f  final qfl_pos %.5f\n",
                  static_cast<unsigned long long>(seed), std::string(to_string(v)).c_str(),
                  r.seconds, r.pcc, final_loss(r.log, LossComponent::kQflPos));
      std::fflush(stdout);
      runs.push_back(std::move(r));
    }
  }
  return runs;
}

const Run& find(const std::vector<Run>& runs, std::uint64_t seed, HeadVariant v) {
  for (const auto& r : runs) {
    if (r.seed == seed && r.variant == v) return r;
  }
  throw std::logic_error("missing run");
}

void criterion_pcc_vs_gflv1(const std::vector<Run>& runs) {
  int wins = 0;
  double gap = 0.0, secs = 0.0;
  std::string per_seed;
  for (std::uint64_t s : kSeeds) {
    const auto& a = find(runs, s, HeadVariant::kDecomposed);
    const auto& b = find(runs, s, HeadVariant::kGflv1);
    wins += a.pcc > b.pcc;
    gap += (a.pcc - b.pcc) / 5;
    secs += a.seconds + b.seconds;
    per_seed += fmt(" %.3f/%.3f", a.pcc, b.pcc);
  }
  const bool ok = wins >= 4 && gap > 0 && secs < 600;
  report(4, ok, "PCC decomposed vs gflv1",
         fmt("wins %d/5, mean gain %+.4f, %.0f s (< 600 s); pcc I/J per seed:%s", wins, gap, secs,
             per_seed.c_str()));
}

void criterion_top1_scatter(const std::vector<Run>& runs, const std::string& lqe,
                            const fs::path& scratch) {
  const auto& run1 = find(runs, 1, HeadVariant::kDecomposed);
  const fs::path dir = scratch / "c5";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SceneConfig sc;
  sc.seed = 1;
  save_checkpoint(dir / "checkpoint.json", {run1.params, sc, 1, TrainConfig{}.steps});
  const int rc = run(lqe + " analyze --checkpoint " + (dir / "checkpoint.json").string() +
                     " --reports scatter --out " + (dir / "out").string());
  double r = 0.0;
  std::size_t rows = 0;
  if (rc == 0 && fs::exists(dir / "out" / "scatter_top1.csv")) {
    const auto table = parse_csv(read_text_file(dir / "out" / "scatter_top1.csv"));
    std::vector<double> x, y;
    for (const auto& row : table.rows) {
      x.push_back(parse_double(row[0]));
      y.push_back(parse_double(row[1]));
    }
    rows = x.size();
    r = pcc(x, y);
  }
  const bool ok = rc == 0 && rows == run1.report.candidates.size() && r > 0.2;
  report(5, ok, "Top-1 sharpness vs IoU",
         fmt("scatter_top1.csv from 'lqe analyze': %zu rows, PCC %.4f (> 0.2)", rows, r));
}

void criterion_loss_curves(const std::vector<Run>& runs) {
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t s : kSeeds) {
    const auto cmp = loss_curve_compare(find(runs, s, HeadVariant::kDecomposed).log,
                                        find(runs, s, HeadVariant::kGflv1).log);
    wins += cmp.final_gap <= 0.0;
    per_seed += fmt(" %+.5f", cmp.final_gap);
  }
  report(6, wins >= 4, "final positive QFL decomposed <= gflv1",
         fmt("%d/5 seeds; final gap per seed:%s", wins, per_seed.c_str()));
}

void criterion_decomposed_vs_composed(const std::vector<Run>& runs) {
  int wins = 0;
  double gap = 0.0;
  std::string per_seed;
  for (std::uint64_t s : kSeeds) {
    const auto& a = find(runs, s, HeadVariant::kDecomposed);
    const auto& b = find(runs, s, HeadVariant::kComposed);
    wins += a.pcc >= b.pcc;
    gap += (a.pcc - b.pcc) / 5;
    per_seed += fmt(" %+.4f", a.pcc - b.pcc);
  }
  const bool ok = wins >= 3 && gap >= -0.05;
  report(7, ok, "PCC decomposed vs composed (d=64)",
         fmt("wins %d/5, mean gap %+.4f (>= -0.05); per seed:%s", wins, gap, per_seed.c_str()));
}

void criterion_suppression(const std::vector<Run>& runs) {
  const std::vector<double> levels{0.0, 0.05, 0.1, 0.2, 0.4, 0.8};
  std::vector<double> learned_mean(levels.size(), 0.0), oracle_mean(levels.size(), 0.0);
  bool oracle_exact = true;
  double random = 0.0;
  for (std::uint64_t s : kSeeds) {
    const auto cands = suppression_candidates(find(runs, s, HeadVariant::kDecomposed).report);
    const auto learned = mean_suppression_study(cands, levels, 100 * s, 20);
    const auto oracle = mean_suppression_study(with_oracle_scores(cands), levels, 100 * s, 20);
    oracle_exact = oracle_exact && oracle[0].retention == 1.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      learned_mean[i] += learned[i].retention / 5;
      oracle_mean[i] += oracle[i].retention / 5;
    }
    random += random_ranking_retention(cands, 200, s) / 5;
  }
  const double rho_learned = spearman(levels, learned_mean);
  const double rho_oracle = spearman(levels, oracle_mean);
  const double gain = learned_mean[0] - random;
  const bool ok = oracle_exact && rho_oracle <= -0.8 && rho_learned <= -0.8 && gain >= 0.1;
  std::string curve;
  for (double v : learned_mean) curve += fmt(" %.3f", v);
  report(8, ok, "suppression retention",
         fmt("oracle at zero corruption %s; Spearman trend oracle %.3f learned %.3f (<= -0.8); "
             "learned %.4f vs random %.4f, gain %+.4f (>= 0.1); learned curve:%s",
             oracle_exact ? "1.0 exactly" : "below 1.0", rho_oracle, rho_learned, learned_mean[0],
             random, gain, curve.c_str()));
}

// NMS equivalence

void criterion_nms() {
  Rng rng(99);
  int mismatches = 0;
  std::size_t total = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = rng.uniform_int(0, 80);
    const int classes = rng.uniform_int(1, 4);
    std::vector<DetectionCandidate> c(static_cast<std::size_t>(n));
    for (auto& d : c) {
      const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
      d.box = {x, y, x + rng.uniform(0.5, 30), y + rng.uniform(0.5, 30)};
      d.joint_scores.resize(static_cast<std::size_t>(classes));
      for (double& s : d.joint_scores) s = std::round(rng.uniform() * 25) / 25;
    }
    const NmsConfig cfg{rng.uniform(0.1, 0.9), rng.uniform(0, 0.3), rng.bernoulli(0.8)};
    const auto fast = nms(c, cfg);
    mismatches += fast != nms_reference(c, cfg);
    total += fast.size();
  }
  report(9, mismatches == 0, "NMS matches O(n^2) reference",
         fmt("1000 random sets, %zu kept detections, %d mismatches", total, mismatches));
}

// CLI determinism

bool same_tree(const fs::path& a, const fs::path& b, int& files, std::string& diff) {
  std::vector<fs::path> rel_a, rel_b;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
  }
  std::sort(rel_a.begin(), rel_a.end());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel_a != rel_b) {
    diff = "file sets differ";
    return false;
  }
  files = static_cast<int>(rel_a.size());
  for (const auto& r : rel_a) {
    if (read_text_file(a / r) != read_text_file(b / r)) {
      diff = r.string();
      return false;
    }
  }
  return true;
}

void criterion_determinism(const std::string& lqe, const fs::path& scratch) {
  const fs::path root = scratch / "c10";
  const fs::path run_dir = root / "run";
  fs::remove_all(root);
  const std::string d = run_dir.string();
  const std::vector<std::string> commands{
      lqe + " gen --seed 3 --set gen.count=3 --out " + d + "/gen",
      lqe + " train --seed 3 --variant gflv2_decomposed --set train.steps=60 --scenes " + d +
          "/gen --out " + d + "/train_a",
      lqe + " train --seed 3 --variant gflv1_style --set train.steps=60 --out " + d + "/train_b",
      lqe + " analyze --seed 3 --checkpoint " + d + "/train_a/checkpoint.json" +
          " --set analyze.eval_scenes=4 --set analyze.suppression_seeds=3" +
          " --reports pcc,scatter,suppression,losscurves --log-a " + d + "/train_b/train_log.csv" +
          " --log-b " + d + "/train_a/train_log.csv --out " + d + "/analyze",
      lqe + " checkgrad --seed 3 --trials 3 --out " + d + "/checkgrad"};
  bool ok = true;
  std::string detail;
  for (int pass = 0; pass < 2 && ok; ++pass) {
    fs::remove_all(run_dir);
    for (const auto& c : commands) {
      if (run(c) != 0) {
        ok = false;
        detail = "command failed: " + c;
        break;
      }
    }
    if (pass == 0 && ok) fs::rename(run_dir, root / "first");
  }
  int files = 0;
  if (ok) {
    std::string diff;
    ok = same_tree(root / "first", run_dir, files, diff);
    detail = ok ? fmt("gen, train x2, analyze, checkgrad repeated: %d files bitwise identical", files)
                : "differs: " + diff;
  }
  report(10, ok, "CLI determinism", detail);
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <lqe executable> <scratch dir>\n", argv[0]);
    return 2;
  }
  const std::string lqe = argv[1];
  const fs::path scratch = argv[2];
  fs::create_directories(scratch);
  const auto t0 = Clock::now();

  criterion_gradients();
  criterion_exact_values();
  criterion_parameter_count();
  criterion_nms();
  criterion_determinism(lqe, scratch);

  std::printf("training 5 seeds x 3 variants\n");
  std::fflush(stdout);
  const auto runs = train_all();
  criterion_pcc_vs_gflv1(runs);
  criterion_top1_scatter(runs, lqe, scratch);
  criterion_loss_curves(runs);
  criterion_decomposed_vs_composed(runs);
  criterion_suppression(runs);

  std::printf("%d of 10 criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
