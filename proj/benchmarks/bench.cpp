#include <benchmark/benchmark.h>

#include "lqe/distribution.hpp"
#include "lqe/geometry.hpp"
#include "lqe/model.hpp"
#include "lqe/quality_head.hpp"
#include "lqe/rng.hpp"
#include "lqe/synthgen.hpp"
#include "lqe/trainer.hpp"

using namespace lqe;

namespace {

void BM_Topkm(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Rng rng(1);
  std::vector<double> logits(17), probs(17);
  for (double& l : logits) l = rng.normal();
  softmax(logits, probs);
  std::vector<double> values(static_cast<std::size_t>(topkm_width(k, true)));
  std::vector<int> indices(static_cast<std::size_t>(k));
  for (auto _ : state) {
    topkm(probs, k, true, values, indices);
    benchmark::DoNotOptimize(values.data());
  }
}
BENCHMARK(BM_Topkm)->Arg(1)->Arg(4)->Arg(8);

void BM_DgqpForwardBatch(benchmark::State& state) {
  Rng rng(2);
  const auto params = DgqpParams::init(4, 64, false, DgqpBias::kBoth, rng);
  Eigen::MatrixXd stats(20, state.range(0));
  for (Eigen::Index i = 0; i < stats.size(); ++i) stats.data()[i] = rng.uniform();
  for (auto _ : state) {
    auto out = dgqp_forward_batch(params, stats);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DgqpForwardBatch)->Arg(256)->Arg(1024);

void BM_Nms(benchmark::State& state) {
  Rng rng(3);
  std::vector<DetectionCandidate> cands(static_cast<std::size_t>(state.range(0)));
  for (auto& c : cands) {
    const double x = rng.uniform(0, 100), y = rng.uniform(0, 100);
    c.box = {x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40)};
    c.joint_scores = {rng.uniform(), rng.uniform(), rng.uniform()};
  }
  for (auto _ : state) {
    auto kept = nms(cands);
    benchmark::DoNotOptimize(kept);
  }
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_NmsReference(benchmark::State& state) {
  Rng rng(3);
  std::vector<DetectionCandidate> cands(static_cast<std::size_t>(state.range(0)));
  for (auto& c : cands) {
    const double x = rng.uniform(0, 100), y = rng.uniform(0, 100);
    c.box = {x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40)};
    c.joint_scores = {rng.uniform(), rng.uniform(), rng.uniform()};
  }
  for (auto _ : state) {
    auto kept = nms_reference(cands);
    benchmark::DoNotOptimize(kept);
  }
}
BENCHMARK(BM_NmsReference)->Arg(100)->Arg(1000);

void BM_TrainStep(benchmark::State& state) {
  const auto variant = static_cast<HeadVariant>(state.range(0));
  SceneConfig sc;
  sc.seed = 4;
  TrainConfig tc;
  const std::vector<Scene> scenes{generate(sc, 0), generate(sc, 1)};
  const Batch batch = make_batch(scenes);
  HeadParams params = HeadParams::init(head_config_for(sc, variant), 4);
  Optimizer optimizer(tc);
  for (auto _ : state) {
    auto m = step(params, optimizer, batch, tc, 1e-4);
    benchmark::DoNotOptimize(m);
  }
  state.SetLabel(std::string(to_string(variant)));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_GenerateScene(benchmark::State& state) {
  SceneConfig sc;
  const auto embed = embedding_matrix(sc);
  std::uint64_t i = 0;
  for (auto _ : state) {
    auto s = generate(sc, i++, embed);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_GenerateScene)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
