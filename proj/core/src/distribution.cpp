#include "lqe/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lqe/errors.hpp"

namespace lqe {

namespace {

constexpr double kSumTolerance = 1e-9;

void check_k(int k, int num_bins) {
  if (k < 1 || k > num_bins) {
    throw InvalidArgument("topkm: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(num_bins) + "]");
  }
}

}  // namespace

BinGrid::BinGrid(double y0, double yn, int n) : y0_(y0), yn_(yn), n_(n) {
  if (!std::isfinite(y0) || !std::isfinite(yn) || !(yn > y0)) {
    throw InvalidInput("BinGrid: require finite yn > y0");
  }
  if (n < 1) throw InvalidInput("BinGrid: require n >= 1");
}

GeneralDistribution::GeneralDistribution(BinGrid grid, std::vector<double> probs)
    : grid_(grid), probs_(std::move(probs)) {
  if (static_cast<int>(probs_.size()) != grid_.size()) {
    throw InvalidInput("GeneralDistribution: expected " + std::to_string(grid_.size()) +
                       " probabilities, got " + std::to_string(probs_.size()));
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("GeneralDistribution: prob outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidInput("GeneralDistribution: probabilities do not sum to 1");
  }
}

GeneralDistribution GeneralDistribution::one_hot(const BinGrid& grid, int index) {
  if (index < 0 || index >= grid.size()) throw InvalidArgument("one_hot: index out of range");
  std::vector<double> probs(static_cast<std::size_t>(grid.size()), 0.0);
  probs[static_cast<std::size_t>(index)] = 1.0;
  return {grid, std::move(probs)};
}

GeneralDistribution GeneralDistribution::uniform(const BinGrid& grid) {
  return {grid, std::vector<double>(static_cast<std::size_t>(grid.size()), 1.0 / grid.size())};
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] *= inv;
}

void softmax_backward(std::span<const double> probs, std::span<const double> grad_probs,
                      std::span<double> grad_logits) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_probs[i];
  for (std::size_t i = 0; i < probs.size(); ++i) grad_logits[i] = probs[i] * (grad_probs[i] - dot);
}

GeneralDistribution normalize(const DistributionLogits& logits) {
  if (static_cast<int>(logits.logits.size()) != logits.grid.size()) {
    throw InvalidInput("normalize: logit count does not match grid");
  }
  for (double z : logits.logits) {
    if (!std::isfinite(z)) throw InvalidInput("normalize: non-finite logit");
  }
  std::vector<double> probs(logits.logits.size());
  softmax(logits.logits, probs);
  return {logits.grid, std::move(probs)};
}

double expectation(const BinGrid& grid, std::span<const double> probs) {
  double acc = 0.0;
  for (int i = 0; i < grid.size(); ++i) acc += probs[static_cast<std::size_t>(i)] * grid.bin(i);
  return acc;
}

double expectation(const GeneralDistribution& dist) {
  return expectation(dist.grid(), dist.probs());
}

int topkm_width(int k, bool include_variance) { return k + 1 + (include_variance ? 1 : 0); }

void topkm(std::span<const double> probs, int k, bool include_variance,
           std::span<double> values, std::span<int> indices) {
  const int num_bins = static_cast<int>(probs.size());
  check_k(k, num_bins);
  // Small fixed-size bins (n + 1 is typically 17): selection by repeated scan
  // keeps the lowest-index-wins tie rule trivially exact.
  std::vector<char> taken(static_cast<std::size_t>(num_bins), 0);
  double sum = 0.0;
  for (int slot = 0; slot < k; ++slot) {
    int best = -1;
    for (int i = 0; i < num_bins; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) {
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    indices[static_cast<std::size_t>(slot)] = best;
    values[static_cast<std::size_t>(slot)] = probs[static_cast<std::size_t>(best)];
    sum += probs[static_cast<std::size_t>(best)];
  }
  const double mean = sum / k;
  values[static_cast<std::size_t>(k)] = mean;
  if (include_variance) {
    double var = 0.0;
    for (int slot = 0; slot < k; ++slot) {
      const double d = values[static_cast<std::size_t>(slot)] - mean;
      var += d * d;
    }
    values[static_cast<std::size_t>(k) + 1] = var / k;
  }
}

TopkmBlock topkm(const GeneralDistribution& dist, int k, bool include_variance) {
  check_k(k, dist.grid().size());
  TopkmBlock block;
  block.k = k;
  block.include_variance = include_variance;
  block.values.resize(static_cast<std::size_t>(topkm_width(k, include_variance)));
  block.indices.resize(static_cast<std::size_t>(k));
  topkm(dist.probs(), k, include_variance, block.values, block.indices);
  return block;
}

void backprop_topkm(std::span<const double> top_values, std::span<const int> indices,
                    bool include_variance, std::span<const double> upstream,
                    std::span<double> grad_probs) {
  const auto k = indices.size();
  const double g_mean = upstream[k];
  double mean = 0.0;
  if (include_variance) {
    for (std::size_t s = 0; s < k; ++s) mean += top_values[s];
    mean /= static_cast<double>(k);
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t s = 0; s < k; ++s) {
    double g = upstream[s] + inv_k * g_mean;
    if (include_variance) g += upstream[k + 1] * 2.0 * inv_k * (top_values[s] - mean);
    grad_probs[static_cast<std::size_t>(indices[s])] += g;
  }
}

std::vector<double> backprop_topkm(const TopkmBlock& block, int num_bins,
                                   std::span<const double> upstream) {
  if (static_cast<int>(upstream.size()) != topkm_width(block.k, block.include_variance)) {
    throw InvalidInput("backprop_topkm: upstream width mismatch");
  }
  std::vector<double> grad(static_cast<std::size_t>(num_bins), 0.0);
  backprop_topkm(block.values, block.indices, block.include_variance, upstream, grad);
  return grad;
}

StatFeature assemble_stat_feature(const std::array<GeneralDistribution, 4>& sides, int k,
                                  bool include_variance) {
  for (const auto& side : sides) {
    if (!(side.grid() == sides[0].grid())) {
      throw InvalidInput("assemble_stat_feature: side distributions use different grids");
    }
  }
  StatFeature feature;
  feature.k = k;
  feature.include_variance = include_variance;
  feature.values.reserve(static_cast<std::size_t>(StatFeature::width(k, include_variance)));
  for (std::size_t s = 0; s < 4; ++s) {
    auto block = topkm(sides[s], k, include_variance);
    feature.values.insert(feature.values.end(), block.values.begin(), block.values.end());
    feature.indices[s] = std::move(block.indices);
  }
  return feature;
}

double mean_top1(const std::array<GeneralDistribution, 4>& sides) {
  double acc = 0.0;
  for (const auto& side : sides) {
    acc += *std::max_element(side.probs().begin(), side.probs().end());
  }
  return acc / 4.0;
}

}  // namespace lqe
