#pragma once

// Discrete edge distributions over evenly spaced offset bins, expectation
// decoding, and the Top-k + mean statistic fed to the quality predictor.

#include <array>
#include <span>
#include <vector>

namespace lqe {

// Evenly spaced bin centers y_i = y0 + i * delta, i = 0..n.
class BinGrid {
 public:
  // Throws InvalidInput unless yn > y0 and n >= 1.
  BinGrid(double y0, double yn, int n);

  double y0() const { return y0_; }
  double yn() const { return yn_; }
  int n() const { return n_; }
  int size() const { return n_ + 1; }
  double delta() const { return (yn_ - y0_) / n_; }
  double bin(int i) const { return y0_ + i * delta(); }

  bool operator==(const BinGrid&) const = default;

 private:
  double y0_;
  double yn_;
  int n_;
};

struct DistributionLogits {
  BinGrid grid;
  std::vector<double> logits;
};

class GeneralDistribution {
 public:
  // Validates every prob in [0, 1] and the sum within 1e-9 of one.
  GeneralDistribution(BinGrid grid, std::vector<double> probs);

  static GeneralDistribution one_hot(const BinGrid& grid, int index);
  static GeneralDistribution uniform(const BinGrid& grid);

  const BinGrid& grid() const { return grid_; }
  std::span<const double> probs() const { return probs_; }
  double operator[](int i) const { return probs_[static_cast<std::size_t>(i)]; }

 private:
  BinGrid grid_;
  std::vector<double> probs_;
};

// Softmax with max subtraction. Throws InvalidInput on non-finite logits.
GeneralDistribution normalize(const DistributionLogits& logits);

// In-place kernel used by the batched head; `out` may alias nothing.
void softmax(std::span<const double> logits, std::span<double> out);

// Gradient of a loss w.r.t. logits given probs = softmax(logits) and
// the gradient w.r.t. probs.
void softmax_backward(std::span<const double> probs, std::span<const double> grad_probs,
                      std::span<double> grad_logits);

// Sum_i P(y_i) * y_i.
double expectation(const GeneralDistribution& dist);
double expectation(const BinGrid& grid, std::span<const double> probs);

// Per-side statistic: the k largest probs (non-increasing), their mean and,
// optionally, their population variance. `indices` records the selected bins
// in the same order as the top values; ties resolve to the lower bin index.
struct TopkmBlock {
  int k = 0;
  bool include_variance = false;
  std::vector<double> values;
  std::vector<int> indices;
};

int topkm_width(int k, bool include_variance);

TopkmBlock topkm(const GeneralDistribution& dist, int k, bool include_variance);

// Allocation-free kernel: writes topkm_width(k, v) values and k indices.
void topkm(std::span<const double> probs, int k, bool include_variance,
           std::span<double> values, std::span<int> indices);

// Routes `upstream` (one entry per statistic slot) back onto the bins chosen
// by the forward pass. Unselected bins receive zero.
std::vector<double> backprop_topkm(const TopkmBlock& block, int num_bins,
                                   std::span<const double> upstream);

void backprop_topkm(std::span<const double> top_values, std::span<const int> indices,
                    bool include_variance, std::span<const double> upstream,
                    std::span<double> grad_probs);

enum class Side { kLeft = 0, kRight = 1, kTop = 2, kBottom = 3 };

// Concatenated Topkm blocks in side order l, r, t, b.
struct StatFeature {
  int k = 0;
  bool include_variance = false;
  std::vector<double> values;
  std::array<std::vector<int>, 4> indices;

  static int width(int k, bool include_variance) { return 4 * topkm_width(k, include_variance); }
};

// Throws InvalidInput when the four grids differ, InvalidArgument on bad k.
StatFeature assemble_stat_feature(const std::array<GeneralDistribution, 4>& sides, int k,
                                  bool include_variance);

// Mean over sides of each side's maximum probability.
double mean_top1(const std::array<GeneralDistribution, 4>& sides);

}  // namespace lqe
