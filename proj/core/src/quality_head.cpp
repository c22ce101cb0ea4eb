#include "lqe/quality_head.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "lqe/errors.hpp"
#include "lqe/rng.hpp"

namespace lqe {

namespace {

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
  }
}

void fill_uniform(Eigen::VectorXd& v, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
}

std::uint64_t fnv_mix(std::uint64_t h, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, data + i, sizeof bits);
    h = (h ^ bits) * 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::int64_t dgqp_parameter_count(int k, int p, bool include_variance, DgqpBias bias) {
  const std::int64_t in = StatFeature::width(k, include_variance);
  std::int64_t count = static_cast<std::int64_t>(p) * in + p;
  if (bias == DgqpBias::kBoth) count += p;
  if (bias != DgqpBias::kNone) count += 1;
  return count;
}

std::int64_t DgqpParams::parameter_count() const {
  return dgqp_parameter_count(k, p, include_variance, bias);
}

DgqpParams DgqpParams::zeros(int k, int p, bool include_variance, DgqpBias bias) {
  if (k < 1 || p < 1) throw InvalidArgument("DgqpParams: k and p must be positive");
  DgqpParams params;
  params.k = k;
  params.p = p;
  params.include_variance = include_variance;
  params.bias = bias;
  params.w1 = Eigen::MatrixXd::Zero(p, params.input_dim());
  params.b1 = Eigen::VectorXd::Zero(p);
  params.w2 = Eigen::VectorXd::Zero(p);
  params.b2 = 0.0;
  return params;
}

DgqpParams DgqpParams::init(int k, int p, bool include_variance, DgqpBias bias, Rng& rng) {
  DgqpParams params = zeros(k, p, include_variance, bias);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(params.input_dim()));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(p));
  fill_uniform(params.w1, bound1, rng);
  if (params.has_hidden_bias()) fill_uniform(params.b1, bound1, rng);
  fill_uniform(params.w2, bound2, rng);
  return params;
}

std::uint64_t fingerprint(const DgqpParams& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  h = fnv_mix(h, params.w1.data(), params.w1.size());
  h = fnv_mix(h, params.b1.data(), params.b1.size());
  h = fnv_mix(h, params.w2.data(), params.w2.size());
  h = fnv_mix(h, &params.b2, 1);
  return h;
}

DgqpCache dgqp_forward(const DgqpParams& params, std::span<const double> feature) {
  if (static_cast<int>(feature.size()) != params.input_dim()) {
    throw InvalidInput("dgqp_forward: feature width " + std::to_string(feature.size()) +
                       " does not match expected " + std::to_string(params.input_dim()));
  }
  DgqpCache cache;
  cache.feature = Eigen::Map<const Eigen::VectorXd>(feature.data(),
                                                    static_cast<Eigen::Index>(feature.size()));
  cache.hidden_pre = params.w1 * cache.feature;
  if (params.has_hidden_bias()) cache.hidden_pre += params.b1;
  cache.hidden = cache.hidden_pre.cwiseMax(0.0);
  cache.logit = params.w2.dot(cache.hidden);
  if (params.has_output_bias()) cache.logit += params.b2;
  cache.quality = sigmoid(cache.logit);
  cache.params_fingerprint = fingerprint(params);
  return cache;
}

DgqpCache dgqp_forward(const DgqpParams& params, const StatFeature& feature) {
  if (feature.k != params.k || feature.include_variance != params.include_variance) {
    throw InvalidInput("dgqp_forward: statistic configuration does not match params");
  }
  return dgqp_forward(params, std::span<const double>(feature.values));
}

DgqpGrads dgqp_backward(const DgqpParams& params, const DgqpCache& cache, double d_quality) {
  if (cache.params_fingerprint != fingerprint(params) ||
      cache.feature.size() != params.input_dim()) {
    throw ContractViolation("dgqp_backward: cache does not belong to these parameters");
  }
  DgqpGrads g;
  const double d_logit = d_quality * cache.quality * (1.0 - cache.quality);
  g.b2 = params.has_output_bias() ? d_logit : 0.0;
  g.w2 = d_logit * cache.hidden;
  Eigen::VectorXd d_hidden_pre = d_logit * params.w2;
  for (Eigen::Index i = 0; i < d_hidden_pre.size(); ++i) {
    if (!(cache.hidden_pre(i) > 0.0)) d_hidden_pre(i) = 0.0;
  }
  g.b1 = params.has_hidden_bias() ? d_hidden_pre : Eigen::VectorXd::Zero(params.p);
  g.w1 = d_hidden_pre * cache.feature.transpose();
  g.feature = params.w1.transpose() * d_hidden_pre;
  return g;
}

DgqpBatch dgqp_forward_batch(const DgqpParams& params, const Eigen::MatrixXd& features) {
  if (features.rows() != params.input_dim()) {
    throw InvalidInput("dgqp_forward_batch: feature rows do not match input_dim");
  }
  DgqpBatch out;
  out.hidden_pre.noalias() = params.w1 * features;
  if (params.has_hidden_bias()) out.hidden_pre.colwise() += params.b1;
  out.hidden = out.hidden_pre.cwiseMax(0.0);
  out.quality.noalias() = params.w2.transpose() * out.hidden;
  const double b2 = params.has_output_bias() ? params.b2 : 0.0;
  for (Eigen::Index j = 0; j < out.quality.size(); ++j) out.quality(j) = sigmoid(out.quality(j) + b2);
  return out;
}

void dgqp_backward_batch(const DgqpParams& params, const DgqpBatch& batch,
                         const Eigen::MatrixXd& features, const Eigen::RowVectorXd& d_quality,
                         DgqpParams& grads, Eigen::MatrixXd& d_features) {
  const Eigen::RowVectorXd d_logit =
      d_quality.cwiseProduct(batch.quality.cwiseProduct((1.0 - batch.quality.array()).matrix()));
  if (params.has_output_bias()) grads.b2 += d_logit.sum();
  grads.w2.noalias() += batch.hidden * d_logit.transpose();
  Eigen::MatrixXd d_hidden_pre = params.w2 * d_logit;
  d_hidden_pre.array() *= (batch.hidden_pre.array() > 0.0).cast<double>();
  if (params.has_hidden_bias()) grads.b1.noalias() += d_hidden_pre.rowwise().sum();
  grads.w1.noalias() += d_hidden_pre * features.transpose();
  d_features.noalias() = params.w1.transpose() * d_hidden_pre;
}

JointScore join_decomposed(std::span<const double> c, double i) {
  if (!(i >= 0.0 && i <= 1.0)) throw InvalidInput("join_decomposed: quality outside [0, 1]");
  JointScore out;
  out.c.assign(c.begin(), c.end());
  out.i = i;
  out.j.reserve(c.size());
  for (double cls : c) {
    if (!(cls >= 0.0 && cls <= 1.0)) {
      throw InvalidInput("join_decomposed: class score outside [0, 1]");
    }
    out.j.push_back(cls * i);
  }
  return out;
}

int argmax_class(std::span<const double> j) {
  if (j.empty()) throw InvalidInput("argmax_class: empty score vector");
  int best = 0;
  for (std::size_t c = 1; c < j.size(); ++c) {
    if (j[c] > j[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

int argmax_class(const JointScore& score) { return argmax_class(score.j); }

std::int64_t ComposedHeadParams::parameter_count() const {
  return embed_w.size() + embed_b.size() + joint_w.size() + joint_b.size();
}

ComposedHeadParams ComposedHeadParams::zeros(int class_dim, int stat_dim, int embed_dim,
                                             int num_classes) {
  if (class_dim < 1 || stat_dim < 1 || embed_dim < 0 || num_classes < 1) {
    throw InvalidArgument("ComposedHeadParams: invalid dimensions");
  }
  ComposedHeadParams params;
  params.class_dim = class_dim;
  params.stat_dim = stat_dim;
  params.embed_dim = embed_dim;
  params.num_classes = num_classes;
  params.embed_w = Eigen::MatrixXd::Zero(embed_dim, stat_dim);
  params.embed_b = Eigen::VectorXd::Zero(embed_dim);
  params.joint_w = Eigen::MatrixXd::Zero(num_classes, class_dim + params.enriched_dim());
  params.joint_b = Eigen::VectorXd::Zero(num_classes);
  return params;
}

ComposedHeadParams ComposedHeadParams::init(int class_dim, int stat_dim, int embed_dim,
                                            int num_classes, double prior_bias, Rng& rng) {
  ComposedHeadParams params = zeros(class_dim, stat_dim, embed_dim, num_classes);
  if (embed_dim > 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(stat_dim));
    fill_uniform(params.embed_w, bound, rng);
    fill_uniform(params.embed_b, bound, rng);
  }
  fill_uniform(params.joint_w, 1.0 / std::sqrt(static_cast<double>(params.joint_w.cols())), rng);
  params.joint_b.setConstant(prior_bias);
  return params;
}

Eigen::VectorXd composed_forward(const ComposedHeadParams& params,
                                 std::span<const double> class_feature,
                                 std::span<const double> stat_feature) {
  if (static_cast<int>(class_feature.size()) != params.class_dim ||
      static_cast<int>(stat_feature.size()) != params.stat_dim) {
    throw InvalidInput("composed_forward: input dimensions do not match params");
  }
  const Eigen::MatrixXd h = Eigen::Map<const Eigen::VectorXd>(class_feature.data(), params.class_dim);
  const Eigen::MatrixXd s = Eigen::Map<const Eigen::VectorXd>(stat_feature.data(), params.stat_dim);
  return composed_forward_batch(params, h, s).logits.col(0);
}

ComposedBatch composed_forward_batch(const ComposedHeadParams& params,
                                     const Eigen::MatrixXd& class_features,
                                     const Eigen::MatrixXd& stat_features) {
  if (class_features.rows() != params.class_dim || stat_features.rows() != params.stat_dim ||
      class_features.cols() != stat_features.cols()) {
    throw InvalidInput("composed_forward_batch: input dimensions do not match params");
  }
  ComposedBatch out;
  if (params.embed_dim > 0) {
    out.enriched.noalias() = params.embed_w * stat_features;
    out.enriched.colwise() += params.embed_b;
  } else {
    out.enriched = stat_features;
  }
  out.logits.noalias() = params.joint_w.leftCols(params.class_dim) * class_features;
  out.logits.noalias() += params.joint_w.rightCols(params.enriched_dim()) * out.enriched;
  out.logits.colwise() += params.joint_b;
  return out;
}

void composed_backward_batch(const ComposedHeadParams& params, const ComposedBatch& batch,
                             const Eigen::MatrixXd& class_features,
                             const Eigen::MatrixXd& stat_features, const Eigen::MatrixXd& d_logits,
                             ComposedHeadParams& grads, Eigen::MatrixXd& d_class_features,
                             Eigen::MatrixXd& d_stat_features) {
  grads.joint_b.noalias() += d_logits.rowwise().sum();
  grads.joint_w.leftCols(params.class_dim).noalias() += d_logits * class_features.transpose();
  grads.joint_w.rightCols(params.enriched_dim()).noalias() += d_logits * batch.enriched.transpose();
  d_class_features.noalias() = params.joint_w.leftCols(params.class_dim).transpose() * d_logits;
  const Eigen::MatrixXd d_enriched =
      params.joint_w.rightCols(params.enriched_dim()).transpose() * d_logits;
  if (params.embed_dim > 0) {
    grads.embed_b.noalias() += d_enriched.rowwise().sum();
    grads.embed_w.noalias() += d_enriched * stat_features.transpose();
    d_stat_features.noalias() = params.embed_w.transpose() * d_enriched;
  } else {
    d_stat_features = d_enriched;
  }
}

}  // namespace lqe
