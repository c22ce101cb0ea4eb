#include "lqe/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lqe/errors.hpp"
#include "lqe/rng.hpp"

namespace lqe {

namespace {

constexpr std::uint64_t kInitStream = 0x5EEDC0DE0001ULL;

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
  }
}

void fill_uniform(Eigen::VectorXd& v, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
}

template <class M>
ParamBlock block_of(const char* name, M& m) {
  return {name, std::span<double>(m.data(), static_cast<std::size_t>(m.size())), m.rows(), m.cols()};
}

bool uses_class_branch(HeadVariant v) { return v != HeadVariant::kComposed; }

}  // namespace

std::string_view to_string(HeadVariant variant) {
  switch (variant) {
    case HeadVariant::kGflv1:
      return "gflv1_style";
    case HeadVariant::kDecomposed:
      return "gflv2_decomposed";
    case HeadVariant::kComposed:
      return "gflv2_composed";
  }
  return "unknown";
}

HeadVariant parse_variant(std::string_view name) {
  if (name == "gflv1" || name == "gflv1_style") return HeadVariant::kGflv1;
  if (name == "gflv2" || name == "gflv2_decomposed") return HeadVariant::kDecomposed;
  if (name == "composed" || name == "gflv2_composed") return HeadVariant::kComposed;
  throw InvalidArgument("unknown head variant '" + std::string(name) + "'");
}

void validate(const HeadConfig& c) {
  if (c.feature_dim < 1 || c.hidden < 1 || c.num_classes < 1) {
    throw InvalidInput("head config: feature_dim, hidden and num_classes must be positive");
  }
  if (c.k < 1 || c.k > c.grid.size()) throw InvalidArgument("head config: k outside [1, n + 1]");
  if (c.p < 1) throw InvalidArgument("head config: p must be positive");
  if (c.composed_dim < 0) throw InvalidArgument("head config: composed_dim must be >= 0");
  if (!(c.stride > 0.0)) throw InvalidInput("head config: stride must be positive");
  if (!(c.prior_prob > 0.0 && c.prior_prob < 1.0)) {
    throw InvalidInput("head config: prior_prob must lie in (0, 1)");
  }
}

HeadConfig head_config_for(const SceneConfig& scene, HeadVariant variant) {
  HeadConfig c;
  c.variant = variant;
  c.feature_dim = scene.feature_dim;
  c.num_classes = scene.num_classes;
  c.grid = default_grid(scene);
  c.stride = scene.stride;
  return c;
}

HeadParams HeadParams::zeros(const HeadConfig& config) {
  validate(config);
  HeadParams p;
  p.config = config;
  p.w0 = Eigen::MatrixXd::Zero(config.hidden, config.feature_dim);
  p.b0 = Eigen::VectorXd::Zero(config.hidden);
  if (uses_class_branch(config.variant)) {
    p.wc = Eigen::MatrixXd::Zero(config.num_classes, config.hidden);
    p.bc = Eigen::VectorXd::Zero(config.num_classes);
  }
  p.wr = Eigen::MatrixXd::Zero(config.dist_rows(), config.hidden);
  p.br = Eigen::VectorXd::Zero(config.dist_rows());
  if (config.variant == HeadVariant::kDecomposed) {
    p.dgqp = DgqpParams::zeros(config.k, config.p, config.include_variance, config.dgqp_bias);
  }
  if (config.variant == HeadVariant::kComposed) {
    p.composed = ComposedHeadParams::zeros(config.hidden, config.stat_dim(), config.composed_dim,
                                           config.num_classes);
  }
  return p;
}

HeadParams HeadParams::init(const HeadConfig& config, std::uint64_t seed) {
  HeadParams p = zeros(config);
  Rng rng = Rng::stream(seed, kInitStream);
  const double prior = -std::log((1.0 - config.prior_prob) / config.prior_prob);
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(config.feature_dim));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  fill_uniform(p.w0, in_bound, rng);
  fill_uniform(p.b0, in_bound, rng);
  if (uses_class_branch(config.variant)) {
    fill_uniform(p.wc, hid_bound, rng);
    p.bc.setConstant(prior);
  }
  fill_uniform(p.wr, hid_bound, rng);
  if (config.variant == HeadVariant::kDecomposed) {
    p.dgqp = DgqpParams::init(config.k, config.p, config.include_variance, config.dgqp_bias, rng);
  }
  if (config.variant == HeadVariant::kComposed) {
    p.composed = ComposedHeadParams::init(config.hidden, config.stat_dim(), config.composed_dim,
                                          config.num_classes, prior, rng);
  }
  return p;
}

std::vector<ParamBlock> HeadParams::blocks() {
  std::vector<ParamBlock> out;
  out.push_back(block_of("backbone.w", w0));
  out.push_back(block_of("backbone.b", b0));
  if (uses_class_branch(config.variant)) {
    out.push_back(block_of("cls.w", wc));
    out.push_back(block_of("cls.b", bc));
  }
  out.push_back(block_of("reg.w", wr));
  out.push_back(block_of("reg.b", br));
  if (config.variant == HeadVariant::kDecomposed) {
    out.push_back(block_of("dgqp.w1", dgqp.w1));
    if (dgqp.has_hidden_bias()) out.push_back(block_of("dgqp.b1", dgqp.b1));
    out.push_back(block_of("dgqp.w2", dgqp.w2));
    if (dgqp.has_output_bias()) out.push_back({"dgqp.b2", std::span<double>(&dgqp.b2, 1), 1, 1});
  }
  if (config.variant == HeadVariant::kComposed) {
    if (composed.embed_dim > 0) {
      out.push_back(block_of("composed.embed_w", composed.embed_w));
      out.push_back(block_of("composed.embed_b", composed.embed_b));
    }
    out.push_back(block_of("composed.joint_w", composed.joint_w));
    out.push_back(block_of("composed.joint_b", composed.joint_b));
  }
  return out;
}

std::int64_t HeadParams::parameter_count() const {
  std::int64_t n = w0.size() + b0.size() + wr.size() + br.size();
  if (uses_class_branch(config.variant)) n += wc.size() + bc.size();
  return n + quality_parameter_count(*this);
}

std::int64_t quality_parameter_count(const HeadParams& params) {
  switch (params.config.variant) {
    case HeadVariant::kGflv1:
      return 0;
    case HeadVariant::kDecomposed:
      return params.dgqp.parameter_count();
    case HeadVariant::kComposed:
      return params.composed.parameter_count();
  }
  return 0;
}

Batch make_batch(std::span<const Scene> scenes) {
  Batch batch;
  Eigen::Index total = 0;
  for (const auto& s : scenes) total += s.num_locations();
  if (scenes.empty()) return batch;
  batch.features.resize(scenes.front().features.rows(), total);
  Eigen::Index col = 0;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const Scene& s = scenes[si];
    if (s.features.rows() != batch.features.rows()) {
      throw InvalidInput("make_batch: scenes disagree on feature_dim");
    }
    batch.features.middleCols(col, s.num_locations()) = s.features;
    for (int li = 0; li < s.num_locations(); ++li) {
      batch.locations.push_back(s.locations[static_cast<std::size_t>(li)]);
      const int a = s.assignment[static_cast<std::size_t>(li)];
      LocationTarget t;
      if (a >= 0) {
        t.cls = s.objects[static_cast<std::size_t>(a)].cls;
        t.box = s.objects[static_cast<std::size_t>(a)].box;
      }
      batch.targets.push_back(t);
      batch.origin.emplace_back(static_cast<int>(si), li);
    }
    col += s.num_locations();
  }
  return batch;
}

HeadForward forward(const HeadParams& params, const Eigen::MatrixXd& features,
                    const Eigen::MatrixXd* frozen_stats) {
  const HeadConfig& cfg = params.config;
  if (features.rows() != cfg.feature_dim) {
    throw InvalidInput("forward: feature rows " + std::to_string(features.rows()) +
                       " do not match feature_dim " + std::to_string(cfg.feature_dim));
  }
  const Eigen::Index num = features.cols();
  const int bins = cfg.grid.size();
  const int width = topkm_width(cfg.k, cfg.include_variance);

  HeadForward f;
  f.hidden_pre.noalias() = params.w0 * features;
  f.hidden_pre.colwise() += params.b0;
  f.hidden = f.hidden_pre.cwiseMax(0.0);

  if (uses_class_branch(cfg.variant)) {
    f.cls_logits.noalias() = params.wc * f.hidden;
    f.cls_logits.colwise() += params.bc;
  }
  f.dist_logits.noalias() = params.wr * f.hidden;
  f.dist_logits.colwise() += params.br;

  f.dist_probs.resize(f.dist_logits.rows(), num);
  f.stats.resize(cfg.stat_dim(), num);
  f.top_indices.resize(static_cast<std::size_t>(4 * cfg.k * num));
  for (Eigen::Index col = 0; col < num; ++col) {
    for (int s = 0; s < 4; ++s) {
      const Eigen::Index off = col * f.dist_logits.rows() + static_cast<Eigen::Index>(s) * bins;
      const std::span<const double> z(f.dist_logits.data() + off, static_cast<std::size_t>(bins));
      const std::span<double> p(f.dist_probs.data() + off, static_cast<std::size_t>(bins));
      softmax(z, p);
      topkm(p, cfg.k, cfg.include_variance,
            std::span<double>(f.stats.data() + col * f.stats.rows() + s * width,
                              static_cast<std::size_t>(width)),
            std::span<int>(f.top_indices.data() + (col * 4 + s) * cfg.k,
                           static_cast<std::size_t>(cfg.k)));
    }
  }
  if (frozen_stats != nullptr) {
    if (frozen_stats->rows() != f.stats.rows() || frozen_stats->cols() != num) {
      throw InvalidInput("forward: frozen statistic has the wrong shape");
    }
    f.stats = *frozen_stats;
  }

  switch (cfg.variant) {
    case HeadVariant::kGflv1:
      f.loss_input = f.cls_logits;
      f.scores = f.cls_logits.unaryExpr([](double z) { return sigmoid(z); });
      f.loss_input_is_logit = true;
      break;
    case HeadVariant::kDecomposed:
      f.dgqp = dgqp_forward_batch(params.dgqp, f.stats);
      f.quality = f.dgqp.quality;
      f.cls_prob = f.cls_logits.unaryExpr([](double z) { return sigmoid(z); });
      f.loss_input = f.cls_prob.array().rowwise() * f.quality.array();
      f.scores = f.loss_input;
      f.loss_input_is_logit = false;
      break;
    case HeadVariant::kComposed:
      f.composed = composed_forward_batch(params.composed, f.hidden, f.stats);
      f.loss_input = f.composed.logits;
      f.scores = f.composed.logits.unaryExpr([](double z) { return sigmoid(z); });
      f.loss_input_is_logit = true;
      break;
  }
  return f;
}

LossBatch loss_batch(const HeadParams& params, const HeadForward& fwd, const Batch& batch,
                     std::span<const double> frozen_quality_targets) {
  LossBatch lb;
  lb.grid = params.config.grid;
  lb.stride = params.config.stride;
  lb.joint = &fwd.loss_input;
  lb.joint_is_logit = fwd.loss_input_is_logit;
  lb.dist_probs = &fwd.dist_probs;
  lb.locations = batch.locations;
  lb.targets = batch.targets;
  lb.quality_targets = frozen_quality_targets;
  return lb;
}

void backward(const HeadParams& params, const Eigen::MatrixXd& features, const HeadForward& f,
              const LossOutput& loss, HeadParams& grads) {
  const HeadConfig& cfg = params.config;
  const Eigen::Index num = features.cols();
  const int bins = cfg.grid.size();
  const int width = topkm_width(cfg.k, cfg.include_variance);

  Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(cfg.hidden, num);
  Eigen::MatrixXd d_cls;
  Eigen::MatrixXd d_stats;

  switch (cfg.variant) {
    case HeadVariant::kGflv1:
      d_cls = loss.d_joint;
      break;
    case HeadVariant::kDecomposed: {
      const Eigen::MatrixXd d_c = loss.d_joint.array().rowwise() * f.quality.array();
      const Eigen::RowVectorXd d_quality =
          (loss.d_joint.array() * f.cls_prob.array()).colwise().sum();
      d_cls = d_c.array() * f.cls_prob.array() * (1.0 - f.cls_prob.array());
      dgqp_backward_batch(params.dgqp, f.dgqp, f.stats, d_quality, grads.dgqp, d_stats);
      break;
    }
    case HeadVariant::kComposed: {
      Eigen::MatrixXd d_h;
      composed_backward_batch(params.composed, f.composed, f.hidden, f.stats, loss.d_joint,
                              grads.composed, d_h, d_stats);
      d_hidden += d_h;
      break;
    }
  }

  Eigen::MatrixXd d_dist = loss.d_dist_logits;
  if (d_stats.size() > 0 && !cfg.detach_stats) {
    std::vector<double> d_probs(static_cast<std::size_t>(bins));
    std::vector<double> d_logits(static_cast<std::size_t>(bins));
    for (Eigen::Index col = 0; col < num; ++col) {
      for (int s = 0; s < 4; ++s) {
        std::fill(d_probs.begin(), d_probs.end(), 0.0);
        const double* top = f.stats.data() + col * f.stats.rows() + s * width;
        const double* up = d_stats.data() + col * d_stats.rows() + s * width;
        backprop_topkm(std::span<const double>(top, static_cast<std::size_t>(cfg.k)),
                       std::span<const int>(f.top_indices.data() + (col * 4 + s) * cfg.k,
                                            static_cast<std::size_t>(cfg.k)),
                       cfg.include_variance,
                       std::span<const double>(up, static_cast<std::size_t>(width)), d_probs);
        const Eigen::Index off = col * f.dist_probs.rows() + static_cast<Eigen::Index>(s) * bins;
        softmax_backward(std::span<const double>(f.dist_probs.data() + off,
                                                 static_cast<std::size_t>(bins)),
                         d_probs, d_logits);
        for (int i = 0; i < bins; ++i) d_dist(s * bins + i, col) += d_logits[static_cast<std::size_t>(i)];
      }
    }
  }

  grads.wr.noalias() += d_dist * f.hidden.transpose();
  grads.br.noalias() += d_dist.rowwise().sum();
  d_hidden.noalias() += params.wr.transpose() * d_dist;

  if (uses_class_branch(cfg.variant)) {
    grads.wc.noalias() += d_cls * f.hidden.transpose();
    grads.bc.noalias() += d_cls.rowwise().sum();
    d_hidden.noalias() += params.wc.transpose() * d_cls;
  }

  d_hidden.array() *= (f.hidden_pre.array() > 0.0).cast<double>();
  grads.w0.noalias() += d_hidden * features.transpose();
  grads.b0.noalias() += d_hidden.rowwise().sum();
}

LossAndGrad loss_and_grad(const HeadParams& params, const Batch& batch, const LossWeights& weights,
                          const QflConfig& qfl, std::span<const double> frozen_quality_targets,
                          const Eigen::MatrixXd* frozen_stats) {
  const HeadForward f = forward(params, batch.features, frozen_stats);
  if (!f.dist_probs.allFinite() || !f.loss_input.allFinite()) {
    LossAndGrad diverged{{}, HeadParams::zeros(params.config)};
    diverged.loss.total = std::numeric_limits<double>::quiet_NaN();
    return diverged;
  }
  LossAndGrad out{total_loss(loss_batch(params, f, batch, frozen_quality_targets), weights, qfl),
                  HeadParams::zeros(params.config)};
  backward(params, batch.features, f, out.loss, out.grads);
  return out;
}

}  // namespace lqe
