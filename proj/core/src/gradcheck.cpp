#include "lqe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "lqe/distribution.hpp"
#include "lqe/errors.hpp"
#include "lqe/geometry.hpp"
#include "lqe/losses.hpp"
#include "lqe/model.hpp"
#include "lqe/quality_head.hpp"
#include "lqe/rng.hpp"

namespace lqe {

bool GradCheckReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw InvalidInput("relative_error: length mismatch");
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-7});
}

namespace {

constexpr int kMaxRedraws = 1000;

using Loss = std::function<double(std::span<const double>)>;

std::vector<double> numeric_gradient(const Loss& f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double old = x[i];
    x[i] = old + h;
    const double up = f(x);
    x[i] = old - h;
    const double down = f(x);
    x[i] = old;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// One instance: returns false when it falls into a kink neighborhood and
// must be redrawn; otherwise fills analytic and numeric gradients.
using Instance = std::function<bool(Rng&, std::vector<double>&, std::vector<double>&)>;

SuiteResult run_suite(const std::string& name, const GradCheckConfig& cfg, std::uint64_t stream,
                      const Instance& instance) {
  SuiteResult r;
  r.name = name;
  Rng rng = Rng::stream(cfg.seed, stream);
  std::vector<double> analytic;
  std::vector<double> numeric;
  while (r.instances < cfg.trials) {
    analytic.clear();
    numeric.clear();
    if (!instance(rng, analytic, numeric)) {
      if (++r.redrawn > kMaxRedraws) {
        r.passed = false;
        break;
      }
      continue;
    }
    if (cfg.sabotage) {
      for (double& a : analytic) a += 1e-3 * (1.0 + std::abs(a));
    }
    const double err = relative_error(analytic, numeric);
    r.max_rel_error = std::max(r.max_rel_error, std::isfinite(err) ? err : 1e300);
    if (!(err < cfg.tolerance)) r.passed = false;
    ++r.instances;
  }
  return r;
}

double guard(const GradCheckConfig& cfg) { return std::max(cfg.tie_gap, 4.0 * cfg.step); }

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Smallest gap among the k + 1 largest values (the top-k boundary and the
// slots inside it).
double topk_gap(std::span<const double> values, int k) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double gap = 1e300;
  const auto last = std::min<std::size_t>(sorted.size() - 1, static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < last; ++i) gap = std::min(gap, sorted[i] - sorted[i + 1]);
  return gap;
}

SuiteResult softmax_suite(const GradCheckConfig& cfg) {
  const BinGrid grid(0.0, 6.0, 16);
  return run_suite("softmax_expectation", cfg, 1, [&](Rng& rng, auto& a, auto& n) {
    const auto z = random_vector(rng, static_cast<std::size_t>(grid.size()), 1.5);
    const auto w = random_vector(rng, z.size(), 1.0);
    auto loss = [&](std::span<const double> logits) {
      std::vector<double> p(logits.size());
      softmax(logits, p);
      return expectation(grid, p) + std::inner_product(p.begin(), p.end(), w.begin(), 0.0);
    };
    std::vector<double> p(z.size());
    softmax(z, p);
    std::vector<double> gp(z.size());
    for (int i = 0; i < grid.size(); ++i) gp[static_cast<std::size_t>(i)] = grid.bin(i) + w[static_cast<std::size_t>(i)];
    a.resize(z.size());
    softmax_backward(p, gp, a);
    n = numeric_gradient(loss, z, cfg.step);
    return true;
  });
}

SuiteResult topkm_suite(const GradCheckConfig& cfg) {
  return run_suite("topkm", cfg, 2, [&](Rng& rng, auto& a, auto& n) {
    const int bins = 17;
    const int k = rng.uniform_int(1, 6);
    const bool var = rng.bernoulli(0.5);
    std::vector<double> p(bins);
    softmax(random_vector(rng, bins, 1.5), p);
    if (topk_gap(p, k) < guard(cfg)) return false;
    const int width = topkm_width(k, var);
    const auto u = random_vector(rng, static_cast<std::size_t>(width), 1.0);
    std::vector<double> vals(static_cast<std::size_t>(width));
    std::vector<int> idx(static_cast<std::size_t>(k));
    auto loss = [&](std::span<const double> probs) {
      std::vector<double> v(static_cast<std::size_t>(width));
      std::vector<int> i(static_cast<std::size_t>(k));
      topkm(probs, k, var, v, i);
      return std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
    };
    topkm(p, k, var, vals, idx);
    a.assign(static_cast<std::size_t>(bins), 0.0);
    backprop_topkm(std::span<const double>(vals.data(), static_cast<std::size_t>(k)), idx, var, u, a);
    n = numeric_gradient(loss, p, cfg.step);
    return true;
  });
}

SuiteResult dgqp_suite(const GradCheckConfig& cfg) {
  return run_suite("dgqp", cfg, 3, [&](Rng& rng, auto& a, auto& n) {
    const int k = rng.uniform_int(1, 4);
    const int p = rng.uniform_int(2, 8);
    const bool var = rng.bernoulli(0.5);
    const auto bias = static_cast<DgqpBias>(rng.uniform_int(0, 2));
    DgqpParams params = DgqpParams::init(k, p, var, bias, rng);
    params.b2 = 0.3 * rng.normal();
    const auto feature = random_vector(rng, static_cast<std::size_t>(params.input_dim()), 0.5);
    const double upstream = rng.normal();
    const DgqpCache cache = dgqp_forward(params, feature);
    if (cache.hidden_pre.cwiseAbs().minCoeff() < guard(cfg) * 10.0) return false;

    // Flatten (w1, b1, w2, b2, feature) into one vector.
    std::vector<double> x;
    auto push = [&](const double* d, Eigen::Index size) { x.insert(x.end(), d, d + size); };
    push(params.w1.data(), params.w1.size());
    if (params.has_hidden_bias()) push(params.b1.data(), params.b1.size());
    push(params.w2.data(), params.w2.size());
    if (params.has_output_bias()) x.push_back(params.b2);
    push(feature.data(), static_cast<Eigen::Index>(feature.size()));

    auto unpack = [&](std::span<const double> v, DgqpParams& q, std::vector<double>& f) {
      std::size_t o = 0;
      auto take = [&](double* d, Eigen::Index size) {
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(o), v.begin() + static_cast<std::ptrdiff_t>(o + static_cast<std::size_t>(size)), d);
        o += static_cast<std::size_t>(size);
      };
      take(q.w1.data(), q.w1.size());
      if (q.has_hidden_bias()) take(q.b1.data(), q.b1.size());
      take(q.w2.data(), q.w2.size());
      if (q.has_output_bias()) take(&q.b2, 1);
      take(f.data(), static_cast<Eigen::Index>(f.size()));
    };
    auto loss = [&](std::span<const double> v) {
      DgqpParams q = params;
      std::vector<double> f = feature;
      unpack(v, q, f);
      return upstream * dgqp_forward(q, f).quality;
    };
    const DgqpGrads g = dgqp_backward(params, cache, upstream);
    auto emit = [&](const double* d, Eigen::Index size) { a.insert(a.end(), d, d + size); };
    emit(g.w1.data(), g.w1.size());
    if (params.has_hidden_bias()) emit(g.b1.data(), g.b1.size());
    emit(g.w2.data(), g.w2.size());
    if (params.has_output_bias()) a.push_back(g.b2);
    emit(g.feature.data(), g.feature.size());
    n = numeric_gradient(loss, x, cfg.step);
    return true;
  });
}

SuiteResult qfl_logit_suite(const GradCheckConfig& cfg) {
  return run_suite("qfl_logit", cfg, 4, [&](Rng& rng, auto& a, auto& n) {
    const double z = 3.0 * rng.normal();
    const double y = rng.bernoulli(0.3) ? 0.0 : rng.uniform();
    const QflConfig q{rng.uniform(1.0, 3.0)};
    if (std::abs(sigmoid(z) - y) < guard(cfg) * 10.0) return false;
    a = {qfl_from_logit(z, y, q).grad};
    n = numeric_gradient([&](std::span<const double> v) { return qfl_from_logit(v[0], y, q).loss; },
                         {z}, cfg.step);
    return true;
  });
}

SuiteResult qfl_prob_suite(const GradCheckConfig& cfg) {
  return run_suite("qfl_prob", cfg, 5, [&](Rng& rng, auto& a, auto& n) {
    const double j = rng.uniform(0.01, 0.99);
    const double y = rng.bernoulli(0.3) ? 0.0 : rng.uniform();
    const QflConfig q{rng.uniform(1.0, 3.0)};
    if (std::abs(j - y) < guard(cfg) * 10.0) return false;
    a = {qfl_from_prob(j, y, q).grad};
    n = numeric_gradient([&](std::span<const double> v) { return qfl_from_prob(v[0], y, q).loss; },
                         {j}, cfg.step);
    return true;
  });
}

SuiteResult dfl_suite(const GradCheckConfig& cfg) {
  const BinGrid grid(0.0, 6.0, 16);
  return run_suite("dfl", cfg, 6, [&](Rng& rng, auto& a, auto& n) {
    const auto z = random_vector(rng, static_cast<std::size_t>(grid.size()), 1.5);
    const double y = rng.uniform(grid.y0(), grid.yn());
    auto loss = [&](std::span<const double> logits) {
      std::vector<double> p(logits.size());
      softmax(logits, p);
      std::vector<double> scratch(logits.size(), 0.0);
      return dfl_accumulate(grid, p, y, 1.0, scratch);
    };
    std::vector<double> p(z.size());
    softmax(z, p);
    a.assign(z.size(), 0.0);
    dfl_accumulate(grid, p, y, 1.0, a);
    n = numeric_gradient(loss, z, cfg.step);
    return true;
  });
}

SuiteResult giou_suite(const GradCheckConfig& cfg) {
  return run_suite("giou", cfg, 7, [&](Rng& rng, auto& a, auto& n) {
    auto box = [&] {
      const double x = rng.uniform(0.0, 10.0);
      const double y = rng.uniform(0.0, 10.0);
      return Box{x, y, x + rng.uniform(0.5, 6.0), y + rng.uniform(0.5, 6.0)};
    };
    const Box p = box();
    const Box g = box();
    const double xs[] = {p.x1, p.x2, g.x1, g.x2};
    const double ys[] = {p.y1, p.y2, g.y1, g.y2};
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        if (std::abs(xs[i] - xs[j]) < guard(cfg) * 10.0) return false;
        if (std::abs(ys[i] - ys[j]) < guard(cfg) * 10.0) return false;
      }
    }
    const auto r = giou_loss(p, g);
    a.assign(r.grad.begin(), r.grad.end());
    n = numeric_gradient(
        [&](std::span<const double> v) { return giou_loss(Box{v[0], v[1], v[2], v[3]}, g).loss; },
        {p.x1, p.y1, p.x2, p.y2}, cfg.step);
    return true;
  });
}

SceneConfig micro_scene() {
  SceneConfig s;
  s.image_width = 32;
  s.image_height = 32;
  s.stride = 8;
  s.min_size = 16.0;
  s.max_size = 32.0;
  s.min_objects = 1;
  s.max_objects = 1;
  s.num_classes = 2;
  s.feature_dim = latent_dim(s);
  s.noise_sigma = 0.1;
  s.ambiguity = 0.5;
  return s;
}

bool decoded_boxes_clear(const LossBatch& lb, double gap) {
  for (std::size_t i = 0; i < lb.targets.size(); ++i) {
    if (!lb.targets[i].positive()) continue;
    const Box p = decode_prediction(lb, static_cast<Eigen::Index>(i));
    const Box& g = lb.targets[i].box;
    const double xs[] = {p.x1, p.x2, g.x1, g.x2};
    const double ys[] = {p.y1, p.y2, g.y1, g.y2};
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        if (std::abs(xs[a] - xs[b]) < gap || std::abs(ys[a] - ys[b]) < gap) return false;
      }
    }
  }
  return true;
}

SuiteResult head_suite(const std::string& name, HeadVariant variant, bool detach,
                       const GradCheckConfig& cfg, std::uint64_t stream) {
  const SceneConfig scene_cfg = micro_scene();
  const Eigen::MatrixXd embed = embedding_matrix(scene_cfg);
  return run_suite(name, cfg, stream, [&](Rng& rng, auto& a, auto& n) {
    HeadConfig hc = head_config_for(scene_cfg, variant);
    hc.hidden = 5;
    hc.grid = BinGrid(0.0, 3.0, 4);
    hc.k = 2;
    hc.p = 3;
    hc.composed_dim = 3;
    hc.prior_prob = 0.3;
    hc.detach_stats = detach;
    HeadParams params = HeadParams::init(hc, rng.next_u64());
    // Spread the distributions away from the near-uniform init.
    for (auto& b : params.blocks()) {
      for (double& v : b.values) v += 0.5 * rng.normal();
    }
    const std::vector<Scene> scenes{generate(scene_cfg, rng.next_u64() % 1000000, embed)};
    const Batch batch = make_batch(scenes);

    const HeadForward f = forward(params, batch.features);
    const double g = guard(cfg) * 10.0;
    if (f.hidden_pre.cwiseAbs().minCoeff() < g) return false;
    for (Eigen::Index col = 0; col < f.dist_probs.cols(); ++col) {
      for (int s = 0; s < 4; ++s) {
        const auto seg = f.dist_probs.col(col).segment(s * hc.grid.size(), hc.grid.size());
        if (topk_gap(std::span<const double>(seg.data(), static_cast<std::size_t>(seg.size())), hc.k) <
            guard(cfg)) {
          return false;
        }
      }
    }
    if (variant == HeadVariant::kDecomposed &&
        f.dgqp.hidden_pre.cwiseAbs().minCoeff() < g) {
      return false;
    }
    if (!decoded_boxes_clear(loss_batch(params, f, batch), g)) return false;

    const LossWeights weights;
    const QflConfig qfl;
    const Eigen::MatrixXd* frozen = detach ? &f.stats : nullptr;
    const LossAndGrad base = loss_and_grad(params, batch, weights, qfl, {}, frozen);
    const std::vector<double> targets = base.loss.quality_targets;

    HeadParams grads = base.grads;
    std::vector<double> x;
    for (const auto& b : params.blocks()) x.insert(x.end(), b.values.begin(), b.values.end());
    for (const auto& b : grads.blocks()) a.insert(a.end(), b.values.begin(), b.values.end());

    HeadParams probe = params;
    auto blocks = probe.blocks();
    auto loss = [&](std::span<const double> v) {
      std::size_t o = 0;
      for (auto& b : blocks) {
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(o),
                  v.begin() + static_cast<std::ptrdiff_t>(o + b.values.size()), b.values.begin());
        o += b.values.size();
      }
      return loss_and_grad(probe, batch, weights, qfl, targets, frozen).loss.total;
    };
    n = numeric_gradient(loss, x, cfg.step);
    return true;
  });
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& config) {
  if (config.trials < 0) throw InvalidArgument("gradcheck: trials must be >= 0");
  if (!(config.step > 0.0) || !(config.tolerance > 0.0)) {
    throw InvalidArgument("gradcheck: step and tolerance must be positive");
  }
  GradCheckReport report;
  report.suites.push_back(softmax_suite(config));
  report.suites.push_back(topkm_suite(config));
  report.suites.push_back(dgqp_suite(config));
  report.suites.push_back(qfl_logit_suite(config));
  report.suites.push_back(qfl_prob_suite(config));
  report.suites.push_back(dfl_suite(config));
  report.suites.push_back(giou_suite(config));
  report.suites.push_back(head_suite("head_gflv1", HeadVariant::kGflv1, false, config, 8));
  report.suites.push_back(head_suite("head_decomposed", HeadVariant::kDecomposed, false, config, 9));
  report.suites.push_back(head_suite("head_composed", HeadVariant::kComposed, false, config, 10));
  report.suites.push_back(head_suite("head_detached", HeadVariant::kDecomposed, true, config, 11));
  return report;
}

}  // namespace lqe
