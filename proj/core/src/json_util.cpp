#include "json_util.hpp"

#include <cmath>

namespace lqe::detail {

namespace {

const char* bias_name(DgqpBias bias) {
  switch (bias) {
    case DgqpBias::kBoth:
      return "both";
    case DgqpBias::kOutputOnly:
      return "output_only";
    case DgqpBias::kNone:
      return "none";
  }
  return "both";
}

DgqpBias parse_bias(const std::string& name) {
  if (name == "both") return DgqpBias::kBoth;
  if (name == "output_only") return DgqpBias::kOutputOnly;
  if (name == "none") return DgqpBias::kNone;
  throw FormatError("unknown dgqp_bias '" + name + "'");
}

}  // namespace

Json to_json(const SceneConfig& c) {
  Json j;
  j["image_width"] = c.image_width;
  j["image_height"] = c.image_height;
  j["stride"] = c.stride;
  j["min_objects"] = c.min_objects;
  j["max_objects"] = c.max_objects;
  j["num_classes"] = c.num_classes;
  j["ambiguity"] = c.ambiguity;
  j["feature_dim"] = c.feature_dim;
  j["noise_sigma"] = c.noise_sigma;
  j["blur_sigma"] = c.blur_sigma;
  j["code_width"] = c.code_width;
  j["blur_widen"] = c.blur_widen;
  j["min_size"] = c.min_size;
  j["max_size"] = c.max_size;
  j["max_overlap_iou"] = c.max_overlap_iou;
  j["seed"] = c.seed;
  return j;
}

SceneConfig scene_config_from_json(const Json& j) {
  const std::string what = "scene config";
  SceneConfig c;
  c.image_width = get<int>(j, "image_width", what);
  c.image_height = get<int>(j, "image_height", what);
  c.stride = get<int>(j, "stride", what);
  c.min_objects = get<int>(j, "min_objects", what);
  c.max_objects = get<int>(j, "max_objects", what);
  c.num_classes = get<int>(j, "num_classes", what);
  c.ambiguity = get<double>(j, "ambiguity", what);
  c.feature_dim = get<int>(j, "feature_dim", what);
  c.noise_sigma = get<double>(j, "noise_sigma", what);
  c.blur_sigma = get<double>(j, "blur_sigma", what);
  c.code_width = get<double>(j, "code_width", what);
  c.blur_widen = get<double>(j, "blur_widen", what);
  c.min_size = get<double>(j, "min_size", what);
  c.max_size = get<double>(j, "max_size", what);
  c.max_overlap_iou = get<double>(j, "max_overlap_iou", what);
  c.seed = get<std::uint64_t>(j, "seed", what);
  validate(c);
  return c;
}

Json to_json(const HeadConfig& c) {
  Json j;
  j["variant"] = std::string(to_string(c.variant));
  j["feature_dim"] = c.feature_dim;
  j["hidden"] = c.hidden;
  j["num_classes"] = c.num_classes;
  j["grid"] = {{"y0", c.grid.y0()}, {"yn", c.grid.yn()}, {"n", c.grid.n()}};
  j["stride"] = c.stride;
  j["k"] = c.k;
  j["p"] = c.p;
  j["include_variance"] = c.include_variance;
  j["dgqp_bias"] = bias_name(c.dgqp_bias);
  j["composed_dim"] = c.composed_dim;
  j["detach_stats"] = c.detach_stats;
  j["prior_prob"] = c.prior_prob;
  return j;
}

HeadConfig head_config_from_json(const Json& j) {
  const std::string what = "head config";
  HeadConfig c;
  try {
    c.variant = parse_variant(get<std::string>(j, "variant", what));
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  c.feature_dim = get<int>(j, "feature_dim", what);
  c.hidden = get<int>(j, "hidden", what);
  c.num_classes = get<int>(j, "num_classes", what);
  const Json grid = get<Json>(j, "grid", what);
  c.grid = BinGrid(get<double>(grid, "y0", what), get<double>(grid, "yn", what),
                   get<int>(grid, "n", what));
  c.stride = get<double>(j, "stride", what);
  c.k = get<int>(j, "k", what);
  c.p = get<int>(j, "p", what);
  c.include_variance = get<bool>(j, "include_variance", what);
  c.dgqp_bias = parse_bias(get<std::string>(j, "dgqp_bias", what));
  c.composed_dim = get<int>(j, "composed_dim", what);
  c.detach_stats = get<bool>(j, "detach_stats", what);
  c.prior_prob = get<double>(j, "prior_prob", what);
  validate(c);
  return c;
}

Json array_to_json(const double* data, Eigen::Index rows, Eigen::Index cols) {
  Json values = Json::array();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = data[c * rows + r];
      if (!std::isfinite(v)) throw InvalidInput("cannot serialize a non-finite value");
      values.push_back(v);
    }
  }
  Json j;
  j["shape"] = {rows, cols};
  j["data"] = std::move(values);
  return j;
}

Json matrix_to_json(const Eigen::MatrixXd& m) { return array_to_json(m.data(), m.rows(), m.cols()); }

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  const auto shape = get<std::vector<Eigen::Index>>(j, "shape", what);
  const auto data = get<std::vector<double>>(j, "data", what);
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
      static_cast<std::size_t>(shape[0] * shape[1]) != data.size()) {
    throw FormatError(what + ": shape does not match data length");
  }
  Eigen::MatrixXd m(shape[0], shape[1]);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[i++];
  }
  return m;
}

Json parse(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

void require_header(const Json& j, const std::string& format, int version) {
  const auto f = get<std::string>(j, "format", format);
  if (f != format) throw FormatError("expected format '" + format + "', got '" + f + "'");
  const int v = get<int>(j, "version", format);
  if (v != version) {
    throw FormatError(format + ": unsupported version " + std::to_string(v));
  }
}

}  // namespace lqe::detail
