#pragma once

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "lqe/errors.hpp"
#include "lqe/model.hpp"
#include "lqe/synthgen.hpp"

namespace lqe::detail {

using Json = nlohmann::ordered_json;

Json to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const Json& j);

Json to_json(const HeadConfig& config);
HeadConfig head_config_from_json(const Json& j);

// {"shape": [rows, cols], "data": [...]} with data in row-major order.
Json matrix_to_json(const Eigen::MatrixXd& m);
Json array_to_json(const double* column_major, Eigen::Index rows, Eigen::Index cols);
Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what);

Json parse(std::string_view text, const std::string& what);
void require_header(const Json& j, const std::string& format, int version);

template <class T>
T get(const Json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(what + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(what + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace lqe::detail
