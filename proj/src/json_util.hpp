#pragma once

#include <json.hpp>

#include <string>

#include "rdeepc/types.hpp"

namespace rdeepc::detail {

using json = nlohmann::json;

// Row-major nested arrays. A bare number is read as 1x1; a flat array of numbers as a column.
inline Matrix matrix_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw ConfigError(path, "expected a matrix as nested arrays");
  if (j.empty()) return Matrix(0, 0);
  if (j.front().is_number()) {
    Matrix M(static_cast<Eigen::Index>(j.size()), 1);
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
      M(static_cast<Eigen::Index>(i), 0) = j[i].get<double>();
    }
    return M;
  }
  const auto rows = j.size();
  if (!j.front().is_array()) throw ConfigError(path + "[0]", "expected an array");
  const auto cols = j.front().size();
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array()) throw ConfigError(row_path, "expected an array");
    if (j[r].size() != cols) throw ConfigError(row_path, "ragged row");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        throw ConfigError(row_path + "[" + std::to_string(c) + "]", "expected a number");
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return M;
}

inline Vector vector_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace rdeepc::detail
