#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>

namespace rdeepc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Raised when an operand has the wrong shape. The message names the operand.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& operand, const std::string& detail)
      : std::invalid_argument(operand + ": " + detail), operand_(operand) {}
  const std::string& operand() const noexcept { return operand_; }

 private:
  std::string operand_;
};

/// Raised when a configuration document is malformed. `path` locates the field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& detail)
      : std::runtime_error(path + ": " + detail), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

inline void require_shape(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                          Eigen::Index want_rows, Eigen::Index want_cols) {
  if (rows != want_rows || cols != want_cols)
    throw DimensionError(name, "expected " + std::to_string(want_rows) + "x" +
                                   std::to_string(want_cols) + ", got " + std::to_string(rows) +
                                   "x" + std::to_string(cols));
}

inline void require_size(const std::string& name, Eigen::Index size, Eigen::Index want) {
  if (size != want)
    throw DimensionError(name, "expected length " + std::to_string(want) + ", got " +
                                   std::to_string(size));
}

// Numerical rank with tolerance rel_tol * sigma_max.
int numerical_rank(const Matrix& M, double rel_tol = 1e-8);

// Symmetric square root of a symmetric positive semidefinite matrix.
// Throws std::invalid_argument (mentioning `name`) if M is not symmetric PSD.
Matrix psd_sqrt(const Matrix& M, const std::string& name, double tol = 1e-10);

}  // namespace rdeepc
