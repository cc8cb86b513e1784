#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "rdeepc/types.hpp"

namespace rdeepc {

int numerical_rank(const Matrix& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double tol = rel_tol * s(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++rank;
  return rank;
}

Matrix psd_sqrt(const Matrix& M, const std::string& name, double tol) {
  if (M.rows() != M.cols()) throw DimensionError(name, "must be square");
  if (M.size() == 0) return M;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument(name + ": matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (M + M.transpose()));
  Vector ev = eig.eigenvalues();
  if (ev.minCoeff() < -tol * scale)
    throw std::invalid_argument(name + ": matrix is not positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace rdeepc
