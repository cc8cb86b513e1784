#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

#include "rdeepc/data_matrices.hpp"
#include "rdeepc/deepc.hpp"
#include "rdeepc/lti.hpp"

namespace testing {

using rdeepc::Matrix;
using rdeepc::Vector;

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix M(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) M(i, j) = nd(rng);
  return M;
}

inline Vector random_vector(int n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

/// Random plant with spectral radius `radius`.
inline rdeepc::LtiSystem random_stable_system(int n, int m, int p, std::mt19937_64& rng, double radius = 0.8) {
  Matrix A = random_matrix(n, n, rng);
  const double sr = Eigen::EigenSolver<Matrix>(A, false).eigenvalues().cwiseAbs().maxCoeff();
  A *= radius / std::max(sr, 1e-12);
  return rdeepc::LtiSystem(A, random_matrix(n, m, rng), random_matrix(p, n, rng), Matrix::Zero(p, m));
}

/// Noiseless Hankel-predictor problem: data from a random excitation, initial
/// window from a random state, random reference.
struct Instance {
  rdeepc::LtiSystem sys{Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  rdeepc::Trajectory data;
  rdeepc::DeepcProblem prob;
  Vector x_start;
};

inline Instance make_instance(const rdeepc::LtiSystem& sys, int T_ini, int N, int T, std::mt19937_64& rng,
                              rdeepc::DataMatrixKind kind = rdeepc::DataMatrixKind::Hankel) {
  Instance inst;
  inst.sys = sys;
  const int m = sys.m(), p = sys.p();
  inst.data = rdeepc::simulate(sys, Vector::Zero(sys.n()), random_matrix(m, T, rng));
  auto& prob = inst.prob;
  prob.data = rdeepc::make_data_matrices(inst.data, T_ini, N, kind);
  prob.Q = Matrix::Identity(p * N, p * N);
  prob.R = 0.1 * Matrix::Identity(m * N, m * N);
  prob.lambda_u = prob.lambda_y = 1e3;
  prob.r = 0.5 * random_vector(p * N, rng);
  const Vector x0 = random_vector(sys.n(), rng);
  Vector x_end;
  const auto window = rdeepc::simulate(sys, x0, random_matrix(m, T_ini, rng), &x_end);
  prob.u_ini = window.stacked_inputs();
  prob.y_ini = window.stacked_outputs();
  inst.x_start = x_end;
  return inst;
}

/// min over a grid of a scalar function, refined around the best point.
template <class F>
double grid_argmin(F f, double lo, double hi, int points = 20001) {
  double best_x = lo, best = f(lo);
  for (int round = 0; round < 3; ++round) {
    const double step = (hi - lo) / (points - 1);
    for (int i = 0; i < points; ++i) {
      const double x = lo + i * step;
      const double v = f(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    lo = best_x - 2 * step;
    hi = best_x + 2 * step;
  }
  return best_x;
}

}  // namespace testing
