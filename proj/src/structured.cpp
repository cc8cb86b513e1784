#include <Eigen/Eigenvalues>

#include <cmath>

#include "rdeepc/deepc.hpp"

namespace rdeepc {

Matrix banded_shift_matrix(const Vector& x, int L) {
  if (L < 1) throw std::invalid_argument("banded_shift_matrix: L must be positive");
  const int nx = static_cast<int>(x.size());
  Matrix M = Matrix::Zero(L, nx + L - 1);
  for (int i = 0; i < L; ++i) M.block(i, i, 1, nx) = x.transpose();
  return M;
}

Matrix StructuredOperators::D(const Vector& g) const {
  require_size("g", g.size(), static_cast<Eigen::Index>(D_lin.size()));
  Matrix out = D0;
  for (std::size_t l = 0; l < D_lin.size(); ++l)
    if (g(static_cast<Eigen::Index>(l)) != 0.0) out += g(static_cast<Eigen::Index>(l)) * D_lin[l];
  return out;
}

bool StructuredOperators::is_constant() const {
  for (const auto& Dl : D_lin)
    for (int k = 0; k < Dl.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(Dl, k); it; ++it)
        if (it.value() != 0.0) return false;
  return true;
}

StructuredOperators build_structured_operators(const DeepcProblem& prob, const std::array<double, 4>& alpha) {
  const auto& dm = prob.data;
  if (dm.kind != DataMatrixKind::Hankel) throw std::invalid_argument("structured set requires Hankel data matrices");
  if (prob.hard_initial)
    throw std::invalid_argument("structured set perturbs the initial window; hard initial equalities unsupported");
  for (double a : alpha)
    if (!(a >= 0.0)) throw std::invalid_argument("structured scaling coefficients must be nonnegative");
  const StackedData st = assemble_stacked(prob);
  const int m = dm.m(), p = dm.p(), Ti = dm.T_ini, N = dm.N, L = Ti + N, Hc = dm.columns();
  const int T = Hc + L - 1;
  if (dm.source_inputs.cols() != T || dm.source_outputs.cols() != T)
    throw DimensionError("data.source", "recorded signals missing or inconsistent with the Hankel matrices");

  StructuredOperators ops;
  ops.A0 = st.A0;
  ops.b0 = st.b0;
  ops.alpha = alpha;
  ops.T = T;
  ops.block_sizes = {m * T, p * T, m * Ti, p * Ti};
  const int off1 = 0, off2 = m * T, off3 = (m + p) * T, off4 = (m + p) * T + m * Ti;
  const int nxi = ops.n_xi();
  const int Hr = st.rows();

  ops.D0 = Matrix::Zero(Hr, nxi);
  ops.D0.block(st.u_past.offset, off3, m * Ti, m * Ti).diagonal().setConstant(st.sqrt_lambda_u * alpha[2]);
  ops.D0.block(st.y_past.offset, off4, p * Ti, p * Ti).diagonal().setConstant(st.sqrt_lambda_y * alpha[3]);

  // D_l = -(data-perturbation block of D1 at g = e_l).
  ops.D_lin.resize(Hc);
  for (int l = 0; l < Hc; ++l) {
    std::vector<Triplet> trips;
    if (alpha[0] != 0.0) {
      for (int i = 0; i < Ti; ++i)
        for (int c = 0; c < m; ++c)
          trips.emplace_back(st.u_past.offset + i * m + c, off1 + (i + l) * m + c, -st.sqrt_lambda_u * alpha[0]);
      for (int i = 0; i < N; ++i)
        for (int c = 0; c < m; ++c) {
          const int col = off1 + (Ti + i + l) * m + c;
          for (int r = 0; r < m * N; ++r) {
            const double v = st.sqrt_R(r, i * m + c);
            if (v != 0.0) trips.emplace_back(st.u_future.offset + r, col, -alpha[0] * v);
          }
        }
    }
    if (alpha[1] != 0.0) {
      for (int i = 0; i < Ti; ++i)
        for (int c = 0; c < p; ++c)
          trips.emplace_back(st.y_past.offset + i * p + c, off2 + (i + l) * p + c, -st.sqrt_lambda_y * alpha[1]);
      for (int i = 0; i < N; ++i)
        for (int c = 0; c < p; ++c) {
          const int col = off2 + (Ti + i + l) * p + c;
          for (int r = 0; r < p * N; ++r) {
            const double v = st.sqrt_Q(r, i * p + c);
            if (v != 0.0) trips.emplace_back(st.y_future.offset + r, col, -alpha[1] * v);
          }
        }
    }
    ops.D_lin[l].resize(Hr, nxi);
    ops.D_lin[l].setFromTriplets(trips.begin(), trips.end());
  }
  return ops;
}

Reformulation reform_structured_sdp(const StructuredOperators& ops, double rho, const FeasibleSet& G) {
  if (!(rho >= 0.0)) throw std::invalid_argument("structured radius must be nonnegative");
  const int Hr = static_cast<int>(ops.A0.rows()), Hc = static_cast<int>(ops.A0.cols());
  const int nxi = ops.n_xi();
  // Keep only xi-columns that can be nonzero.
  std::vector<char> used(nxi, 0);
  for (int j = 0; j < nxi; ++j)
    if (ops.D0.col(j).cwiseAbs().maxCoeff() > 0.0) used[j] = 1;
  for (const auto& Dl : ops.D_lin)
    for (int k = 0; k < Dl.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(Dl, k); it; ++it)
        if (it.value() != 0.0) used[it.col()] = 1;
  std::vector<int> keep_index(nxi, -1);
  int nk = 0;
  for (int j = 0; j < nxi; ++j)
    if (used[j]) keep_index[j] = nk++;

  // The perturbation is rescaled to the unit ball (D -> rho D) so that the
  // multiplier and the epigraph variable have comparable magnitudes.
  const double ds = rho > 0.0 ? rho : 1.0;
  const double rad = rho > 0.0 ? 1.0 : 0.0;

  ConicProgram prog(Hc);
  const int tau = prog.add_variables(1, "tau").start;
  const int lam = prog.add_variables(1, "lambda").start;
  prog.add_linear_cost(tau, 1.0);
  const int side = 1 + nk + Hr;
  const int nv = prog.num_vars();
  const double r2 = std::sqrt(2.0);
  std::vector<Triplet> trips;
  Vector f = Vector::Zero(svec_length(side));
  trips.emplace_back(svec_index(side, 0, 0), tau, 1.0);
  trips.emplace_back(svec_index(side, 0, 0), lam, -rad * rad);
  for (int j = 0; j < nk; ++j) trips.emplace_back(svec_index(side, 1 + j, 1 + j), lam, 1.0);
  for (int i = 0; i < Hr; ++i) {
    const int row = 1 + nk + i;
    f(svec_index(side, row, row)) = 1.0;
    // c(g) in the first column.
    const int ic = svec_index(side, row, 0);
    f(ic) = -r2 * ops.b0(i);
    for (int l = 0; l < Hc; ++l)
      if (ops.A0(i, l) != 0.0) trips.emplace_back(ic, l, r2 * ops.A0(i, l));
    for (int j = 0; j < nxi; ++j)
      if (keep_index[j] >= 0 && ops.D0(i, j) != 0.0) f(svec_index(side, row, 1 + keep_index[j])) = r2 * ds * ops.D0(i, j);
  }
  for (int l = 0; l < Hc; ++l) {
    const auto& Dl = ops.D_lin[l];
    for (int k = 0; k < Dl.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(Dl, k); it; ++it) {
        if (it.value() == 0.0) continue;
        const int row = 1 + nk + static_cast<int>(it.row());
        trips.emplace_back(svec_index(side, row, 1 + keep_index[it.col()]), l, r2 * ds * it.value());
      }
  }
  SparseMatrix F(svec_length(side), nv);
  F.setFromTriplets(trips.begin(), trips.end());
  prog.add_constraint(Cone{ConeKind::PositiveSemidefinite, side}, F, f, "lmi");
  if (nk == 0) {
    Matrix pos = Matrix::Zero(1, nv);
    pos(0, lam) = 1.0;
    prog.add_nonnegative(pos, Vector::Zero(1), "lambda");
  }
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Squared};
}

Reformulation reform_structured_socp(const Matrix& D, const Matrix& A0, const Vector& b0, double rho,
                                     const FeasibleSet& G) {
  if (!(rho >= 0.0)) throw std::invalid_argument("structured radius must be nonnegative");
  const int Hr = static_cast<int>(A0.rows()), Hc = static_cast<int>(A0.cols());
  if (D.rows() != Hr) throw DimensionError("D", "row count differs from A0");
  require_size("b0", b0.size(), Hr);
  // Drop identically zero columns; they add nothing to the inner maximum.
  std::vector<int> cols;
  for (int j = 0; j < D.cols(); ++j)
    if (D.col(j).cwiseAbs().maxCoeff() > 0.0) cols.push_back(j);
  const int k = static_cast<int>(cols.size());
  Matrix Dk(Hr, k);
  for (int j = 0; j < k; ++j) Dk.col(j) = D.col(cols[j]);
  Vector alpha(0);
  Matrix DS(Hr, 0);
  if (k > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Dk.transpose() * Dk);
    alpha = eig.eigenvalues().cwiseMax(0.0);
    DS = Dk * eig.eigenvectors();
  }

  ConicProgram prog(Hc);
  const VarRange nu = prog.add_variables(k, "nu");
  const int lam = prog.add_variables(1, "lambda").start;
  const int nv = prog.num_vars();
  // c(g)'c(g) = g'A0'A0 g - 2 b0'A0 g + b0'b0
  prog.add_quadratic_cost(2.0 * A0.transpose() * A0);
  prog.add_linear_cost(-2.0 * A0.transpose() * b0);
  prog.add_constant(b0.squaredNorm());
  for (int l = 0; l < k; ++l) prog.add_linear_cost(nu.start + l, 1.0);
  prog.add_linear_cost(lam, rho * rho);
  for (int l = 0; l < k; ++l) {
    // (nu - alpha + lambda, 2 c'DS_l, nu + alpha - lambda) in SOC_3
    Matrix F = Matrix::Zero(3, nv);
    Vector f(3);
    F(0, nu.start + l) = 1.0;
    F(0, lam) = 1.0;
    f(0) = -alpha(l);
    F.block(1, 0, 1, Hc) = 2.0 * DS.col(l).transpose() * A0;
    f(1) = -2.0 * DS.col(l).dot(b0);
    F(2, nu.start + l) = 1.0;
    F(2, lam) = -1.0;
    f(2) = alpha(l);
    prog.add_constraint(Cone{ConeKind::SecondOrder, 3}, F, f, "diag_" + std::to_string(l));
  }
  Matrix pos = Matrix::Zero(1, nv);
  pos(0, lam) = 1.0;
  prog.add_nonnegative(pos, Vector::Zero(1), "lambda");
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Squared};
}

Reformulation reform_structured_socp(const StructuredOperators& ops, double rho, const FeasibleSet& G) {
  if (!ops.is_constant())
    throw std::invalid_argument("D depends on g (noisy data matrices); use the semidefinite reformulation");
  return reform_structured_socp(ops.D0, ops.A0, ops.b0, rho, G);
}

double unstructured_radius_containing(const StructuredOperators& ops, double rho) {
  if (!(rho >= 0.0)) throw std::invalid_argument("structured radius must be nonnegative");
  // Column l of dA is -D_l xi and db is D0 xi, so L'L = D0'D0 + sum_l D_l'D_l.
  Matrix LtL = ops.D0.transpose() * ops.D0;
  for (const auto& Dl : ops.D_lin) LtL += Matrix(Dl.transpose() * Dl);
  if (LtL.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(LtL, Eigen::EigenvaluesOnly);
  return rho * std::sqrt(std::max(0.0, eig.eigenvalues()(LtL.rows() - 1)));
}

}  // namespace rdeepc
