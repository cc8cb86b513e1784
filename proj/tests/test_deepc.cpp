#include <doctest.h>

#include <cmath>
#include <random>

#include "rdeepc/deepc.hpp"
#include "rdeepc/verification.hpp"
#include "support.hpp"

using namespace rdeepc;
using testing::random_matrix;
using testing::random_stable_system;
using testing::random_vector;

namespace {

LtiSystem scalar(double a, double b, double c, double d) {
  return LtiSystem(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Constant(1, 1, c),
                   Matrix::Constant(1, 1, d));
}

StackedData toy_stacked(const Matrix& A0, const Vector& b0) {
  StackedData st;
  st.A0 = A0;
  st.b0 = b0;
  st.y_future = {0, static_cast<int>(A0.rows())};
  return st;
}

// Noisy Hankel problem whose stacked matrix has full column rank.
testing::Instance noisy_instance(std::mt19937_64& rng, int T = 14, int Ti = 2, int N = 3, double sigma = 0.05,
                                 double lambda = 10.0) {
  const auto sys = random_stable_system(2, 1, 1, rng);
  auto inst = testing::make_instance(sys, Ti, N, T, rng);
  Trajectory noisy = inst.data;
  noisy.outputs += sigma * random_matrix(1, T, rng);
  inst.prob.data = make_data_matrices(noisy, Ti, N, DataMatrixKind::Hankel);
  inst.prob.lambda_u = inst.prob.lambda_y = lambda;
  inst.prob.y_ini += sigma * random_vector(Ti, rng);
  return inst;
}

double solve_value(const Reformulation& reform, Vector* g = nullptr, Vector* z = nullptr) {
  const auto res = solve(reform.program);
  REQUIRE(res.status == SolveStatus::Optimal);
  if (g) *g = res.solution->segment(reform.g.start, reform.g.count);
  if (z) *z = *res.solution;
  return res.objective_value;
}

Vector least_squares(const StackedData& st) { return st.A0.colPivHouseholderQr().solve(st.b0); }

VarRange block(const ConicProgram& prog, const std::string& name) {
  for (const auto& [n, r] : prog.variable_blocks())
    if (n == name) return r;
  FAIL("no variable block " << name);
  return {};
}

bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

}  // namespace

// ---- stacking -----------------------------------------------------------------------

TEST_CASE("stacked data reproduces the penalized cost") {
  std::mt19937_64 rng(1);
  const auto sys = random_stable_system(3, 2, 2, rng);
  auto inst = testing::make_instance(sys, 3, 4, 40, rng);
  auto& prob = inst.prob;
  const Matrix Lq = random_matrix(8, 8, rng), Lr = random_matrix(8, 8, rng);
  prob.Q = Lq * Lq.transpose();
  prob.R = Lr * Lr.transpose() + 0.1 * Matrix::Identity(8, 8);
  prob.lambda_u = 3.0;
  prob.lambda_y = 7.0;
  const StackedData st = assemble_stacked(prob);
  const auto& dm = prob.data;
  CHECK(st.rows() == (2 + 2) * (3 + 4));
  for (int k = 0; k < 20; ++k) {
    const Vector g = random_vector(dm.columns(), rng);
    const Vector eu = dm.Uf * g, ey = dm.Yf * g - prob.r;
    const double direct = eu.dot(prob.R * eu) + ey.dot(prob.Q * ey) +
                          prob.lambda_u * (dm.Up * g - prob.u_ini).squaredNorm() +
                          prob.lambda_y * (dm.Yp * g - prob.y_ini).squaredNorm();
    CHECK(close(st.residual(g).squaredNorm(), direct, 1e-9));
  }
  CHECK(st.b0.segment(st.u_future.offset, st.u_future.count).norm() == 0.0);
}

TEST_CASE("stacked data with identity weights and zero targets") {
  std::mt19937_64 rng(2);
  auto inst = testing::make_instance(random_stable_system(2, 1, 1, rng), 2, 3, 20, rng);
  auto& prob = inst.prob;
  prob.Q = Matrix::Identity(3, 3);
  prob.R = Matrix::Identity(3, 3);
  prob.lambda_u = prob.lambda_y = 1.0;
  const auto& dm = prob.data;
  Matrix plain(10, dm.columns());
  plain << dm.Up, dm.Yp, dm.Uf, dm.Yf;
  CHECK((assemble_stacked(prob).A0 - plain).cwiseAbs().maxCoeff() <= 1e-15);

  prob.r.setZero();
  prob.u_ini.setZero();
  prob.y_ini.setZero();
  CHECK(assemble_stacked(prob).b0.norm() == 0.0);

  prob.Q(0, 0) = -1.0;
  CHECK_THROWS_AS(assemble_stacked(prob), std::invalid_argument);
}

// ---- nominal DeePC ---------------------------------------------------------------------

TEST_CASE("nominal DeePC at rest with a zero reference stays at the origin") {
  std::mt19937_64 rng(3);
  auto inst = testing::make_instance(random_stable_system(2, 1, 1, rng), 2, 4, 30, rng);
  auto& prob = inst.prob;
  prob.r.setZero();
  prob.u_ini.setZero();
  prob.y_ini.setZero();
  const auto sol = solve_deepc(prob);
  REQUIRE(sol.ok());
  CHECK(sol.u.norm() <= 1e-7);
  CHECK(sol.y.norm() <= 1e-7);
}

TEST_CASE("nominal DeePC matches model-based MPC with exact state") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto sys = random_stable_system(3, 2, 2, rng);
    const int Ti = 3, N = 6;
    auto inst = testing::make_instance(sys, Ti, N, 80, rng);
    inst.prob.hard_initial = true;
    const auto sol = solve_deepc(inst.prob);
    REQUIRE(sol.ok());
    // y = O x + T u; minimize u'Ru + (y - r)'Q(y - r) in closed form.
    const Matrix O = observability_matrix(sys, N), TN = impulse_response_matrix(sys, N);
    const auto& Q = inst.prob.Q;
    const Matrix H = inst.prob.R + TN.transpose() * Q * TN;
    const Vector u = -H.ldlt().solve(TN.transpose() * Q * (O * inst.x_start - inst.prob.r));
    const Vector y = O * inst.x_start + TN * u;
    CHECK((sol.u - u).norm() <= 1e-6);
    CHECK((sol.y - y).norm() <= 1e-6);
  }
}

TEST_CASE("input upper bound at zero saturates under a positive reference") {
  const auto sys = scalar(0.5, 1.0, 1.0, 0.0);
  std::mt19937_64 rng(5);
  auto inst = testing::make_instance(sys, 1, 4, 30, rng);
  auto& prob = inst.prob;
  prob.u_ini.setZero();
  prob.y_ini.setZero();
  prob.r = Vector::Constant(4, 1.0);
  ConstraintSpec c;
  c.W = Matrix::Zero(4, 8);
  c.W.leftCols(4).setIdentity();
  c.w = Vector::Zero(4);
  prob.constraints = c;
  const auto sol = solve_deepc(prob);
  REQUIRE(sol.ok());
  CHECK(sol.u.maxCoeff() <= 1e-7);
  // The last input has no effect on the horizon's outputs and only costs u'Ru, so its
  // accuracy is the square root of the objective tolerance.
  CHECK(sol.u.minCoeff() >= -1e-3);
  CHECK(sol.c_opt == doctest::Approx(prob.r.squaredNorm()).epsilon(1e-7));

  // Without the bound the input is strictly positive.
  prob.constraints.reset();
  CHECK(solve_deepc(prob).u.maxCoeff() > 0.1);
}

TEST_CASE("infeasible constraints are reported") {
  std::mt19937_64 rng(6);
  auto inst = testing::make_instance(scalar(0.5, 1.0, 1.0, 0.0), 1, 2, 20, rng);
  ConstraintSpec c;
  c.W = Matrix::Zero(2, 4);
  c.W(0, 0) = 1.0;
  c.W(1, 0) = -1.0;
  c.w = Vector::Constant(2, -1.0);  // u_0 <= -1 and u_0 >= 1
  inst.prob.constraints = c;
  CHECK(solve_deepc(inst.prob).status == SolveStatus::Infeasible);
}

// ---- unstructured ----------------------------------------------------------------------

TEST_CASE("unstructured scalar example") {
  const StackedData st = toy_stacked(Matrix::Ones(1, 1), Vector::Ones(1));
  Vector g;
  const double value = solve_value(reform_unstructured(st, 0.5), &g);
  const double grid = testing::grid_argmin(
      [](double x) { return std::abs(x - 1.0) + 0.5 * std::sqrt(x * x + 1.0); }, -3.0, 3.0);
  CHECK(g(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(grid == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(value == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-7));
}

TEST_CASE("unstructured with zero radius is least squares") {
  std::mt19937_64 rng(7);
  const StackedData st = toy_stacked(random_matrix(15, 6, rng), random_vector(15, rng));
  Vector g;
  const double value = solve_value(reform_unstructured(st, 0.0), &g);
  const Vector ls = least_squares(st);
  CHECK((g - ls).norm() <= 1e-6);
  CHECK(close(value, st.residual(ls).norm(), 1e-7));
}

TEST_CASE("unstructured without data-side perturbation of b is a pure regularizer for A0 = 0") {
  std::mt19937_64 rng(8);
  const StackedData st = toy_stacked(Matrix::Zero(5, 3), random_vector(5, rng));
  Vector g;
  const double value = solve_value(reform_unstructured(st, 0.7, false), &g);
  CHECK(g.norm() <= 1e-6);
  CHECK(close(value, st.b0.norm(), 1e-7));
}

TEST_CASE("unstructured worst case attains the optimum") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const StackedData st = toy_stacked(random_matrix(12, 5, rng), random_vector(12, rng));
    for (bool perturb_b : {true, false}) {
      Vector g;
      const double value = solve_value(reform_unstructured(st, 0.8, perturb_b), &g);
      const auto worst = unstructured_worst_case(st, g, 0.8, perturb_b);
      const double frob = perturb_b ? std::sqrt(worst.dA.squaredNorm() + worst.db.squaredNorm()) : worst.dA.norm();
      CHECK(frob == doctest::Approx(0.8).epsilon(1e-12));
      CHECK(close(perturbed_residual(st, g, worst), value, 1e-6));
      CHECK(close(unstructured_robust_value(st, g, 0.8, perturb_b), value, 1e-7));
      CHECK(inner_max_oracle(g, st, UnstructuredSet{0.8, perturb_b}, 1000, 11) <= value + 1e-6 * (1.0 + value));
    }
  }
}

// ---- column-wise -------------------------------------------------------------------------

TEST_CASE("column-wise with zero bounds is least squares") {
  std::mt19937_64 rng(10);
  const StackedData st = toy_stacked(random_matrix(12, 5, rng), random_vector(12, rng));
  Vector g;
  const double value = solve_value(reform_columnwise(st, ColumnWiseSet{Vector::Zero(5), 0.0, {}}), &g);
  CHECK((g - least_squares(st)).norm() <= 1e-6);
  CHECK(close(value, st.residual(least_squares(st)).norm(), 1e-7));
}

TEST_CASE("column-wise worst case attains the optimum") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const StackedData st = toy_stacked(random_matrix(12, 6, rng), random_vector(12, rng));
    ColumnWiseSet set{(0.3 * random_vector(6, rng)).cwiseAbs(), 0.2, {}};
    Vector g;
    const double value = solve_value(reform_columnwise(st, set), &g);
    const auto worst = columnwise_worst_case(st, g, set);
    for (int i = 0; i < 6; ++i) CHECK(worst.dA.col(i).norm() <= set.rho_A(i) * (1.0 + 1e-12));
    CHECK(worst.db.norm() == doctest::Approx(set.rho_b).epsilon(1e-12));
    CHECK(close(perturbed_residual(st, g, worst), value, 1e-6));
    CHECK(close(columnwise_robust_value(st, g, set), value, 1e-7));
  }
}

TEST_CASE("column-wise bounds growing with the column index") {
  std::mt19937_64 rng(12);
  auto inst = testing::make_instance(random_stable_system(2, 1, 1, rng), 2, 3, 20, rng);
  const int Hc = inst.prob.data.columns();
  Vector rho_A(Hc);
  for (int k = 0; k < Hc; ++k) rho_A(k) = 0.63 * (k + 1);
  const ColumnWiseSet set{rho_A, 0.63 * Hc, {}};
  const auto sol = solve_robust(inst.prob, set);
  REQUIRE(sol.ok());
  const StackedData st = assemble_stacked(inst.prob);
  CHECK(close(columnwise_robust_value(st, *sol.g, set), sol.value, 1e-7));
  CHECK(close(perturbed_residual(st, *sol.g, columnwise_worst_case(st, *sol.g, set)), sol.value, 1e-6));
  // Heavier late columns push weight toward the early ones.
  CHECK(std::abs((*sol.g)(0)) + 1e-9 >= std::abs((*sol.g)(Hc - 1)));
}

TEST_CASE("column-wise budgets") {
  std::mt19937_64 rng(13);
  const StackedData st = toy_stacked(random_matrix(10, 4, rng), random_vector(10, rng));
  const Vector rho_A = Vector::Constant(4, 0.5);
  ColumnWiseSet affine{rho_A, 0.1, {AffineBudget{Vector::Ones(4), 0.8}}};
  ColumnWiseSet ball{rho_A, 0.1, {NormBallBudget{Vector::Constant(4, 0.2), 0.15}}};
  for (const auto& set : {affine, ball}) {
    Vector g;
    const double value = solve_value(reform_columnwise(st, set), &g);
    CHECK(close(columnwise_robust_value(st, g, set), value, 1e-6));
    CHECK(inner_max_oracle(g, st, set, 2000, 3) <= value + 1e-6 * (1.0 + value));
    // A budget only shrinks the set.
    const double unbudgeted = solve_value(reform_columnwise(st, ColumnWiseSet{rho_A, 0.1, {}}));
    CHECK(value <= unbudgeted + 1e-7);
  }
  ColumnWiseSet empty{rho_A, 0.1, {AffineBudget{Vector::Ones(4), -1.0}}};
  CHECK_THROWS_WITH_AS(reform_columnwise(st, empty), "column-wise budget set is empty", std::invalid_argument);
  // A degenerate ball has no interior point.
  ColumnWiseSet thin{rho_A, 0.1, {NormBallBudget{Vector::Constant(4, 0.2), 0.0}}};
  CHECK_THROWS_WITH_AS(reform_columnwise(st, thin), "column-wise budget set has no Slater point", std::invalid_argument);
}

// ---- interval ------------------------------------------------------------------------------

TEST_CASE("interval scalar example") {
  const StackedData st = toy_stacked(Matrix::Ones(1, 1), Vector::Ones(1));
  Vector g;
  const double value = solve_value(reform_interval(st, IntervalSet{Matrix::Constant(1, 1, 0.1), Vector::Zero(1)}), &g);
  const double grid = testing::grid_argmin(
      [](double x) { return std::pow(std::abs(x - 1.0) + 0.1 * std::abs(x), 2); }, -3.0, 3.0);
  CHECK(g(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(grid == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(value == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("interval with zero bounds recovers the nominal residual") {
  std::mt19937_64 rng(14);
  const StackedData st = toy_stacked(random_matrix(9, 4, rng), random_vector(9, rng));
  Vector g, z;
  const auto reform = reform_interval(st, IntervalSet{Matrix::Zero(9, 4), Vector::Zero(9)});
  const double value = solve_value(reform, &g, &z);
  CHECK((g - least_squares(st)).norm() <= 1e-6);
  CHECK(close(value, st.residual(least_squares(st)).squaredNorm(), 1e-7));
  CHECK((z.segment(block(reform.program, "gamma").start, 9) - st.residual(g).cwiseAbs()).norm() <= 1e-5);
  CHECK_THROWS_AS(reform_interval(st, IntervalSet{-Matrix::Ones(9, 4), Vector::Zero(9)}), std::invalid_argument);
}

TEST_CASE("interval optimum matches the closed-form inner maximum") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const StackedData st = toy_stacked(random_matrix(10, 5, rng), random_vector(10, rng));
    const IntervalSet set{0.1 * random_matrix(10, 5, rng).cwiseAbs(), 0.1 * random_vector(10, rng).cwiseAbs()};
    Vector g;
    const double c = solve_value(reform_interval(st, set), &g);
    CHECK(close(interval_robust_value(st, g, set), std::sqrt(c), 1e-6));
    CHECK(inner_max_oracle(g, st, set, 2000, 5) <= std::sqrt(c) + 1e-6 * (1.0 + std::sqrt(c)));
  }
}

TEST_CASE("interval bounds from channel bounds") {
  std::mt19937_64 rng(16);
  auto inst = testing::make_instance(random_stable_system(2, 1, 1, rng), 2, 3, 20, rng);
  auto& prob = inst.prob;
  const int Hc = prob.data.columns();
  const auto zero = interval_bounds_from_channels(prob, Vector::Zero(1), Vector::Zero(1));
  CHECK(zero.A_bar.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.b_bar.cwiseAbs().maxCoeff() == 0.0);

  prob.Q = Matrix::Identity(3, 3);
  prob.R = Matrix::Identity(3, 3);
  prob.lambda_u = prob.lambda_y = 1.0;
  const auto set = interval_bounds_from_channels(prob, Vector::Constant(1, 0.2), Vector::Constant(1, 0.03));
  Vector expect(10);
  expect << 0.2, 0.2, 0.03, 0.03, 0.2, 0.2, 0.2, 0.03, 0.03, 0.03;
  for (int j = 0; j < Hc; ++j) CHECK((set.A_bar.col(j) - expect).norm() <= 1e-15);
  Vector expect_b = expect;
  expect_b.tail(6).setZero();
  CHECK((set.b_bar - expect_b).norm() <= 1e-15);
  CHECK_THROWS_AS(interval_bounds_from_channels(prob, Vector::Constant(1, -0.1), Vector::Zero(1)),
                  std::invalid_argument);
}

// ---- structured ---------------------------------------------------------------------------

TEST_CASE("banded shift matrix of a unit vector is a selector") {
  Vector e1 = Vector::Zero(6);
  e1(0) = 1.0;
  const Matrix M = banded_shift_matrix(e1, 4);
  REQUIRE(M.rows() == 4);
  REQUIRE(M.cols() == 9);
  CHECK(M.leftCols(4) == Matrix::Identity(4, 4));
  CHECK(M.rightCols(5).cwiseAbs().maxCoeff() == 0.0);
  const Vector x = (Vector(3) << 1, 2, 3).finished();
  Matrix expect(2, 4);
  expect << 1, 2, 3, 0, 0, 1, 2, 3;
  CHECK(banded_shift_matrix(x, 2) == expect);
}

TEST_CASE("structured operators swap the perturbation into the signals") {
  std::mt19937_64 rng(17);
  const auto sys = random_stable_system(2, 2, 1, rng);
  auto inst = testing::make_instance(sys, 2, 3, 16, rng);
  auto& prob = inst.prob;
  prob.lambda_u = 4.0;
  prob.lambda_y = 9.0;
  const Matrix Lq = random_matrix(3, 3, rng);
  prob.Q = Lq * Lq.transpose() + Matrix::Identity(3, 3);
  const std::array<double, 4> alpha{0.5, 1.5, 2.0, 0.7};
  const auto ops = build_structured_operators(prob, alpha);
  const int m = 2, p = 1, T = 16, Ti = 2;
  REQUIRE(ops.n_xi() == (m + p) * T + (m + p) * Ti);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector g = random_vector(prob.data.columns(), rng);
    const Vector xi = random_vector(ops.n_xi(), rng);
    Trajectory perturbed{prob.data.source_inputs, prob.data.source_outputs};
    perturbed.inputs += alpha[0] * Eigen::Map<const Matrix>(xi.data(), m, T);
    perturbed.outputs += alpha[1] * Eigen::Map<const Matrix>(xi.data() + m * T, p, T);
    DeepcProblem pp = prob;
    pp.data = make_data_matrices(perturbed, Ti, 3, DataMatrixKind::Hankel);
    pp.u_ini += alpha[2] * xi.segment((m + p) * T, m * Ti);
    pp.y_ini += alpha[3] * xi.segment((m + p) * T + m * Ti, p * Ti);
    const Vector direct = assemble_stacked(pp).residual(g);
    const Vector swapped = ops.c(g) - ops.D(g) * xi;
    CHECK((direct - swapped).norm() <= 1e-9 * std::max(1.0, direct.norm()));
  }
}

TEST_CASE("no input disturbance removes the input columns") {
  std::mt19937_64 rng(18);
  auto inst = testing::make_instance(random_stable_system(2, 1, 1, rng), 2, 3, 14, rng);
  const auto ops = build_structured_operators(inst.prob, {0.0, 1.0, 0.0, 1.0});
  const Matrix D = ops.D(random_vector(inst.prob.data.columns(), rng));
  const int T = 14, Ti = 2;
  CHECK(D.leftCols(T).cwiseAbs().maxCoeff() == 0.0);
  CHECK(D.middleCols(2 * T, Ti).cwiseAbs().maxCoeff() == 0.0);
  CHECK(D.middleCols(T, T).cwiseAbs().maxCoeff() > 0.0);
  CHECK(D.rightCols(Ti).cwiseAbs().maxCoeff() > 0.0);

  auto page = inst;
  page.prob.data = make_data_matrices(inst.data.slice(0, 10), 2, 3, DataMatrixKind::Page);
  CHECK_THROWS_WITH(build_structured_operators(page.prob, {1, 1, 1, 1}), "structured set requires Hankel data matrices");
}

TEST_CASE("structured SDP against sampled inner maxima") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 3; ++trial) {
    auto inst = noisy_instance(rng);
    const double rho = 0.1;
    const auto ops = build_structured_operators(inst.prob, {1, 1, 1, 1});
    REQUIRE_FALSE(ops.is_constant());
    Vector g, z;
    const auto reform = reform_structured_sdp(ops, rho);
    const double tau = solve_value(reform, &g, &z);
    const double sampled = std::pow(inner_max_oracle(g, ops, rho, 10000, 23 + trial), 2);
    CHECK(sampled <= tau * (1.0 + 1e-6) + 1e-9);
    CHECK(sampled >= 0.95 * tau);
    // lambda >= 0 and tau >= lambda from the principal minors of the LMI (the
    // multiplier acts on the perturbation rescaled to the unit ball).
    const double lam = z(block(reform.program, "lambda").start);
    CHECK(lam >= -1e-9);
    CHECK(tau >= lam - 1e-9);
  }
}

TEST_CASE("structured SDP at vanishing radius approaches the nominal value") {
  std::mt19937_64 rng(20);
  auto inst = noisy_instance(rng);
  const auto ops = build_structured_operators(inst.prob, {1, 1, 1, 1});
  const double tau = solve_value(reform_structured_sdp(ops, 1e-6));
  const StackedData st = assemble_stacked(inst.prob);
  const double nominal = st.residual(least_squares(st)).squaredNorm();
  CHECK(std::abs(tau - nominal) <= 1e-4 * std::max(1.0, nominal));
}

TEST_CASE("structured second-order cone form") {
  std::mt19937_64 rng(21);
  const Matrix A0 = random_matrix(5, 3, rng);
  const Vector b0 = random_vector(5, rng);

  // D = 0 is the nominal problem.
  const double zero = solve_value(reform_structured_socp(Matrix::Zero(5, 4), A0, b0, 0.3));
  const StackedData st = toy_stacked(A0, b0);
  CHECK(close(zero, st.residual(least_squares(st)).squaredNorm(), 1e-7));

  auto sdp_value = [&](const Matrix& D, double rho) {
    StructuredOperators ops;
    ops.A0 = A0;
    ops.b0 = b0;
    ops.D0 = D;
    ops.D_lin.assign(3, SparseMatrix(5, D.cols()));
    ops.block_sizes = {static_cast<int>(D.cols()), 0, 0, 0};
    REQUIRE(ops.is_constant());
    return solve_value(reform_structured_sdp(ops, rho));
  };
  // D = I: every direction has unit gain.
  const Matrix I5 = Matrix::Identity(5, 5);
  CHECK(close(solve_value(reform_structured_socp(I5, A0, b0, 0.4)), sdp_value(I5, 0.4), 1e-6));

  // Diagonal D is already in its eigenbasis; rotating the columns leaves the ball invariant.
  const Matrix Ddiag = (Vector(5) << 0.3, 0.7, 1.1, 1.9, 2.5).finished().asDiagonal();
  const double diag_value = solve_value(reform_structured_socp(Ddiag, A0, b0, 0.4));
  CHECK(close(diag_value, sdp_value(Ddiag, 0.4), 1e-6));
  const Matrix U = random_matrix(5, 5, rng).householderQr().householderQ();
  CHECK(close(solve_value(reform_structured_socp(Ddiag * U, A0, b0, 0.4)), diag_value, 1e-6));
}

TEST_CASE("structured SOCP and SDP agree when only the initial window is uncertain") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 3; ++trial) {
    auto inst = noisy_instance(rng);
    const auto ops = build_structured_operators(inst.prob, {0, 0, 1, 1});
    REQUIRE(ops.is_constant());
    const double socp = solve_value(reform_structured_socp(ops, 0.2));
    const double sdp = solve_value(reform_structured_sdp(ops, 0.2));
    CHECK(close(socp, sdp, 1e-6));
  }
  auto inst = noisy_instance(rng);
  CHECK_THROWS_AS(reform_structured_socp(build_structured_operators(inst.prob, {1, 1, 1, 1}), 0.2),
                  std::invalid_argument);
}

// ---- dispatch and properties ------------------------------------------------------------

TEST_CASE("every set collapses to the penalized nominal problem at zero bounds") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    auto inst = noisy_instance(rng);
    const auto& prob = inst.prob;
    const StackedData st = assemble_stacked(prob);
    const int Hr = st.rows(), Hc = st.cols();
    const Vector ls = least_squares(st);
    SolverSettings tight;
    tight.tolerance = 1e-10;
    const std::vector<UncertaintySet> sets = {UnstructuredSet{0.0}, ColumnWiseSet{Vector::Zero(Hc), 0.0, {}},
                                              IntervalSet{Matrix::Zero(Hr, Hc), Vector::Zero(Hr)},
                                              StructuredSet{0.0, {1, 1, 1, 1}}};
    for (const auto& set : sets) {
      CAPTURE(set_kind(set));
      const auto sol = solve_robust(prob, set, tight);
      REQUIRE(sol.ok());
      CHECK((*sol.g - ls).norm() <= 1e-8 * std::max(1.0, ls.norm()));
    }
    const auto reg = solve_regularized(prob, RegularizerMode::Quadratic, 0.0, tight);
    REQUIRE(reg.ok());
    CHECK((*reg.g - ls).norm() <= 1e-8 * std::max(1.0, ls.norm()));
  }
}

TEST_CASE("containment scalings order the optimal values") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 4; ++trial) {
    auto inst = noisy_instance(rng);
    const auto& prob = inst.prob;
    const IntervalSet interval = interval_bounds_from_channels(prob, Vector::Constant(1, 0.01), Vector::Constant(1, 0.02));
    const ColumnWiseSet col = columnwise_containing(interval);
    const double rho_u = unstructured_radius_containing(col);
    const auto vi = solve_robust(prob, interval), vc = solve_robust(prob, col), vu = solve_robust(prob, UnstructuredSet{rho_u});
    REQUIRE((vi.ok() && vc.ok() && vu.ok()));
    CHECK(vi.value <= vc.value + 1e-7);
    CHECK(vc.value <= vu.value + 1e-7);

    const StructuredSet s{0.05, {1, 1, 1, 1}};
    const double rho_s = unstructured_radius_containing(build_structured_operators(prob, s.alpha), s.rho);
    const auto vs = solve_robust(prob, s), vsu = solve_robust(prob, UnstructuredSet{rho_s});
    REQUIRE((vs.ok() && vsu.ok()));
    CHECK(vs.value <= vsu.value + 1e-7);
  }
}

TEST_CASE("the containment radius bounds every structured perturbation") {
  std::mt19937_64 rng(25);
  auto inst = noisy_instance(rng);
  const auto ops = build_structured_operators(inst.prob, {1, 1, 1, 1});
  const double rho = 0.3;
  const double rho_u = unstructured_radius_containing(ops, rho);
  const int Hc = static_cast<int>(ops.A0.cols());
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Vector xi = sample_sphere(ops.n_xi(), rho, rng);
    double frob2 = (ops.D0 * xi).squaredNorm();
    for (int l = 0; l < Hc; ++l) frob2 += (ops.D_lin[l] * xi).squaredNorm();
    worst = std::max(worst, std::sqrt(frob2));
  }
  CHECK(worst <= rho_u * (1.0 + 1e-12));
  CHECK(worst >= 0.3 * rho_u);
}

TEST_CASE("solve_robust rejects structured sets with hard initial equalities") {
  std::mt19937_64 rng(26);
  auto inst = noisy_instance(rng);
  inst.prob.hard_initial = true;
  CHECK_THROWS_AS(solve_robust(inst.prob, StructuredSet{0.1, {1, 1, 1, 1}}), std::invalid_argument);
}

// ---- regularized -------------------------------------------------------------------------

TEST_CASE("regularized DeePC limits") {
  std::mt19937_64 rng(27);
  auto inst = noisy_instance(rng);
  const auto& prob = inst.prob;
  const auto zero_q = solve_regularized(prob, RegularizerMode::Quadratic, 0.0);
  const auto zero_1 = solve_regularized(prob, RegularizerMode::OneNorm, 0.0);
  const auto robust = solve_robust(prob, UnstructuredSet{0.0});
  REQUIRE((zero_q.ok() && zero_1.ok() && robust.ok()));
  CHECK((*zero_q.g - *robust.g).norm() <= 1e-6);
  CHECK((*zero_1.g - *robust.g).norm() <= 1e-6);
  CHECK(close(zero_q.c_opt, robust.c_opt, 1e-7));

  double previous = 1e300;
  for (double lam : {1e2, 1e4, 1e6}) {
    const auto big = solve_regularized(prob, RegularizerMode::Quadratic, lam);
    REQUIRE(big.ok());
    CHECK(big.g->norm() < previous);
    previous = big.g->norm();
  }
  CHECK(previous <= 1e-3);
  CHECK_THROWS_AS(solve_regularized(prob, RegularizerMode::OneNorm, -1.0), std::invalid_argument);
}

TEST_CASE("quadratic regularization matches an accelerated gradient oracle") {
  std::mt19937_64 rng(28);
  auto inst = noisy_instance(rng);
  const StackedData st = assemble_stacked(inst.prob);
  const double lam = 0.5;
  const auto sol = solve_regularized(inst.prob, RegularizerMode::Quadratic, lam);
  REQUIRE(sol.ok());
  // f(g) = ||A0 g - b0||^2 + lam ||g||^2, Nesterov steps with 1/L step size.
  auto f = [&](const Vector& g) { return st.residual(g).squaredNorm() + lam * g.squaredNorm(); };
  const Matrix H = st.A0.transpose() * st.A0;
  const double L = 2.0 * (Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().maxCoeff() + lam);
  Vector g = Vector::Zero(st.cols()), prev = g, y = g;
  for (int k = 1; k <= 200000; ++k) {
    const Vector grad = 2.0 * (st.A0.transpose() * st.residual(y) + lam * y);
    prev = g;
    g = y - grad / L;
    y = g + (k - 1.0) / (k + 2.0) * (g - prev);
  }
  CHECK(close(sol.c_opt, f(g), 1e-5));
}

TEST_CASE("regularization weight to radius map") {
  const StackedData st = toy_stacked(Matrix::Identity(2, 2), Vector::Ones(2));
  const Vector exact = Vector::Ones(2);  // A0 g = b0
  CHECK(lambda_to_rho(exact, st, 3.0, RegularizerMode::OneNorm) == doctest::Approx(1.5));
  CHECK(lambda_to_rho(exact, st, 3.0, RegularizerMode::Quadratic) == doctest::Approx(3.0 * std::sqrt(3.0)));
  const Vector off = (Vector(2) << 0.5, 1.0).finished();  // residual norm 0.5
  CHECK(lambda_to_rho(off, st, 3.0, RegularizerMode::OneNorm) == doctest::Approx(3.0));
  CHECK(lambda_to_rho(off, st, 3.0, RegularizerMode::Quadratic) == doctest::Approx(3.0 * std::sqrt(2.25) / 0.5));
  CHECK_THROWS_WITH(lambda_to_rho(Vector::Zero(2), st, 1.0, RegularizerMode::Quadratic),
                    "quadratic-regularization equivalence requires a nonzero minimizer");

  const auto uq = matched_set(st, 0.7, RegularizerMode::Quadratic);
  CHECK(std::get<UnstructuredSet>(uq).rho == 0.7);
  const auto uc = std::get<ColumnWiseSet>(matched_set(st, 0.7, RegularizerMode::OneNorm));
  CHECK(uc.rho_A == Vector::Constant(2, 0.7));
  CHECK(uc.rho_b == 0.7);
}

TEST_CASE("radius grows with the regularization weight") {
  std::mt19937_64 rng(29);
  auto inst = noisy_instance(rng);
  const StackedData st = assemble_stacked(inst.prob);
  for (auto mode : {RegularizerMode::Quadratic, RegularizerMode::OneNorm}) {
    double previous = -1.0;
    for (double lam : {1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
      const auto sol = solve_regularized(inst.prob, mode, lam);
      REQUIRE(sol.ok());
      const double rho = lambda_to_rho(*sol.g, st, lam, mode);
      CHECK(rho > previous);
      previous = rho;
    }
  }
}
