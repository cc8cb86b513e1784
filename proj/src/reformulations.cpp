#include <cmath>

#include "rdeepc/deepc.hpp"

namespace rdeepc {

namespace {

// (t, A0 g - b0) in the second-order cone.
void add_residual_cone(ConicProgram& prog, const StackedData& st, int t_index) {
  const int Hr = st.rows(), Hc = st.cols();
  Matrix F = Matrix::Zero(Hr + 1, prog.num_vars());
  F(0, t_index) = 1.0;
  F.block(1, 0, Hr, Hc) = st.A0;
  Vector f(Hr + 1);
  f << 0.0, -st.b0;
  prog.add_constraint(Cone{ConeKind::SecondOrder, Hr + 1}, F, f, "residual");
}

// nu_k >= |g_{cols[k]}|
void add_abs_bounds(ConicProgram& prog, const std::vector<int>& cols, VarRange nu) {
  const int k = static_cast<int>(cols.size());
  Matrix F = Matrix::Zero(2 * k, prog.num_vars());
  for (int i = 0; i < k; ++i) {
    F(i, nu.start + i) = 1.0;
    F(i, cols[i]) = 1.0;
    F(k + i, nu.start + i) = 1.0;
    F(k + i, cols[i]) = -1.0;
  }
  prog.add_nonnegative(F, Vector::Zero(2 * k), "abs_g");
}

void check_slater(const ColumnWiseSet& set) {
  const int Hc = static_cast<int>(set.rho_A.size());
  ConicProgram prog(Hc + 1);  // (rho, s)
  const int s = Hc;
  prog.add_linear_cost(s, -1.0);
  bool has_ball = false;
  Matrix F = Matrix::Zero(2 * Hc + 1, Hc + 1);
  Vector f = Vector::Zero(2 * Hc + 1);
  F.topLeftCorner(Hc, Hc).setIdentity();
  F.block(Hc, 0, Hc, Hc) = -Matrix::Identity(Hc, Hc);
  f.segment(Hc, Hc) = set.rho_A;
  // s <= 1 keeps the problem bounded.
  F(2 * Hc, s) = -1.0;
  f(2 * Hc) = 1.0;
  prog.add_nonnegative(F, f, "box");
  for (const auto& b : set.budgets) {
    if (const auto* a = std::get_if<AffineBudget>(&b)) {
      require_size("budget.a", a->a.size(), Hc);
      Matrix row = Matrix::Zero(1, Hc + 1);
      row.leftCols(Hc) = -a->a.transpose();
      prog.add_nonnegative(row, Vector::Constant(1, a->d), "affine_budget");
    } else {
      const auto& nb = std::get<NormBallBudget>(b);
      require_size("budget.center", nb.center.size(), Hc);
      if (!(nb.radius >= 0.0)) throw std::invalid_argument("norm-ball budget: negative radius");
      has_ball = true;
      // ||rho - c|| <= radius - s
      Matrix S = Matrix::Zero(Hc + 1, Hc + 1);
      S(0, s) = -1.0;
      S.block(1, 0, Hc, Hc).setIdentity();
      Vector sv(Hc + 1);
      sv << nb.radius, -nb.center;
      prog.add_constraint(Cone{ConeKind::SecondOrder, Hc + 1}, S, sv, "ball_budget");
    }
  }
  if (!has_ball) {
    // Affine budgets only need a feasible point: pin s to [0, 1].
    Matrix row = Matrix::Zero(1, Hc + 1);
    row(0, s) = 1.0;
    prog.add_nonnegative(row, Vector::Zero(1), "s_nonneg");
  }
  const SolveResult res = solve(prog);
  if (res.status == SolveStatus::Infeasible) throw std::invalid_argument("column-wise budget set is empty");
  if (res.status != SolveStatus::Optimal) throw std::invalid_argument("column-wise budget set could not be certified");
  if (has_ball && -res.objective_value <= 1e-9)
    throw std::invalid_argument("column-wise budget set has no Slater point");
}

}  // namespace

Reformulation reform_unstructured(const StackedData& st, double rho, bool perturb_b, const FeasibleSet& G) {
  if (!(rho >= 0.0)) throw std::invalid_argument("unstructured radius must be nonnegative");
  const int Hc = st.cols();
  ConicProgram prog(Hc);
  const VarRange t1 = prog.add_variables(1, "t_residual");
  prog.add_linear_cost(t1.start, 1.0);
  if (rho > 0.0) {
    const VarRange t2 = prog.add_variables(1, "t_regularizer");
    prog.add_linear_cost(t2.start, rho);
    const int dim = perturb_b ? Hc + 2 : Hc + 1;
    Matrix F = Matrix::Zero(dim, prog.num_vars());
    F(0, t2.start) = 1.0;
    F.block(1, 0, Hc, Hc).setIdentity();
    Vector f = Vector::Zero(dim);
    if (perturb_b) f(dim - 1) = 1.0;
    prog.add_constraint(Cone{ConeKind::SecondOrder, dim}, F, f, "regularizer");
  }
  add_residual_cone(prog, st, t1.start);
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Norm};
}

Reformulation reform_columnwise(const StackedData& st, const ColumnWiseSet& set, const FeasibleSet& G) {
  const int Hc = st.cols();
  require_size("rho_A", set.rho_A.size(), Hc);
  if (set.rho_A.size() > 0 && set.rho_A.minCoeff() < 0.0) throw std::invalid_argument("rho_A must be nonnegative");
  if (!(set.rho_b >= 0.0)) throw std::invalid_argument("rho_b must be nonnegative");
  if (!set.budgets.empty()) check_slater(set);

  ConicProgram prog(Hc);
  const VarRange t = prog.add_variables(1, "t_residual");
  prog.add_linear_cost(t.start, 1.0);
  prog.add_constant(set.rho_b);
  // Columns whose radius is zero carry no uncertainty.
  std::vector<int> cols;
  for (int i = 0; i < Hc; ++i)
    if (set.rho_A(i) > 0.0) cols.push_back(i);
  const int k = static_cast<int>(cols.size());
  if (k > 0) {
    const VarRange nu = prog.add_variables(k, "nu");
    if (set.budgets.empty()) {
      for (int i = 0; i < k; ++i) prog.add_linear_cost(nu.start + i, set.rho_A(cols[i]));
    } else {
      // Conic dual of max{rho'nu : rho in radius set}:
      // lambda_box + sum_j lambda_j a_j + sum_j y_j >= nu.
      const VarRange lbox = prog.add_variables(k, "lambda_box");
      for (int i = 0; i < k; ++i) prog.add_linear_cost(lbox.start + i, set.rho_A(cols[i]));
      std::vector<std::pair<int, const ColumnBudget*>> duals;
      for (const auto& b : set.budgets) {
        if (std::holds_alternative<AffineBudget>(b)) {
          duals.push_back({prog.add_variables(1, "lambda_affine").start, &b});
        } else {
          duals.push_back({prog.add_variables(k + 1, "ball_dual").start, &b});
        }
      }
      const int nv = prog.num_vars();
      Matrix cover = Matrix::Zero(k, nv);
      cover.block(0, nu.start, k, k) = -Matrix::Identity(k, k);
      cover.block(0, lbox.start, k, k).setIdentity();
      for (const auto& [start, b] : duals) {
        if (const auto* a = std::get_if<AffineBudget>(b)) {
          for (int i = 0; i < k; ++i) cover(i, start) = a->a(cols[i]);
          prog.add_linear_cost(start, a->d);
          Matrix pos = Matrix::Zero(1, nv);
          pos(0, start) = 1.0;
          prog.add_nonnegative(pos, Vector::Zero(1), "lambda_affine");
        } else {
          const auto& nb = std::get<NormBallBudget>(*b);
          // variables (t_j, y_j): cost kappa t_j + c'y_j, ||y_j|| <= t_j.
          cover.block(0, start + 1, k, k) += Matrix::Identity(k, k);
          prog.add_linear_cost(start, nb.radius);
          for (int i = 0; i < k; ++i) prog.add_linear_cost(start + 1 + i, nb.center(cols[i]));
          Matrix S = Matrix::Zero(k + 1, nv);
          S.block(0, start, k + 1, k + 1).setIdentity();
          prog.add_constraint(Cone{ConeKind::SecondOrder, k + 1}, S, Vector::Zero(k + 1), "ball_dual");
        }
      }
      prog.add_nonnegative(cover, Vector::Zero(k), "cover");
      Matrix pos = Matrix::Zero(k, nv);
      pos.block(0, lbox.start, k, k).setIdentity();
      prog.add_nonnegative(pos, Vector::Zero(k), "lambda_box");
    }
    add_abs_bounds(prog, cols, nu);
  }
  add_residual_cone(prog, st, t.start);
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Norm};
}

Reformulation reform_interval(const StackedData& st, const IntervalSet& set, const FeasibleSet& G) {
  const int Hr = st.rows(), Hc = st.cols();
  require_shape("A_bar", set.A_bar.rows(), set.A_bar.cols(), Hr, Hc);
  require_size("b_bar", set.b_bar.size(), Hr);
  if ((set.A_bar.size() > 0 && set.A_bar.minCoeff() < 0.0) || (Hr > 0 && set.b_bar.minCoeff() < 0.0))
    throw std::invalid_argument("interval bounds must be entrywise nonnegative");
  ConicProgram prog(Hc);
  const VarRange gamma = prog.add_variables(Hr, "gamma");
  std::vector<int> cols;
  for (int j = 0; j < Hc; ++j)
    if (set.A_bar.col(j).maxCoeff() > 0.0) cols.push_back(j);
  const int k = static_cast<int>(cols.size());
  const VarRange nu = prog.add_variables(k, "nu");
  const int nv = prog.num_vars();
  // e(z) = gamma + A_bar nu + b_bar; objective ||e||^2.
  Matrix M = Matrix::Zero(Hr, nv);
  M.block(0, gamma.start, Hr, Hr).setIdentity();
  for (int i = 0; i < k; ++i) M.col(nu.start + i) = set.A_bar.col(cols[i]);
  prog.add_quadratic_cost(2.0 * M.transpose() * M);
  prog.add_linear_cost(2.0 * M.transpose() * set.b_bar);
  prog.add_constant(set.b_bar.squaredNorm());
  // gamma >= |A0 g - b0|
  Matrix F = Matrix::Zero(2 * Hr, nv);
  F.block(0, gamma.start, Hr, Hr).setIdentity();
  F.block(0, 0, Hr, Hc) = -st.A0;
  F.block(Hr, gamma.start, Hr, Hr).setIdentity();
  F.block(Hr, 0, Hr, Hc) = st.A0;
  Vector f(2 * Hr);
  f << st.b0, -st.b0;
  prog.add_nonnegative(F, f, "abs_residual");
  if (k > 0) add_abs_bounds(prog, cols, nu);
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Squared};
}

IntervalSet interval_bounds_from_channels(const DeepcProblem& prob, const Vector& input_bound,
                                          const Vector& output_bound) {
  prob.validate();
  const auto& dm = prob.data;
  const int m = dm.m(), p = dm.p(), Ti = dm.T_ini, N = dm.N, Hc = dm.columns();
  require_size("input_bound", input_bound.size(), m);
  require_size("output_bound", output_bound.size(), p);
  if ((m > 0 && input_bound.minCoeff() < 0.0) || (p > 0 && output_bound.minCoeff() < 0.0))
    throw std::invalid_argument("channel bounds must be nonnegative");
  const StackedData st = assemble_stacked(prob);
  // Entrywise bound of W^(1/2) Delta with |Delta| <= 1 (x) bound is |W^(1/2)| (1 (x) bound).
  const Vector ub_F = st.sqrt_R.cwiseAbs() * input_bound.replicate(N, 1);
  const Vector yb_F = st.sqrt_Q.cwiseAbs() * output_bound.replicate(N, 1);
  IntervalSet set;
  set.A_bar = Matrix::Zero(st.rows(), Hc);
  set.b_bar = Vector::Zero(st.rows());
  if (st.u_past.count > 0) {
    const Vector ub_P = st.sqrt_lambda_u * input_bound.replicate(Ti, 1);
    const Vector yb_P = st.sqrt_lambda_y * output_bound.replicate(Ti, 1);
    set.A_bar.middleRows(st.u_past.offset, m * Ti) = ub_P.replicate(1, Hc);
    set.A_bar.middleRows(st.y_past.offset, p * Ti) = yb_P.replicate(1, Hc);
    set.b_bar.segment(st.u_past.offset, m * Ti) = ub_P;
    set.b_bar.segment(st.y_past.offset, p * Ti) = yb_P;
  }
  set.A_bar.middleRows(st.u_future.offset, m * N) = ub_F.replicate(1, Hc);
  set.A_bar.middleRows(st.y_future.offset, p * N) = yb_F.replicate(1, Hc);
  return set;
}

ColumnWiseSet columnwise_containing(const IntervalSet& set) {
  if ((set.A_bar.size() > 0 && set.A_bar.minCoeff() < 0.0) || (set.b_bar.size() > 0 && set.b_bar.minCoeff() < 0.0))
    throw std::invalid_argument("interval bounds must be entrywise nonnegative");
  return ColumnWiseSet{set.A_bar.colwise().norm().transpose(), set.b_bar.norm(), {}};
}

double unstructured_radius_containing(const ColumnWiseSet& set) {
  if (!set.budgets.empty()) throw std::invalid_argument("containment radius needs a set without budgets");
  return std::sqrt(set.rho_A.squaredNorm() + set.rho_b * set.rho_b);
}

}  // namespace rdeepc
