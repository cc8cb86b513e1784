#include "rdeepc/deepc.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace rdeepc {

void DeepcProblem::validate() const {
  const auto& dm = data;
  if (dm.T_ini < 1 || dm.N < 1) throw std::invalid_argument("data: T_ini and N must be positive");
  if (dm.Up.rows() % dm.T_ini != 0 || dm.Yp.rows() % dm.T_ini != 0)
    throw DimensionError("data", "past blocks are not a multiple of T_ini rows");
  const int m = dm.m(), p = dm.p(), N = dm.N, Hc = dm.columns();
  if (m < 1 || p < 1) throw DimensionError("data", "empty input or output blocks");
  require_shape("U_F", dm.Uf.rows(), dm.Uf.cols(), m * N, Hc);
  require_shape("Y_F", dm.Yf.rows(), dm.Yf.cols(), p * N, Hc);
  require_shape("Y_P", dm.Yp.rows(), dm.Yp.cols(), p * dm.T_ini, Hc);
  require_shape("Q", Q.rows(), Q.cols(), p * N, p * N);
  require_shape("R", R.rows(), R.cols(), m * N, m * N);
  psd_sqrt(Q, "Q");
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, R.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("R: matrix is not symmetric");
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("R: matrix is not positive definite");
  if (!(lambda_u > 0.0) || !(lambda_y > 0.0)) throw std::invalid_argument("lambda_u and lambda_y must be positive");
  require_size("r", r.size(), p * N);
  require_size("u_ini", u_ini.size(), m * dm.T_ini);
  require_size("y_ini", y_ini.size(), p * dm.T_ini);
  if (constraints) {
    const auto& c = *constraints;
    if (c.W.cols() != (m + p) * N) throw DimensionError("W", "expected (m+p)N columns");
    require_size("w", c.w.size(), c.W.rows());
    if (c.B.size() > 0 && c.B.cols() != Hc) throw DimensionError("B", "expected H_c columns");
  }
}

StackedData assemble_stacked(const DeepcProblem& prob) {
  prob.validate();
  const auto& dm = prob.data;
  StackedData st;
  st.sqrt_Q = psd_sqrt(prob.Q, "Q");
  st.sqrt_R = psd_sqrt(prob.R, "R");
  st.sqrt_lambda_u = std::sqrt(prob.lambda_u);
  st.sqrt_lambda_y = std::sqrt(prob.lambda_y);
  const int past_u = prob.hard_initial ? 0 : static_cast<int>(dm.Up.rows());
  const int past_y = prob.hard_initial ? 0 : static_cast<int>(dm.Yp.rows());
  const int fu = static_cast<int>(dm.Uf.rows()), fy = static_cast<int>(dm.Yf.rows());
  st.u_past = {0, past_u};
  st.y_past = {past_u, past_y};
  st.u_future = {past_u + past_y, fu};
  st.y_future = {past_u + past_y + fu, fy};
  const int Hr = past_u + past_y + fu + fy;
  st.A0.resize(Hr, dm.columns());
  st.b0 = Vector::Zero(Hr);
  if (!prob.hard_initial) {
    st.A0.middleRows(st.u_past.offset, past_u) = st.sqrt_lambda_u * dm.Up;
    st.A0.middleRows(st.y_past.offset, past_y) = st.sqrt_lambda_y * dm.Yp;
    st.b0.segment(st.u_past.offset, past_u) = st.sqrt_lambda_u * prob.u_ini;
    st.b0.segment(st.y_past.offset, past_y) = st.sqrt_lambda_y * prob.y_ini;
  }
  st.A0.middleRows(st.u_future.offset, fu) = st.sqrt_R * dm.Uf;
  st.A0.middleRows(st.y_future.offset, fy) = st.sqrt_Q * dm.Yf;
  st.b0.segment(st.y_future.offset, fy) = st.sqrt_Q * prob.r;
  return st;
}

FeasibleSet FeasibleSet::from_problem(const DeepcProblem& prob) {
  FeasibleSet G;
  const auto& dm = prob.data;
  if (prob.constraints) {
    const auto& c = *prob.constraints;
    Matrix UY(dm.Uf.rows() + dm.Yf.rows(), dm.columns());
    UY << dm.Uf, dm.Yf;
    G.rows = c.W * UY;
    G.rhs = c.w;
    G.uncertainty = c.uncertainty;
    G.B = c.B;
  }
  if (prob.hard_initial) {
    G.eq_lhs.resize(dm.Up.rows() + dm.Yp.rows(), dm.columns());
    G.eq_lhs << dm.Up, dm.Yp;
    G.eq_rhs.resize(G.eq_lhs.rows());
    G.eq_rhs << prob.u_ini, prob.y_ini;
  }
  return G;
}

void FeasibleSet::apply(ConicProgram& program, VarRange g) const {
  const int nrows = static_cast<int>(rows.rows());
  if (nrows > 0) {
    if (rows.cols() != g.count) throw DimensionError("constraint rows", "column count differs from g");
    if (uncertainty) {
      const Matrix Bm = B.size() > 0 ? B : Matrix(Matrix::Identity(g.count, g.count));
      for (int i = 0; i < nrows; ++i)
        add_robust_linear_constraint(program, g, rows.row(i).transpose(), Bm, rhs(i), *uncertainty,
                                     "G_row" + std::to_string(i));
    } else {
      Matrix F = Matrix::Zero(nrows, program.num_vars());
      F.middleCols(g.start, g.count) = -rows;
      program.add_nonnegative(F, rhs, "G");
    }
  }
  if (eq_lhs.rows() > 0) {
    Matrix F = Matrix::Zero(eq_lhs.rows(), program.num_vars());
    F.middleCols(g.start, g.count) = eq_lhs;
    program.add_equality(F, -eq_rhs, "initial_window");
  }
}

std::string set_kind(const UncertaintySet& set) {
  switch (set.index()) {
    case 0: return "unstructured";
    case 1: return "columnwise";
    case 2: return "interval";
    default: return "structured";
  }
}

DeepcSolution solve_reformulation(const Reformulation& reform, const DeepcProblem& prob,
                                  const SolverSettings& settings) {
  DeepcSolution sol;
  sol.program = reform.program;
  const SolveResult res = solve(reform.program, settings);
  sol.status = res.status;
  sol.stats = res.stats;
  sol.message = res.message;
  if (res.status != SolveStatus::Optimal) return sol;
  const Vector g = res.solution->segment(reform.g.start, reform.g.count);
  sol.g = g;
  sol.u = prob.data.Uf * g;
  sol.y = prob.data.Yf * g;
  if (reform.scale == ObjectiveScale::Norm) {
    sol.value = res.objective_value;
    sol.c_opt = res.objective_value * res.objective_value;
  } else {
    sol.c_opt = res.objective_value;
    sol.value = std::sqrt(std::max(0.0, res.objective_value));
  }
  return sol;
}

Reformulation reform_deepc(const DeepcProblem& prob) {
  prob.validate();
  const auto& dm = prob.data;
  const int Hc = dm.columns();
  ConicProgram prog(Hc);
  prog.add_quadratic_cost(2.0 * (dm.Uf.transpose() * prob.R * dm.Uf + dm.Yf.transpose() * prob.Q * dm.Yf +
                                 1e-10 * Matrix::Identity(Hc, Hc)));
  prog.add_linear_cost(-2.0 * dm.Yf.transpose() * prob.Q * prob.r);
  prog.add_constant(prob.r.dot(prob.Q * prob.r));
  FeasibleSet G = FeasibleSet::from_problem(prob);
  if (!prob.hard_initial) {
    G.eq_lhs.resize(dm.Up.rows() + dm.Yp.rows(), Hc);
    G.eq_lhs << dm.Up, dm.Yp;
    G.eq_rhs.resize(G.eq_lhs.rows());
    G.eq_rhs << prob.u_ini, prob.y_ini;
  }
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Squared};
}

DeepcSolution solve_deepc(const DeepcProblem& prob, const SolverSettings& settings) {
  return solve_reformulation(reform_deepc(prob), prob, settings);
}

Reformulation reform_regularized(const StackedData& st, RegularizerMode mode, double lambda_g, const FeasibleSet& G) {
  if (!(lambda_g >= 0.0)) throw std::invalid_argument("lambda_g must be nonnegative");
  const int Hc = st.cols();
  ConicProgram prog(Hc);
  Matrix P = 2.0 * st.A0.transpose() * st.A0;
  if (mode == RegularizerMode::Quadratic) P.diagonal().array() += 2.0 * lambda_g;
  prog.add_quadratic_cost(P);
  prog.add_linear_cost(-2.0 * st.A0.transpose() * st.b0);
  prog.add_constant(st.b0.squaredNorm());
  if (mode == RegularizerMode::OneNorm && lambda_g > 0.0) {
    const VarRange nu = prog.add_variables(Hc, "nu");
    Matrix F = Matrix::Zero(2 * Hc, prog.num_vars());
    F.block(0, nu.start, Hc, Hc).setIdentity();
    F.block(0, 0, Hc, Hc).setIdentity();
    F.block(Hc, nu.start, Hc, Hc).setIdentity();
    F.block(Hc, 0, Hc, Hc) = -Matrix::Identity(Hc, Hc);
    prog.add_nonnegative(F, Vector::Zero(2 * Hc), "abs_g");
    for (int i = 0; i < Hc; ++i) prog.add_linear_cost(nu.start + i, lambda_g);
  }
  G.apply(prog, {0, Hc});
  return {std::move(prog), {0, Hc}, ObjectiveScale::Squared};
}

DeepcSolution solve_regularized(const DeepcProblem& prob, RegularizerMode mode, double lambda_g,
                                const SolverSettings& settings) {
  const StackedData st = assemble_stacked(prob);
  return solve_reformulation(reform_regularized(st, mode, lambda_g, FeasibleSet::from_problem(prob)), prob, settings);
}

double lambda_to_rho(const Vector& g, const StackedData& st, double lambda_g, RegularizerMode mode) {
  if (!(lambda_g >= 0.0)) throw std::invalid_argument("lambda_g must be nonnegative");
  require_size("g", g.size(), st.cols());
  const double res = st.residual(g).norm();
  const bool consistent = res <= 1e-12 * std::max(1.0, st.b0.norm());
  if (mode == RegularizerMode::Quadratic) {
    if (g.norm() == 0.0)
      throw std::invalid_argument("quadratic-regularization equivalence requires a nonzero minimizer");
    const double scale = std::sqrt(g.squaredNorm() + 1.0);
    return consistent ? lambda_g * scale : lambda_g * scale / res;
  }
  return consistent ? lambda_g / 2.0 : lambda_g / (2.0 * res);
}

UncertaintySet matched_set(const StackedData& st, double rho, RegularizerMode mode) {
  if (mode == RegularizerMode::Quadratic) return UnstructuredSet{rho, true};
  return ColumnWiseSet{Vector::Constant(st.cols(), rho), rho, {}};
}

Reformulation reform_robust(const DeepcProblem& prob, const UncertaintySet& set) {
  const FeasibleSet G = FeasibleSet::from_problem(prob);
  if (const auto* s = std::get_if<StructuredSet>(&set)) {
    if (prob.hard_initial)
      throw std::invalid_argument("structured set perturbs the initial window; hard initial equalities unsupported");
    // A zero radius leaves the nominal residual; skip the LMI, whose multiplier is then unbounded.
    if (s->rho == 0.0) return reform_unstructured(assemble_stacked(prob), 0.0, true, G);
    const StructuredOperators ops = build_structured_operators(prob, s->alpha);
    return ops.is_constant() ? reform_structured_socp(ops, s->rho, G) : reform_structured_sdp(ops, s->rho, G);
  }
  const StackedData st = assemble_stacked(prob);
  if (const auto* s = std::get_if<UnstructuredSet>(&set)) return reform_unstructured(st, s->rho, s->perturb_b, G);
  if (const auto* s = std::get_if<ColumnWiseSet>(&set)) return reform_columnwise(st, *s, G);
  return reform_interval(st, std::get<IntervalSet>(set), G);
}

DeepcSolution solve_robust(const DeepcProblem& prob, const UncertaintySet& set, const SolverSettings& settings) {
  return solve_reformulation(reform_robust(prob, set), prob, settings);
}

// ---- worst cases -------------------------------------------------------------------

double perturbed_residual(const StackedData& st, const Vector& g, const Perturbation& delta) {
  require_shape("dA", delta.dA.rows(), delta.dA.cols(), st.rows(), st.cols());
  require_size("db", delta.db.size(), st.rows());
  return ((st.A0 + delta.dA) * g - (st.b0 + delta.db)).norm();
}

namespace {
Vector residual_direction(const StackedData& st, const Vector& g) {
  const Vector r = st.residual(g);
  const double nr = r.norm();
  if (nr > 0.0) return r / nr;
  Vector e = Vector::Zero(st.rows());
  e(0) = 1.0;
  return e;
}
}  // namespace

Perturbation unstructured_worst_case(const StackedData& st, const Vector& g, double rho, bool perturb_b) {
  const Vector w = residual_direction(st, g);
  Perturbation d;
  if (perturb_b) {
    const double scale = rho / std::sqrt(g.squaredNorm() + 1.0);
    d.dA = scale * w * g.transpose();
    d.db = -scale * w;
  } else {
    const double ng = g.norm();
    d.dA = ng > 0.0 ? Matrix(rho / ng * w * g.transpose()) : Matrix(Matrix::Zero(st.rows(), st.cols()));
    d.db = Vector::Zero(st.rows());
  }
  return d;
}

Perturbation columnwise_worst_case(const StackedData& st, const Vector& g, const ColumnWiseSet& set) {
  if (!set.budgets.empty()) throw std::invalid_argument("closed-form worst case needs a set without budgets");
  require_size("rho_A", set.rho_A.size(), st.cols());
  const Vector w = residual_direction(st, g);
  Perturbation d;
  d.dA.resize(st.rows(), st.cols());
  for (int i = 0; i < st.cols(); ++i) {
    const double sgn = g(i) > 0 ? 1.0 : (g(i) < 0 ? -1.0 : 0.0);
    d.dA.col(i) = set.rho_A(i) * sgn * w;
  }
  d.db = -set.rho_b * w;
  return d;
}

double unstructured_robust_value(const StackedData& st, const Vector& g, double rho, bool perturb_b) {
  const double reg = perturb_b ? std::sqrt(g.squaredNorm() + 1.0) : g.norm();
  return st.residual(g).norm() + rho * reg;
}

double columnwise_robust_value(const StackedData& st, const Vector& g, const ColumnWiseSet& set) {
  require_size("rho_A", set.rho_A.size(), st.cols());
  const double base = st.residual(g).norm() + set.rho_b;
  if (set.budgets.empty()) return base + set.rho_A.dot(g.cwiseAbs());
  // Support function of the radius set at |g|.
  const int Hc = st.cols();
  ConicProgram lp(Hc);
  lp.add_linear_cost(-g.cwiseAbs());
  Matrix F(2 * Hc, Hc);
  F << Matrix::Identity(Hc, Hc), -Matrix::Identity(Hc, Hc);
  Vector f(2 * Hc);
  f << Vector::Zero(Hc), set.rho_A;
  lp.add_nonnegative(F, f);
  for (const auto& b : set.budgets) {
    if (const auto* a = std::get_if<AffineBudget>(&b)) {
      lp.add_nonnegative(-a->a.transpose(), Vector::Constant(1, a->d));
    } else {
      const auto& nb = std::get<NormBallBudget>(b);
      Matrix S = Matrix::Zero(Hc + 1, Hc);
      S.bottomRows(Hc).setIdentity();
      Vector s(Hc + 1);
      s << nb.radius, -nb.center;
      lp.add_constraint(Cone{ConeKind::SecondOrder, Hc + 1}, S, s);
    }
  }
  SolverSettings tight;
  tight.tolerance = 1e-10;
  const SolveResult res = solve(lp, tight);
  if (res.status != SolveStatus::Optimal) throw std::runtime_error("support function evaluation failed");
  return base - res.objective_value;
}

double interval_robust_value(const StackedData& st, const Vector& g, const IntervalSet& set) {
  require_shape("A_bar", set.A_bar.rows(), set.A_bar.cols(), st.rows(), st.cols());
  require_size("b_bar", set.b_bar.size(), st.rows());
  return (st.residual(g).cwiseAbs() + set.b_bar + set.A_bar * g.cwiseAbs()).norm();
}

}  // namespace rdeepc
