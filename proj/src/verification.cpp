#include "rdeepc/verification.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace rdeepc {

namespace {

Vector sphere_point(int dim, double radius, std::mt19937_64& rng) {
  if (dim == 0) return Vector(0);
  return sample_sphere(dim, radius, rng);
}

double signum(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double max_eigenvalue(const Matrix& S) {
  if (S.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(S.rows() - 1);
}

bool within(double value, double bound, double slack) { return value <= bound + slack * std::max(1.0, bound); }

}  // namespace

// ---- inner maximization oracles -------------------------------------------------

double inner_max_oracle(const Vector& g, const StackedData& st, const UnstructuredSet& set, int samples,
                        std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be at least 1");
  require_size("g", g.size(), st.cols());
  const Vector r = st.residual(g);
  double best = perturbed_residual(st, g, unstructured_worst_case(st, g, set.rho, set.perturb_b));
  // Random points on the Frobenius sphere of [dA db]: the residual moves by [dA db] (g, -1).
  std::mt19937_64 rng(seed);
  const int Hr = st.rows(), Hc = st.cols();
  const int width = set.perturb_b ? Hc + 1 : Hc;
  Vector ext(width);
  ext.head(Hc) = g;
  if (set.perturb_b) ext(Hc) = -1.0;
  for (int k = 0; k < samples; ++k) {
    const Vector e = sphere_point(Hr * width, set.rho, rng);
    const Eigen::Map<const Matrix> E(e.data(), Hr, width);
    best = std::max(best, (r + E * ext).norm());
  }
  return best;
}

double inner_max_oracle(const Vector& g, const StackedData& st, const ColumnWiseSet& set, int samples,
                        std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be at least 1");
  require_size("g", g.size(), st.cols());
  require_size("rho_A", set.rho_A.size(), st.cols());
  const int Hr = st.rows(), Hc = st.cols();
  const Vector r = st.residual(g);
  auto admissible = [&](const Vector& radii) {
    for (const auto& b : set.budgets) {
      if (const auto* a = std::get_if<AffineBudget>(&b)) {
        if (a->a.dot(radii) > a->d + 1e-12 * std::max(1.0, std::abs(a->d))) return false;
      } else {
        const auto& nb = std::get<NormBallBudget>(b);
        if ((radii - nb.center).norm() > nb.radius * (1.0 + 1e-12)) return false;
      }
    }
    return true;
  };
  // The column-aligned construction attains the maximum for a fixed radius vector.
  auto aligned_value = [&](const Vector& radii) { return r.norm() + radii.dot(g.cwiseAbs()) + set.rho_b; };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> radii_pool;
  if (admissible(set.rho_A)) {
    radii_pool.push_back(set.rho_A);
  } else {
    // Largest admissible multiple of rho_A by bisection.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (admissible(mid * set.rho_A) ? lo : hi) = mid;
    }
    if (admissible(lo * set.rho_A)) radii_pool.push_back(lo * set.rho_A);
  }
  for (int k = 0; k < samples; ++k) {
    Vector radii(Hc);
    for (int i = 0; i < Hc; ++i) radii(i) = set.rho_A(i) * unit(rng);
    if (admissible(radii)) radii_pool.push_back(radii);
  }
  if (radii_pool.empty()) return r.norm();

  double best = r.norm();
  for (const auto& radii : radii_pool) best = std::max(best, aligned_value(radii));
  // Random column directions on the spheres of the first admissible radius vector.
  const Vector& radii = radii_pool.front();
  for (int k = 0; k < samples; ++k) {
    Vector v = r - sphere_point(Hr, set.rho_b, rng);
    for (int i = 0; i < Hc; ++i)
      if (g(i) != 0.0 && radii(i) > 0.0) v += g(i) * sphere_point(Hr, radii(i), rng);
    best = std::max(best, v.norm());
  }
  return best;
}

double inner_max_oracle(const Vector& g, const StackedData& st, const IntervalSet& set, int samples,
                        std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be at least 1");
  require_size("g", g.size(), st.cols());
  require_shape("A_bar", set.A_bar.rows(), set.A_bar.cols(), st.rows(), st.cols());
  require_size("b_bar", set.b_bar.size(), st.rows());
  const int Hr = st.rows(), Hc = st.cols();
  const Vector r = st.residual(g);

  // Uncertain entries: (row, col) of A_bar, col == Hc marks b_bar.
  struct Entry {
    int row, col;
    double bound;
  };
  std::vector<Entry> entries;
  for (int i = 0; i < Hr; ++i) {
    for (int j = 0; j < Hc; ++j)
      if (set.A_bar(i, j) > 0.0) entries.push_back({i, j, set.A_bar(i, j)});
    if (set.b_bar(i) > 0.0) entries.push_back({i, Hc, set.b_bar(i)});
  }
  auto value = [&](const std::vector<double>& signs) {
    Vector v = r;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      v(e.row) += e.col < Hc ? signs[k] * e.bound * g(e.col) : -signs[k] * e.bound;
    }
    return v.norm();
  };

  std::vector<double> signs(entries.size(), 1.0);
  if (entries.size() <= 16) {
    double best = 0.0;
    const std::uint64_t count = std::uint64_t{1} << entries.size();
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      for (std::size_t k = 0; k < entries.size(); ++k) signs[k] = (mask >> k) & 1 ? -1.0 : 1.0;
      best = std::max(best, value(signs));
    }
    return best;
  }
  // Aligned vertex: every entry pushes its row away from zero.
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    const double sr = r(e.row) != 0.0 ? signum(r(e.row)) : 1.0;
    signs[k] = e.col < Hc ? sr * (g(e.col) >= 0.0 ? 1.0 : -1.0) : -sr;
  }
  double best = value(signs);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (int s = 0; s < samples; ++s) {
    for (auto& sg : signs) sg = coin(rng) ? 1.0 : -1.0;
    best = std::max(best, value(signs));
  }
  return best;
}

double inner_max_oracle(const Vector& g, const StructuredOperators& ops, double rho, int samples,
                        std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be at least 1");
  const Matrix Dfull = ops.D(g);
  const Vector c = ops.c(g);
  // Restrict to the coordinates that move the residual.
  std::vector<int> cols;
  for (int j = 0; j < Dfull.cols(); ++j)
    if (Dfull.col(j).cwiseAbs().maxCoeff() > 0.0) cols.push_back(j);
  const int k = static_cast<int>(cols.size());
  if (k == 0 || rho == 0.0) return c.norm();
  Matrix D(Dfull.rows(), k);
  for (int j = 0; j < k; ++j) D.col(j) = Dfull.col(cols[j]);

  auto value = [&](const Vector& xi) { return (D * xi - c).norm(); };
  auto ascend = [&](Vector xi) {
    double v = value(xi);
    for (int it = 0; it < 500; ++it) {
      Vector step = D.transpose() * (D * xi - c);
      const double ns = step.norm();
      if (ns == 0.0) break;
      Vector next = rho / ns * step;
      const double vn = value(next);
      if (vn <= v * (1.0 + 1e-15)) break;
      xi = std::move(next);
      v = vn;
    }
    return v;
  };

  std::mt19937_64 rng(seed);
  double best = c.norm();
  Vector best_xi = Vector::Zero(k);
  for (int s = 0; s < samples; ++s) {
    const Vector xi = sphere_point(k, rho, rng);
    const double v = value(xi);
    if (v > best) {
      best = v;
      best_xi = xi;
    }
  }
  if (best_xi.norm() > 0.0) best = std::max(best, ascend(best_xi));
  Eigen::JacobiSVD<Matrix> svd(D, Eigen::ComputeThinV);
  const Vector v1 = svd.matrixV().col(0);
  best = std::max(best, ascend(rho * v1));
  best = std::max(best, ascend(-rho * v1));
  return best;
}

double inner_max_oracle(const Vector& g, const DeepcProblem& prob, const UncertaintySet& set, int samples,
                        std::uint64_t seed) {
  if (const auto* s = std::get_if<StructuredSet>(&set))
    return inner_max_oracle(g, build_structured_operators(prob, s->alpha), s->rho, samples, seed);
  const StackedData st = assemble_stacked(prob);
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, StructuredSet>)
          return 0.0;
        else
          return inner_max_oracle(g, st, s, samples, seed);
      },
      set);
}

// ---- realized-cost bound -----------------------------------------------------------

double realized_cost(const Vector& u, const Vector& y, const Vector& r, const Matrix& Q, const Matrix& R) {
  require_shape("R", R.rows(), R.cols(), u.size(), u.size());
  require_shape("Q", Q.rows(), Q.cols(), y.size(), y.size());
  require_size("r", r.size(), y.size());
  const Vector e = y - r;
  return u.dot(R * u) + e.dot(Q * e);
}

bool contains_perfect_data(const DeepcProblem& measured, const DataMatrices& perfect, const Vector& perfect_u_ini,
                           const Vector& perfect_y_ini, const UncertaintySet& set, double slack) {
  const auto& dm = measured.data;
  require_shape("perfect.Up", perfect.Up.rows(), perfect.Up.cols(), dm.Up.rows(), dm.Up.cols());
  require_shape("perfect.Yf", perfect.Yf.rows(), perfect.Yf.cols(), dm.Yf.rows(), dm.Yf.cols());

  if (const auto* s = std::get_if<StructuredSet>(&set)) {
    if (perfect.source_inputs.size() == 0 || dm.source_inputs.size() == 0)
      throw std::invalid_argument("structured membership needs the recorded signals");
    require_shape("perfect.source_inputs", perfect.source_inputs.rows(), perfect.source_inputs.cols(),
                  dm.source_inputs.rows(), dm.source_inputs.cols());
    require_shape("perfect.source_outputs", perfect.source_outputs.rows(), perfect.source_outputs.cols(),
                  dm.source_outputs.rows(), dm.source_outputs.cols());
    const std::array<Vector, 4> diffs{stack_signal(perfect.source_inputs - dm.source_inputs),
                                      stack_signal(perfect.source_outputs - dm.source_outputs),
                                      perfect_u_ini - measured.u_ini, perfect_y_ini - measured.y_ini};
    double sq = 0.0;
    for (int b = 0; b < 4; ++b) {
      const double nd = diffs[b].norm();
      if (s->alpha[b] == 0.0) {
        if (nd > 0.0) return false;
        continue;
      }
      sq += (nd / s->alpha[b]) * (nd / s->alpha[b]);
    }
    return within(std::sqrt(sq), s->rho, slack);
  }

  DeepcProblem ideal = measured;
  ideal.data = perfect;
  ideal.u_ini = perfect_u_ini;
  ideal.y_ini = perfect_y_ini;
  const StackedData a = assemble_stacked(measured);
  const StackedData b = assemble_stacked(ideal);
  const Matrix dA = b.A0 - a.A0;
  const Vector db = b.b0 - a.b0;

  if (const auto* s = std::get_if<UnstructuredSet>(&set)) {
    if (!s->perturb_b && db.norm() > 0.0) return false;
    return within(std::sqrt(dA.squaredNorm() + db.squaredNorm()), s->rho, slack);
  }
  if (const auto* s = std::get_if<IntervalSet>(&set)) {
    require_shape("A_bar", s->A_bar.rows(), s->A_bar.cols(), dA.rows(), dA.cols());
    require_size("b_bar", s->b_bar.size(), db.size());
    const double scale = std::max({1.0, s->A_bar.cwiseAbs().maxCoeff(), s->b_bar.cwiseAbs().maxCoeff()});
    return (dA.cwiseAbs() - s->A_bar).maxCoeff() <= slack * scale &&
           (db.size() == 0 || (db.cwiseAbs() - s->b_bar).maxCoeff() <= slack * scale);
  }
  const auto& s = std::get<ColumnWiseSet>(set);
  require_size("rho_A", s.rho_A.size(), dA.cols());
  if (!within(db.norm(), s.rho_b, slack)) return false;
  const Vector need = dA.colwise().norm().transpose();
  for (int i = 0; i < need.size(); ++i)
    if (!within(need(i), s.rho_A(i), slack)) return false;
  if (s.budgets.empty()) return true;
  // Is there an admissible radius vector rho with need <= rho <= rho_A?
  const int Hc = static_cast<int>(need.size());
  ConicProgram feas(Hc);
  Matrix F(2 * Hc, Hc);
  F << Matrix::Identity(Hc, Hc), -Matrix::Identity(Hc, Hc);
  Vector f(2 * Hc);
  f << -need.cwiseMin(s.rho_A), s.rho_A;
  feas.add_nonnegative(F, f, "radius_bounds");
  for (const auto& bud : s.budgets) {
    if (const auto* af = std::get_if<AffineBudget>(&bud)) {
      feas.add_nonnegative(-af->a.transpose(), Vector::Constant(1, af->d + slack * std::max(1.0, std::abs(af->d))),
                           "affine_budget");
    } else {
      const auto& nb = std::get<NormBallBudget>(bud);
      Matrix S = Matrix::Zero(Hc + 1, Hc);
      S.bottomRows(Hc).setIdentity();
      Vector sv(Hc + 1);
      sv << nb.radius * (1.0 + slack), -nb.center;
      feas.add_constraint(Cone{ConeKind::SecondOrder, Hc + 1}, S, sv, "norm_budget");
    }
  }
  return solve(feas).status == SolveStatus::Optimal;
}

double weighted_operator_norm(const Matrix& M, const Matrix& W) {
  require_shape("W", W.rows(), W.cols(), M.rows(), M.rows());
  const Matrix S = M.transpose() * W * M;
  return std::sqrt(std::max(0.0, max_eigenvalue(0.5 * (S + S.transpose()))));
}

std::string BoundReport::csv_header() {
  return "seed,set,c_opt,c_realized,eta_p,lhs,rhs,satisfied,input_exact,input_exact_satisfied,assumption_holds,"
         "weights_sufficient,lambda_min_required,solved";
}

std::string BoundReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << seed << ',' << set_kind << ',' << c_opt << ',' << c_realized << ',' << eta_p << ',' << bound_lhs << ','
     << bound_rhs << ',' << satisfied << ',' << input_exact << ',' << input_exact_satisfied << ',' << assumption_holds
     << ',' << weights_sufficient << ',' << lambda_min_required << ',' << solved;
  return os.str();
}

BoundReport check_realized_cost_bound(const LtiSystem& sys, const BoundTrial& trial, const UncertaintySet& set,
                                      const SolverSettings& settings) {
  const DeepcProblem& prob = trial.measured;
  const auto& dm = prob.data;
  const int m = dm.m(), p = dm.p(), Ti = dm.T_ini, N = dm.N;
  if (sys.m() != m || sys.p() != p) throw DimensionError("sys", "channel counts differ from the data");
  require_size("x_start", trial.x_start.size(), sys.n());

  BoundReport rep;
  rep.seed = trial.seed;
  rep.set_kind = set_kind(set);
  rep.assumption_holds = contains_perfect_data(prob, trial.perfect, trial.perfect_u_ini, trial.perfect_y_ini, set);

  try {
    const ArxMatrices arx = arx_matrices(sys, Ti, N);
    const Matrix KQK = arx.K.transpose() * prob.Q * arx.K;
    rep.lambda_min_required = max_eigenvalue(0.5 * (KQK + KQK.transpose()));
    Vector lam(m * Ti + p * Ti);
    lam << Vector::Constant(m * Ti, prob.lambda_u), Vector::Constant(p * Ti, prob.lambda_y);
    const Matrix gap = Matrix(lam.asDiagonal()) - 0.5 * (KQK + KQK.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gap, Eigen::EigenvaluesOnly);
    rep.weights_sufficient = eig.eigenvalues()(0) >= -1e-9 * std::max(1.0, lam.maxCoeff());
  } catch (const std::invalid_argument& e) {
    rep.note = e.what();
    rep.weights_sufficient = false;
  }

  const DeepcSolution sol = solve_robust(prob, set, settings);
  rep.solved = sol.ok();
  if (!rep.solved) {
    rep.note = "robust problem not solved: " + to_string(sol.status) + (sol.message.empty() ? "" : " " + sol.message);
    return rep;
  }
  const Vector& g = *sol.g;
  rep.c_opt = sol.c_opt;

  Vector u_sys = sol.u;
  if (trial.input_disturbance.size() > 0) {
    require_size("input_disturbance", trial.input_disturbance.size(), u_sys.size());
    u_sys += trial.input_disturbance;
  }
  const Trajectory run = simulate(sys, trial.x_start, unstack_signal(u_sys, m));
  const Vector y_sys = run.stacked_outputs();
  rep.c_realized = realized_cost(u_sys, y_sys, prob.r, prob.Q, prob.R);
  rep.eta_p = (u_sys - trial.perfect.Uf * g).norm();

  const double norm_I_R = std::sqrt(std::max(0.0, max_eigenvalue(prob.R)));
  const double norm_TN_Q = weighted_operator_norm(impulse_response_matrix(sys, N), prob.Q);
  rep.bound_lhs = 2.0 * std::sqrt(std::max(0.0, rep.c_opt)) + rep.eta_p * (std::sqrt(2.0) * norm_I_R + norm_TN_Q);
  rep.bound_rhs = std::sqrt(std::max(0.0, rep.c_realized));
  rep.satisfied = rep.bound_lhs >= rep.bound_rhs - 1e-9;
  rep.input_exact = rep.eta_p <= 1e-12 * (1.0 + u_sys.norm());
  rep.input_exact_satisfied = 2.0 * rep.c_opt >= rep.c_realized - 1e-9;
  return rep;
}

BoundTrial make_bound_trial(const LtiSystem& sys, const BoundTrialDesign& d, std::uint64_t seed) {
  if (d.T_ini < 1 || d.N < 1 || d.T < d.T_ini + d.N) throw std::invalid_argument("trial design: bad horizons");
  if (!(d.noise_radius >= 0.0) || !(d.disturbance >= 0.0)) throw std::invalid_argument("trial design: negative radius");
  const int n = sys.n(), m = sys.m(), p = sys.p(), Ti = d.T_ini, N = d.N;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto randn = [&](int rows, int cols) {
    Matrix M(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) M(i, j) = nd(rng);
    return M;
  };

  const Trajectory clean = simulate(sys, Vector::Zero(n), d.excitation * randn(m, d.T));
  Vector x_start;
  const Trajectory window = simulate(sys, randn(n, 1).col(0), d.excitation * randn(m, Ti), &x_start);

  // One draw from the ball over the perturbed blocks.
  const std::array<int, 4> sizes{m * d.T, p * d.T, m * Ti, p * Ti};
  int dim = 0;
  for (int b = 0; b < 4; ++b)
    if (d.alpha[b] > 0.0) dim += sizes[b];
  const Vector xi = d.noise_radius > 0.0 && dim > 0 ? sample_uniform_ball(dim, d.noise_radius, rng) : Vector::Zero(dim);
  std::array<Vector, 4> delta;
  int at = 0;
  for (int b = 0; b < 4; ++b) {
    delta[b] = Vector::Zero(sizes[b]);
    if (d.alpha[b] > 0.0) {
      delta[b] = d.alpha[b] * xi.segment(at, sizes[b]);
      at += sizes[b];
    }
  }
  Trajectory noisy = clean;
  noisy.inputs += unstack_signal(delta[0], m);
  noisy.outputs += unstack_signal(delta[1], p);

  BoundTrial trial;
  trial.seed = seed;
  trial.perfect = make_data_matrices(clean, Ti, N, DataMatrixKind::Hankel);
  trial.perfect_u_ini = window.stacked_inputs();
  trial.perfect_y_ini = window.stacked_outputs();
  trial.x_start = x_start;
  DeepcProblem& prob = trial.measured;
  prob.data = make_data_matrices(noisy, Ti, N, DataMatrixKind::Hankel);
  prob.Q = d.q_weight * Matrix::Identity(p * N, p * N);
  prob.R = d.r_weight * Matrix::Identity(m * N, m * N);
  prob.r = d.reference_std * randn(p * N, 1).col(0);
  prob.u_ini = trial.perfect_u_ini + delta[2];
  prob.y_ini = trial.perfect_y_ini + delta[3];
  const ArxMatrices arx = arx_matrices(sys, Ti, N);
  const Matrix KQK = arx.K.transpose() * prob.Q * arx.K;
  prob.lambda_u = prob.lambda_y = d.lambda_margin * std::max(1.0, max_eigenvalue(0.5 * (KQK + KQK.transpose())));
  if (d.disturbance > 0.0) trial.input_disturbance = sample_sphere(m * N, d.disturbance, rng);
  return trial;
}

std::vector<UncertaintySet> containing_sets(const DeepcProblem& measured, const BoundTrialDesign& d) {
  const int m = measured.data.m(), p = measured.data.p();
  const double rho = d.noise_radius;
  const StructuredSet structured{rho, d.alpha};
  const IntervalSet interval =
      interval_bounds_from_channels(measured, Vector::Constant(m, std::max(d.alpha[0], d.alpha[2]) * rho),
                                    Vector::Constant(p, std::max(d.alpha[1], d.alpha[3]) * rho));
  const ColumnWiseSet columnwise = columnwise_containing(interval);
  const double rho_u = std::min(unstructured_radius_containing(columnwise),
                                unstructured_radius_containing(build_structured_operators(measured, d.alpha), rho));
  return {UnstructuredSet{rho_u, true}, columnwise, interval, structured};
}

// ---- regularization equivalence -------------------------------------------------------

EquivalenceReport check_regularization_equivalence(const DeepcProblem& prob, double lambda_g, RegularizerMode mode,
                                                   const SolverSettings& settings) {
  EquivalenceReport rep;
  rep.lambda_g = lambda_g;
  const StackedData st = assemble_stacked(prob);
  const DeepcSolution reg = solve_regularized(prob, mode, lambda_g, settings);
  if (!reg.ok()) {
    rep.note = "regularized problem not solved: " + to_string(reg.status);
    return rep;
  }
  rep.g_regularized = *reg.g;
  rep.rho = lambda_to_rho(rep.g_regularized, st, lambda_g, mode);
  const UncertaintySet set = matched_set(st, rep.rho, mode);
  const DeepcSolution rob = solve_robust(prob, set, settings);
  if (!rob.ok()) {
    rep.note = "matched robust problem not solved: " + to_string(rob.status);
    return rep;
  }
  rep.solved = true;
  rep.g_robust = *rob.g;
  rep.robust_optimum = rob.value;
  rep.robust_at_regularized = mode == RegularizerMode::Quadratic
                                  ? unstructured_robust_value(st, rep.g_regularized, rep.rho, true)
                                  : columnwise_robust_value(st, rep.g_regularized, std::get<ColumnWiseSet>(set));
  rep.objective_gap = std::abs(rep.robust_at_regularized - rep.robust_optimum) / std::max(1.0, rep.robust_optimum);
  rep.minimizer_distance = (rep.g_regularized - rep.g_robust).norm();
  return rep;
}

LadderReport check_regularization_ladder(const DeepcProblem& prob, const std::vector<double>& lambdas,
                                         RegularizerMode mode, const SolverSettings& settings) {
  LadderReport out;
  out.strictly_increasing = true;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (k > 0 && !(lambdas[k] > lambdas[k - 1]))
      throw std::invalid_argument("lambda ladder must be strictly increasing");
    out.rungs.push_back(check_regularization_equivalence(prob, lambdas[k], mode, settings));
    const auto& rung = out.rungs.back();
    if (!rung.solved || (k > 0 && !(rung.rho > out.rungs[k - 1].rho))) out.strictly_increasing = false;
  }
  return out;
}

}  // namespace rdeepc
