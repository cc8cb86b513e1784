// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "rdeepc/harness.hpp"
#include "support.hpp"

using namespace rdeepc;
using testing::random_matrix;
using testing::random_stable_system;
using testing::random_vector;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Noisy Hankel instance: 2-input, 2-output plant, 28 stacked rows, 24 columns, so
// the stacked matrix has full column rank.
testing::Instance noisy_instance(std::mt19937_64& rng) {
  const int Ti = 3, N = 4, T = 30;
  const double sigma = 0.05;
  auto inst = testing::make_instance(random_stable_system(3, 2, 2, rng), Ti, N, T, rng);
  Trajectory noisy = inst.data;
  noisy.outputs += sigma * random_matrix(2, T, rng);
  inst.prob.data = make_data_matrices(noisy, Ti, N, DataMatrixKind::Hankel);
  inst.prob.lambda_u = inst.prob.lambda_y = 10.0;
  inst.prob.y_ini += sigma * random_vector(2 * Ti, rng);
  return inst;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- criteria -------------------------------------------------------------------------

Outcome reformulation_exactness() {
  std::mt19937_64 rng(101);
  const int per_set = 20;
  int checked = 0, failures = 0;
  double worst_bound = -1e300, worst_tight = 0.0;
  for (int i = 0; i < per_set; ++i) {
    auto inst = noisy_instance(rng);
    const auto& prob = inst.prob;
    const StackedData st = assemble_stacked(prob);
    const ColumnWiseSet col{(0.3 * random_vector(st.cols(), rng)).cwiseAbs(), 0.2, {}};
    const std::vector<UncertaintySet> sets = {
        UnstructuredSet{0.3}, col, interval_bounds_from_channels(prob, Vector::Constant(2, 0.01), Vector::Constant(2, 0.02)),
        StructuredSet{0.05, {1, 1, 1, 1}}};
    for (const auto& set : sets) {
      const auto sol = solve_robust(prob, set);
      ++checked;
      if (!sol.ok()) {
        ++failures;
        continue;
      }
      const double tol = 1e-6 * (1.0 + sol.value);
      const double sampled = inner_max_oracle(*sol.g, prob, set, 2000, 1000 + i);
      worst_bound = std::max(worst_bound, (sampled - sol.value) / (1.0 + sol.value));
      if (sampled > sol.value + tol) ++failures;
      double attained = -1.0;
      if (const auto* u = std::get_if<UnstructuredSet>(&set))
        attained = perturbed_residual(st, *sol.g, unstructured_worst_case(st, *sol.g, u->rho, u->perturb_b));
      else if (const auto* c = std::get_if<ColumnWiseSet>(&set))
        attained = perturbed_residual(st, *sol.g, columnwise_worst_case(st, *sol.g, *c));
      if (attained >= 0.0) {
        worst_tight = std::max(worst_tight, rel(attained, sol.value));
        if (rel(attained, sol.value) > 1e-6) ++failures;
      }
    }
  }
  return {failures == 0, std::to_string(checked) + " solves, " + std::to_string(failures) + " failures" +
                             fmt(", max oracle excess %.2e, max worst-case gap %.2e", worst_bound, worst_tight)};
}

Outcome sdp_socp_agreement() {
  std::mt19937_64 rng(102);
  const int count = 10;
  int failures = 0;
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    auto inst = noisy_instance(rng);
    const auto ops = build_structured_operators(inst.prob, {0, 0, 1, 1});
    if (!ops.is_constant()) {
      ++failures;
      continue;
    }
    SolverSettings tight;
    tight.tolerance = tight.psd_tolerance = 1e-10;
    const auto socp = solve(reform_structured_socp(ops, 0.2).program, tight);
    const auto sdp = solve(reform_structured_sdp(ops, 0.2).program, tight);
    if (socp.status != SolveStatus::Optimal || sdp.status != SolveStatus::Optimal) {
      ++failures;
      continue;
    }
    const double gap = std::abs(socp.objective_value - sdp.objective_value) / std::max(1.0, std::abs(sdp.objective_value));
    worst = std::max(worst, gap);
    if (gap > 1e-6) ++failures;
  }
  return {failures == 0, std::to_string(count) + " instances, " + std::to_string(failures) + " failures" +
                            fmt(", max relative gap %.2e", worst)};
}

Outcome realized_cost_bound() {
  const auto cfg = ExperimentConfig::from_json_file(std::string(RDEEPC_CONFIG_DIR) + "/bound_check.json");
  BoundTrialDesign design = bound_design(cfg);
  const int trials = 500;
  const std::vector<int> order = {3, 0, 1, 2};  // structured, unstructured, columnwise, interval
  std::vector<BoundReport> reports(trials);
  parallel_for(trials, 0, [&](int i) {
    BoundTrialDesign d = design;
    if (i % 2 == 0) d.disturbance = 0.0;  // no-disturbance subset
    const BoundTrial trial = make_bound_trial(cfg.plant, d, trial_seed(cfg.seed, i));
    const auto family = containing_sets(trial.measured, d);
    reports[i] = check_realized_cost_bound(cfg.plant, trial, family[order[(i / 2) % 4]], cfg.solver);
  });
  int precond = 0, violations = 0, exact = 0, exact_violations = 0;
  for (const auto& r : reports) {
    precond += r.preconditions_hold();
    violations += r.preconditions_hold() && !r.satisfied;
    if (r.preconditions_hold() && r.input_exact) {
      ++exact;
      exact_violations += !r.input_exact_satisfied;
    }
  }
  const bool pass = precond == trials && violations == 0 && exact_violations == 0 && exact > 0;
  std::ostringstream os;
  os << trials << " trials, " << precond << " with preconditions, " << violations << " bound violations, "
     << exact_violations << " of " << exact << " undisturbed trials violate the doubled-cost bound";
  return {pass, os.str()};
}

Outcome regularization_equivalence() {
  std::mt19937_64 rng(104);
  const std::vector<double> lambdas = {1e-2, 1e-1, 1.0, 10.0};
  int failures = 0, rungs = 0;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    auto inst = noisy_instance(rng);
    for (auto mode : {RegularizerMode::Quadratic, RegularizerMode::OneNorm}) {
      const auto ladder = check_regularization_ladder(inst.prob, lambdas, mode);
      if (!ladder.strictly_increasing) ++failures;
      for (const auto& r : ladder.rungs) {
        ++rungs;
        worst = std::max(worst, r.objective_gap);
        if (!r.solved || r.objective_gap > 1e-6) ++failures;
      }
    }
  }
  return {failures == 0, std::to_string(rungs) + " rungs over both regularizers" + fmt(", max objective gap %.2e", worst)};
}

Outcome conservativeness_ordering() {
  std::mt19937_64 rng(105);
  const int count = 20;
  int failures = 0;
  double worst = -1e300;
  for (int i = 0; i < count; ++i) {
    auto inst = noisy_instance(rng);
    const auto& prob = inst.prob;
    const IntervalSet interval = interval_bounds_from_channels(prob, Vector::Constant(2, 0.01), Vector::Constant(2, 0.02));
    const ColumnWiseSet col = columnwise_containing(interval);
    const auto vi = solve_robust(prob, interval), vc = solve_robust(prob, col),
               vu = solve_robust(prob, UnstructuredSet{unstructured_radius_containing(col)});
    const StructuredSet s{0.05, {1, 1, 1, 1}};
    const double rho_s = unstructured_radius_containing(build_structured_operators(prob, s.alpha), s.rho);
    const auto vs = solve_robust(prob, s), vsu = solve_robust(prob, UnstructuredSet{rho_s});
    if (!(vi.ok() && vc.ok() && vu.ok() && vs.ok() && vsu.ok())) {
      ++failures;
      continue;
    }
    for (double excess : {vi.value - vc.value, vc.value - vu.value, vs.value - vsu.value}) {
      worst = std::max(worst, excess);
      if (excess > 1e-7) ++failures;
    }
  }
  return {failures == 0, std::to_string(count) + " instances per ordering" + fmt(", largest excess %.2e", worst)};
}

Outcome zero_uncertainty_collapse() {
  std::mt19937_64 rng(106);
  int failures = 0;
  double worst_g = 0.0, worst_y = 0.0;
  SolverSettings tight;
  tight.tolerance = 1e-10;
  for (int i = 0; i < 5; ++i) {
    auto inst = noisy_instance(rng);
    const auto& prob = inst.prob;
    const StackedData st = assemble_stacked(prob);
    const Vector ls = st.A0.colPivHouseholderQr().solve(st.b0);
    const int Hr = st.rows(), Hc = st.cols();
    const std::vector<UncertaintySet> sets = {UnstructuredSet{0.0}, ColumnWiseSet{Vector::Zero(Hc), 0.0, {}},
                                              IntervalSet{Matrix::Zero(Hr, Hc), Vector::Zero(Hr)},
                                              StructuredSet{0.0, {1, 1, 1, 1}}};
    for (const auto& set : sets) {
      const auto sol = solve_robust(prob, set, tight);
      const double d = sol.ok() ? (*sol.g - ls).norm() / std::max(1.0, ls.norm()) : 1e300;
      worst_g = std::max(worst_g, d);
      if (d > 1e-8) ++failures;
    }
  }
  for (int i = 0; i < 10; ++i) {
    const auto sys = random_stable_system(3, 2, 2, rng);
    const int Ti = 3, N = 6;
    auto inst = testing::make_instance(sys, Ti, N, 80, rng);
    inst.prob.hard_initial = true;
    const auto sol = solve_deepc(inst.prob);
    if (!sol.ok()) {
      ++failures;
      continue;
    }
    const Matrix O = observability_matrix(sys, N), TN = impulse_response_matrix(sys, N);
    const Matrix H = inst.prob.R + TN.transpose() * inst.prob.Q * TN;
    const Vector u = -H.ldlt().solve(TN.transpose() * inst.prob.Q * (O * inst.x_start - inst.prob.r));
    const Vector y = O * inst.x_start + TN * u;
    const double d = (sol.y - y).cwiseAbs().maxCoeff();
    worst_y = std::max(worst_y, d);
    if (d > 1e-6) ++failures;
  }
  return {failures == 0, fmt("max relative minimizer gap %.2e, max output gap to model-based control %.2e", worst_g, worst_y)};
}

Outcome surrogate_trends() {
  const std::string dir = RDEEPC_CONFIG_DIR;
  auto study = [&](const std::string& name) {
    const auto cfg = ExperimentConfig::from_json_file(dir + "/" + name + ".json");
    const bool bad = cfg.noise && std::holds_alternative<BadDataNoise>(*cfg.noise);
    return bad ? run_bad_data_study(cfg) : run_conservativeness_study(cfg);
  };
  bool pass = true;
  std::ostringstream os;
  auto failed_trials = [](const StudyResult& r) {
    int f = 0;
    for (const auto& s : r.summary) f += s.failed;
    return f;
  };

  // (a) structured below unstructured.
  const StudyResult a = study("structured_ball");
  const double as = a.summary_for("structured").mean_cost, au = a.summary_for("unstructured").mean_cost;
  const bool pa = as <= 0.95 * au && failed_trials(a) == 0;
  os << fmt("(a) structured %.4g vs unstructured %.4g", as, au) << (pa ? " ok" : " wrong");

  // (b) interval best.
  const StudyResult b = study("interval_page");
  const double bi = b.summary_for("interval").mean_cost;
  const double bc = b.summary_for("columnwise").mean_cost, bu = b.summary_for("unstructured").mean_cost;
  const bool pb = bi <= 0.95 * std::min(bc, bu) && failed_trials(b) == 0;
  os << fmt("; (b) interval %.4g vs column-wise %.4g, unstructured %.4g", bi, bc, bu) << (pb ? " ok" : " wrong");

  // (c) unstructured worst.
  const StudyResult c = study("bad_data");
  const double cu = c.summary_for("unstructured").mean_cost;
  double others = 0.0;
  for (const auto& s : c.summary)
    if (s.set != "unstructured") others = std::max(others, s.mean_cost);
  const bool pc = others <= 0.95 * cu && failed_trials(c) == 0;
  os << fmt("; (c) unstructured %.4g vs next worst %.4g", cu, others) << (pc ? " ok" : " wrong");
  pass = pa && pb && pc;
  os << "; " << a.rows.size() / a.summary.size() << " trials each";
  return {pass, os.str()};
}

Outcome fundamental_lemma() {
  std::mt19937_64 rng(108);
  const auto sys = LtiSystem::from_json_file(std::string(RDEEPC_DATA_DIR) + "/surrogate_plant.json");
  const int Ti = 3, N = 10, T = 120;
  const auto data = simulate(sys, Vector::Zero(sys.n()), random_matrix(sys.m(), T, rng));
  const RankCheck rc = check_rank_condition(data, Ti + N, sys.n());
  const bool rank_ok = rc.satisfied && rc.rank == sys.m() * (Ti + N) + sys.n();
  const auto dm = make_data_matrices(data, Ti, N, DataMatrixKind::Hankel);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto tr = simulate(sys, random_vector(sys.n(), rng), random_matrix(sys.m(), Ti + N, rng));
    const Vector y = complete_trajectory(dm, tr.slice(0, Ti).stacked_inputs(), tr.slice(0, Ti).stacked_outputs(),
                                         tr.slice(Ti, N).stacked_inputs());
    worst = std::max(worst, (y - tr.slice(Ti, N).stacked_outputs()).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "rank " << rc.rank << " of " << sys.m() * (Ti + N) + sys.n() << fmt(", max completion error %.2e over 100 windows", worst);
  return {rank_ok && worst <= 1e-6, os.str()};
}

}  // namespace

// Optional arguments select criteria by number.
int main(int argc, char** argv) {
  struct Criterion {
    int id;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, 120, reformulation_exactness},  {2, 60, sdp_socp_agreement},     {3, 600, realized_cost_bound},
      {4, 120, regularization_equivalence}, {5, 180, conservativeness_ordering}, {6, 60, zero_uncertainty_collapse},
      {7, 1800, surrogate_trends},        {8, 60, fundamental_lemma},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = out.pass && in_time;
    all = all && pass;
    std::printf("criterion %d: %s (%s; %.1f s of %.0f s)\n", c.id, pass ? "PASS" : "FAIL", out.detail.c_str(), secs,
                c.budget_seconds);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
