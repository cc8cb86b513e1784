#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdeepc/deepc.hpp"
#include "rdeepc/lti.hpp"
#include "rdeepc/verification.hpp"

namespace rdeepc {

// ---- configuration -------------------------------------------------------------

/// r(t) = value of the last step with start <= t.
struct ReferenceStep {
  int start = 0;
  Vector value;
};

/// An uncertainty set described independently of any particular problem.
/// Interval bounds are per channel and become entrywise bounds once the
/// problem's scalings are known.
struct SetSpec {
  std::string kind;  // unstructured | columnwise | interval | structured
  double rho = 0.0;
  Vector rho_A;  // columnwise: one entry broadcast, or one per column
  double rho_b = 0.0;
  Vector input_bound, output_bound;  // interval: one entry broadcast, or one per channel
  std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};

  UncertaintySet resolve(const DeepcProblem& prob) const;
};

enum class ControllerKind { Nominal, Robust, Regularized };

struct ControllerSpec {
  ControllerKind kind = ControllerKind::Nominal;
  std::optional<SetSpec> set;
  RegularizerMode regularizer = RegularizerMode::Quadratic;
};

struct CollectionSpec {
  int T = 120;
  double excitation = 1.0;
  std::uint64_t seed = 1;
  int burn_in = 0;
};

/// Monte Carlo comparison of geometries on single-shot open-loop trials.
struct StudySpec {
  std::vector<std::string> sets{"structured", "unstructured"};
  int trials = 1000;
  /// Control-time index at which the single shot is taken.
  int time = 0;
  /// Draw a fresh data record per trial instead of reusing the collection seed.
  bool resample_data = false;
  /// Per-sample bounds used to size the sets when the noise itself is unbounded.
  std::optional<double> design_output_bound;
  std::optional<double> design_input_bound;
};

/// Realized-cost bound checks over seeded trials.
struct VerifySpec {
  int trials = 100;
  std::vector<std::string> sets{"structured"};
  double noise_radius = 0.05;
  std::array<double, 4> alpha{0.0, 1.0, 0.0, 1.0};
  double disturbance = 0.0;
  double reference_std = 0.5;
  double lambda_margin = 2.0;
};

struct ExperimentConfig {
  LtiSystem plant{Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  CollectionSpec collection;
  DataMatrixKind predictor = DataMatrixKind::Hankel;
  int T_ini = 5;
  int N = 25;
  int k = 25;  // inputs applied per cycle
  Matrix Q_step;  // p x p per-sample weights
  Matrix R_step;  // m x m
  double lambda_u = 1e5;
  double lambda_y = 1e5;
  double lambda_g = 0.0;
  std::vector<ReferenceStep> reference;
  ControllerSpec controller;
  std::optional<NoiseModel> noise;
  int steps = 50;  // closed-loop length of a receding-horizon run
  Vector x0;       // plant state before the warm-up window
  double feedback_noise_std = 0.0;  // Gaussian noise on fed-back output measurements
  StudySpec study;
  VerifySpec verify;
  std::uint64_t seed = 7;
  int threads = 0;  // 0: hardware concurrency
  std::string output_dir = "out";
  SolverSettings solver;

  void validate() const;
  /// Reference stacked over r(t), ..., r(t + N - 1).
  Vector reference_window(int t) const;
  Vector reference_at(int t) const;

  /// Relative paths inside the document resolve against `base_dir`.
  static ExperimentConfig from_json_text(const std::string& text, const std::string& base_dir = ".");
  static ExperimentConfig from_json_file(const std::string& path);
};

/// Comma-separated set names; unknown names raise a ConfigError at `path`.
std::vector<std::string> parse_set_names(const std::string& list, const std::string& path);

/// Deterministic per-trial seed derived from a base seed and a trial index.
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index);

/// Run fn(i) for i in [0, count) on a pool of workers. Results are stored by index,
/// so the output order does not depend on scheduling. The first exception is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

// ---- single problems ------------------------------------------------------------

/// Recorded data (clean and measured) for a configuration and seed.
CollectedData collect(const ExperimentConfig& cfg, std::uint64_t seed);

/// The T_ini-step warm-up window from x0 under zero input, and the state it ends in.
struct WarmupWindow {
  Trajectory window;
  Vector x_end;
};
WarmupWindow warmup(const ExperimentConfig& cfg);

/// Problem built from predictor data, an initial window and the reference at time t.
DeepcProblem make_problem(const ExperimentConfig& cfg, const DataMatrices& data, const Vector& u_ini,
                          const Vector& y_ini, int t);

/// Solve with the configured controller.
DeepcSolution solve_controller(const ExperimentConfig& cfg, const DeepcProblem& prob);
/// The configured controller's conic program, without solving it.
ConicProgram controller_program(const ExperimentConfig& cfg, const DeepcProblem& prob);

// ---- receding horizon ---------------------------------------------------------------

struct CycleRecord {
  int t = 0;
  std::string status;
  double solve_seconds = 0.0;
  Vector u_ini, y_ini;  // initial window fed to this cycle
  double c_opt = 0.0;
};

struct RunRecord {
  int warmup = 0;            // leading samples of the logs that precede control
  Matrix inputs;             // m x (warmup + steps)
  Matrix outputs;            // p x (warmup + steps), true plant outputs
  Matrix measured_outputs;   // outputs as fed back to the controller
  Matrix references;         // p x steps
  std::vector<double> step_cost;
  std::vector<int> step_cycle;  // index into cycles
  std::vector<CycleRecord> cycles;
  int failures = 0;
  bool degraded = false;
  double total_cost = 0.0;

  /// step,t,u_1..u_m,y_1..y_p,ym_1..ym_p,r_1..r_p,cost,cycle,status,solve_seconds
  std::string to_csv() const;
};

/// Closed-loop run: each cycle solves the configured problem from the latest
/// T_ini measurements and applies the first k inputs. A failed solve applies
/// zero input for the cycle and marks the run degraded.
RunRecord run_receding_horizon(const ExperimentConfig& cfg);
RunRecord run_receding_horizon(const ExperimentConfig& cfg, const DataMatrices& data, std::uint64_t seed);

// ---- Monte Carlo studies ---------------------------------------------------------------

struct TrialRow {
  int trial = 0;
  std::uint64_t seed = 0;
  std::string set;
  std::string status;
  double radius = 0.0;  // scalar size of the set (rho, max rho_A, or max entry bound)
  double c_opt = 0.0;
  double c_realized = 0.0;
  double solve_seconds = 0.0;
  bool assumption_holds = false;  // perfect data inside the set
};

struct SetSummary {
  std::string set;
  int solved = 0;
  int failed = 0;
  double mean_cost = 0.0;
  double worst_cost = 0.0;
  double mean_solve_seconds = 0.0;
  int assumption_failures = 0;
};

struct StudyResult {
  std::vector<TrialRow> rows;  // trial-major, sets in configured order
  std::vector<SetSummary> summary;

  const SetSummary& summary_for(const std::string& set) const;
  std::string trials_csv() const;
  std::string summary_json() const;
};

/// The configured geometries sized as the smallest members of each family that
/// contain every perturbation the noise model can produce (or the design bounds).
std::vector<std::pair<std::string, UncertaintySet>> containing_study_sets(const ExperimentConfig& cfg,
                                                                          const DeepcProblem& measured);

/// Per trial: draw a perturbation of the recorded data and initial window,
/// solve every configured geometry once, apply the input sequence open loop
/// over the horizon and record the realized cost.
StudyResult run_conservativeness_study(const ExperimentConfig& cfg);
/// Conservativeness study where the configured bad-data model corrupts the
/// recorded outputs before the predictor is built.
StudyResult run_bad_data_study(const ExperimentConfig& cfg);

// ---- verification runs ------------------------------------------------------------------

BoundTrialDesign bound_design(const ExperimentConfig& cfg);
std::vector<BoundReport> run_bound_checks(const ExperimentConfig& cfg);

// ---- output -----------------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text);

}  // namespace rdeepc
