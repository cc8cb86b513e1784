#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rdeepc/deepc.hpp"
#include "rdeepc/lti.hpp"

namespace rdeepc {

// ---- inner maximization oracles -------------------------------------------------
//
// All oracles return a lower bound on max ||A(xi) g - b(xi)|| over the set, on the
// norm scale. Samples are drawn on the boundary of the set, where the convex
// maximand attains its maximum.

double inner_max_oracle(const Vector& g, const StackedData& stacked, const UnstructuredSet& set, int samples,
                        std::uint64_t seed);
double inner_max_oracle(const Vector& g, const StackedData& stacked, const ColumnWiseSet& set, int samples,
                        std::uint64_t seed);
/// Exhaustive over vertices when at most 16 entries are uncertain, random vertices otherwise.
double inner_max_oracle(const Vector& g, const StackedData& stacked, const IntervalSet& set, int samples,
                        std::uint64_t seed);
/// Sphere samples followed by ascent steps xi <- rho * normalize(D'(D xi - c)).
double inner_max_oracle(const Vector& g, const StructuredOperators& ops, double rho, int samples,
                        std::uint64_t seed);
double inner_max_oracle(const Vector& g, const DeepcProblem& prob, const UncertaintySet& set, int samples,
                        std::uint64_t seed);

// ---- realized-cost bound -----------------------------------------------------------

/// u'Ru + (y - r)'Q(y - r).
double realized_cost(const Vector& u, const Vector& y, const Vector& r, const Matrix& Q, const Matrix& R);

/// Whether the perfect data, seen as a perturbation of the measured data, lies in
/// the set (up to `slack` relative to the size of each bound).
bool contains_perfect_data(const DeepcProblem& measured, const DataMatrices& perfect, const Vector& perfect_u_ini,
                           const Vector& perfect_y_ini, const UncertaintySet& set, double slack = 1e-9);

/// One realization: the robust problem is built from measured data, the plant
/// starts from x_start (consistent with the perfect initial window) and receives
/// the optimal input sequence plus an optional disturbance.
struct BoundTrial {
  std::uint64_t seed = 0;
  DeepcProblem measured;
  DataMatrices perfect;
  Vector perfect_u_ini, perfect_y_ini;
  Vector x_start;
  Vector input_disturbance;  // empty: none
};

struct BoundReport {
  std::uint64_t seed = 0;
  std::string set_kind;
  bool solved = false;
  bool assumption_holds = false;  // perfect data inside the set
  bool weights_sufficient = false;  // diag(lambda_u, lambda_y) >= K'QK
  double lambda_min_required = 0.0;  // largest eigenvalue of K'QK
  double c_opt = 0.0;
  double c_realized = 0.0;
  double eta_p = 0.0;
  double bound_lhs = 0.0;  // 2 sqrt(c_opt) + eta_p (sqrt(2) ||I||_R + ||T_N||_Q)
  double bound_rhs = 0.0;  // sqrt(c_realized)
  bool satisfied = false;
  bool input_exact = false;  // eta_p == 0: the tighter 2 c_opt >= c_realized applies
  bool input_exact_satisfied = false;
  std::string note;

  bool preconditions_hold() const { return solved && assumption_holds && weights_sufficient; }
  /// A violation only counts when every precondition holds.
  bool violated() const { return preconditions_hold() && (!satisfied || (input_exact && !input_exact_satisfied)); }
  static std::string csv_header();
  std::string csv_row() const;
};

/// Recipe for a realized-cost trial: Hankel data of length T from a Gaussian
/// excitation started at rest, a random initial window, and a perturbation drawn
/// uniformly from the structured ball, scaled by alpha per signal block.
struct BoundTrialDesign {
  int T_ini = 2;
  int N = 5;
  int T = 36;
  double excitation = 1.0;
  double noise_radius = 0.0;
  std::array<double, 4> alpha{0.0, 1.0, 0.0, 1.0};  // recorded u, recorded y, initial u, initial y
  double disturbance = 0.0;  // norm of a random input disturbance added to the applied sequence
  double reference_std = 0.5;
  double q_weight = 1.0;
  double r_weight = 0.1;
  /// lambda_u = lambda_y = margin * max(1, largest eigenvalue of K'QK).
  double lambda_margin = 2.0;
};

BoundTrial make_bound_trial(const LtiSystem& sys, const BoundTrialDesign& design, std::uint64_t seed);

/// The four geometries sized to contain every perturbation the design can draw:
/// the structured ball itself, entrywise bounds from the per-sample maximum, the
/// column-wise container of those bounds, and the smaller of the two unstructured
/// containment radii.
std::vector<UncertaintySet> containing_sets(const DeepcProblem& measured, const BoundTrialDesign& design);

/// ||M||_W as the induced norm sqrt(lambda_max(M'WM)).
double weighted_operator_norm(const Matrix& M, const Matrix& W);

BoundReport check_realized_cost_bound(const LtiSystem& sys, const BoundTrial& trial, const UncertaintySet& set,
                                      const SolverSettings& settings = {});

// ---- regularization equivalence -------------------------------------------------------

struct EquivalenceReport {
  double lambda_g = 0.0;
  double rho = 0.0;
  bool solved = false;
  Vector g_regularized;
  Vector g_robust;
  double robust_optimum = 0.0;       // norm scale
  double robust_at_regularized = 0.0;  // robust objective evaluated at g_regularized
  double objective_gap = 0.0;          // relative
  double minimizer_distance = 0.0;
  std::string note;
};

EquivalenceReport check_regularization_equivalence(const DeepcProblem& prob, double lambda_g, RegularizerMode mode,
                                                   const SolverSettings& settings = {});

struct LadderReport {
  std::vector<EquivalenceReport> rungs;
  bool strictly_increasing = false;
};

LadderReport check_regularization_ladder(const DeepcProblem& prob, const std::vector<double>& lambdas,
                                         RegularizerMode mode, const SolverSettings& settings = {});

}  // namespace rdeepc
