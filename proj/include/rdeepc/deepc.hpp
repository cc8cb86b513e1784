#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rdeepc/conic.hpp"
#include "rdeepc/data_matrices.hpp"

namespace rdeepc {

/// Polytopic constraint W col(u, y) <= w on the predicted future, optionally
/// robustified against perturbations (a_i + B'xi)'g <= w_i of each row.
struct ConstraintSpec {
  Matrix W;  // n_w x (m+p)N, columns ordered (u, y)
  Vector w;
  std::optional<RobustLinearSet> uncertainty;
  Matrix B;  // n_xi x H_c; empty means identity
};

struct DeepcProblem {
  DataMatrices data;
  Matrix Q;  // pN x pN, symmetric PSD
  Matrix R;  // mN x mN, symmetric PD
  double lambda_u = 1e5;
  double lambda_y = 1e5;
  Vector r;      // pN reference
  Vector u_ini;  // m T_ini
  Vector y_ini;  // p T_ini
  std::optional<ConstraintSpec> constraints;
  /// Enforce the initial-window blocks as equalities instead of penalties.
  bool hard_initial = false;

  void validate() const;
};

struct RowBlock {
  int offset = 0;
  int count = 0;
};

/// min ||A0 g - b0||^2 equals the penalized DeePC cost.
struct StackedData {
  Matrix A0;
  Vector b0;
  RowBlock u_past, y_past, u_future, y_future;
  Matrix sqrt_Q, sqrt_R;
  double sqrt_lambda_u = 0.0, sqrt_lambda_y = 0.0;

  int rows() const { return static_cast<int>(A0.rows()); }
  int cols() const { return static_cast<int>(A0.cols()); }
  Vector residual(const Vector& g) const { return A0 * g - b0; }
};

StackedData assemble_stacked(const DeepcProblem& prob);

/// Decision-variable constraints g in G, built from a problem.
struct FeasibleSet {
  Matrix rows;  // n_w x H_c, rows a_i'
  Vector rhs;
  std::optional<RobustLinearSet> uncertainty;
  Matrix B;
  Matrix eq_lhs;  // hard initial-window equalities
  Vector eq_rhs;

  static FeasibleSet from_problem(const DeepcProblem& prob);
  void apply(ConicProgram& program, VarRange g) const;
  bool empty() const { return rows.rows() == 0 && eq_lhs.rows() == 0; }
};

// ---- uncertainty sets --------------------------------------------------------

/// Frobenius ball on [Delta_A Delta_b]; with perturb_b false only Delta_A is uncertain.
struct UnstructuredSet {
  double rho = 0.0;
  bool perturb_b = true;
};

struct AffineBudget {  // a'rho <= d
  Vector a;
  double d = 0.0;
};
struct NormBallBudget {  // ||rho - center|| <= radius
  Vector center;
  double radius = 0.0;
};
using ColumnBudget = std::variant<AffineBudget, NormBallBudget>;

/// Per-column norm bounds ||(Delta_A)_i|| <= rho_i, ||Delta_b|| <= rho_b, with
/// rho in {0 <= rho <= rho_A} intersected with the budgets.
struct ColumnWiseSet {
  Vector rho_A;
  double rho_b = 0.0;
  std::vector<ColumnBudget> budgets;
};

/// Entrywise bounds |Delta_A| <= A_bar, |Delta_b| <= b_bar.
struct IntervalSet {
  Matrix A_bar;
  Vector b_bar;
};

/// Norm ball of radius rho on signal perturbations xi = (xi_1..xi_4) of the
/// recorded inputs, recorded outputs, initial inputs and initial outputs,
/// scaled by alpha_1..alpha_4.
struct StructuredSet {
  double rho = 0.0;
  std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};
};

using UncertaintySet = std::variant<UnstructuredSet, ColumnWiseSet, IntervalSet, StructuredSet>;

std::string set_kind(const UncertaintySet& set);

// ---- solutions ----------------------------------------------------------------

enum class ObjectiveScale { Norm, Squared };

struct Reformulation {
  ConicProgram program;
  VarRange g;
  ObjectiveScale scale = ObjectiveScale::Norm;
};

struct DeepcSolution {
  SolveStatus status = SolveStatus::NumericalLimit;
  SolverStats stats;
  std::string message;
  std::optional<Vector> g;  // present iff status is Optimal
  Vector u, y;              // Uf g, Yf g
  double c_opt = 0.0;       // optimal value on the squared scale
  double value = 0.0;       // optimal value on the norm scale
  ConicProgram program;

  bool ok() const { return status == SolveStatus::Optimal; }
};

/// Nominal DeePC with hard initial and model equalities and a 1e-10 tie-breaker.
Reformulation reform_deepc(const DeepcProblem& prob);
DeepcSolution solve_deepc(const DeepcProblem& prob, const SolverSettings& settings = {});

/// The set's reformulation; structured sets use the SOCP when D does not depend on g.
Reformulation reform_robust(const DeepcProblem& prob, const UncertaintySet& set);
DeepcSolution solve_robust(const DeepcProblem& prob, const UncertaintySet& set, const SolverSettings& settings = {});

/// Solve an already assembled reformulation and read out the data-based predictions.
DeepcSolution solve_reformulation(const Reformulation& reform, const DeepcProblem& prob,
                                  const SolverSettings& settings = {});

// ---- reformulations -------------------------------------------------------------

Reformulation reform_unstructured(const StackedData& stacked, double rho, bool perturb_b = true,
                                  const FeasibleSet& G = {});
Reformulation reform_columnwise(const StackedData& stacked, const ColumnWiseSet& set, const FeasibleSet& G = {});
Reformulation reform_interval(const StackedData& stacked, const IntervalSet& set, const FeasibleSet& G = {});

/// Entrywise bounds from per-channel input and output error bounds.
IntervalSet interval_bounds_from_channels(const DeepcProblem& prob, const Vector& input_bound,
                                          const Vector& output_bound);

/// L x (n+L-1) banded matrix whose i-th row is x shifted right by i.
Matrix banded_shift_matrix(const Vector& x, int L);

/// A(xi) g - b(xi) = c(g) - D(g) xi with D(g) = D0 + sum_l g_l D_l.
struct StructuredOperators {
  Matrix A0;
  Vector b0;
  Matrix D0;
  std::vector<SparseMatrix> D_lin;
  std::array<int, 4> block_sizes{};  // lengths of xi_1..xi_4
  std::array<double, 4> alpha{};
  int T = 0;

  int n_xi() const { return block_sizes[0] + block_sizes[1] + block_sizes[2] + block_sizes[3]; }
  Matrix D(const Vector& g) const;
  Vector c(const Vector& g) const { return A0 * g - b0; }
  bool is_constant() const;
};

StructuredOperators build_structured_operators(const DeepcProblem& prob, const std::array<double, 4>& alpha);

Reformulation reform_structured_sdp(const StructuredOperators& ops, double rho, const FeasibleSet& G = {});
/// Valid when D does not depend on g; c(g) = A0 g - b0.
Reformulation reform_structured_socp(const Matrix& D, const Matrix& A0, const Vector& b0, double rho,
                                     const FeasibleSet& G = {});
Reformulation reform_structured_socp(const StructuredOperators& ops, double rho, const FeasibleSet& G = {});

// ---- containment scalings ---------------------------------------------------------

/// Smallest column-wise set containing an interval set: (rho_A)_i = ||A_bar_i||, rho_b = ||b_bar||.
ColumnWiseSet columnwise_containing(const IntervalSet& set);
/// Smallest unstructured radius containing a column-wise set without budgets.
double unstructured_radius_containing(const ColumnWiseSet& set);
/// Smallest unstructured radius containing the structured ball: rho ||L||_2 where vec[dA db] = L xi.
double unstructured_radius_containing(const StructuredOperators& ops, double rho);

// ---- regularized DeePC ----------------------------------------------------------

enum class RegularizerMode { Quadratic, OneNorm };

Reformulation reform_regularized(const StackedData& stacked, RegularizerMode mode, double lambda_g,
                                 const FeasibleSet& G = {});
DeepcSolution solve_regularized(const DeepcProblem& prob, RegularizerMode mode, double lambda_g,
                                const SolverSettings& settings = {});

/// Radius of the robust problem equivalent to the regularized one at g.
double lambda_to_rho(const Vector& g, const StackedData& stacked, double lambda_g, RegularizerMode mode);

/// The robust set matched to a regularizer: unstructured for quadratic,
/// column-wise with equal bounds for one-norm.
UncertaintySet matched_set(const StackedData& stacked, double rho, RegularizerMode mode);

// ---- worst cases -------------------------------------------------------------------

struct Perturbation {
  Matrix dA;
  Vector db;
};
double perturbed_residual(const StackedData& stacked, const Vector& g, const Perturbation& delta);
/// Rank-one maximizer of the unstructured inner problem.
Perturbation unstructured_worst_case(const StackedData& stacked, const Vector& g, double rho, bool perturb_b = true);
/// Column-aligned maximizer of the column-wise inner problem (no budgets).
Perturbation columnwise_worst_case(const StackedData& stacked, const Vector& g, const ColumnWiseSet& set);
/// Closed-form inner maximum of each set at g on the norm scale, where available.
double unstructured_robust_value(const StackedData& stacked, const Vector& g, double rho, bool perturb_b = true);
double columnwise_robust_value(const StackedData& stacked, const Vector& g, const ColumnWiseSet& set);
double interval_robust_value(const StackedData& stacked, const Vector& g, const IntervalSet& set);

}  // namespace rdeepc
