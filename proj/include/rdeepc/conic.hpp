#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rdeepc/types.hpp"

namespace rdeepc {

enum class ConeKind { Zero, Nonnegative, SecondOrder, PositiveSemidefinite };

std::string to_string(ConeKind kind);

/// `size` is the vector length for Zero/Nonnegative/SecondOrder and the
/// matrix side for PositiveSemidefinite.
struct Cone {
  ConeKind kind = ConeKind::Nonnegative;
  int size = 0;
  int dimension() const;  // length of the packed vector
};

/// Packing of symmetric matrices: lower triangle, column order, off-diagonals times sqrt(2).
int svec_length(int side);
int svec_index(int side, int row, int col);
Vector svec(const Matrix& S);
Matrix smat(const Vector& v);

/// Contiguous block of decision variables.
struct VarRange {
  int start = 0;
  int count = 0;
};

/// One constraint: F z + f in K.
struct ConeConstraint {
  Cone cone;
  SparseMatrix F;
  Vector f;
  std::string label;
};

/// minimize 0.5 z'Pz + q'z + constant subject to F_i z + f_i in K_i.
class ConicProgram {
 public:
  explicit ConicProgram(int num_vars = 0);

  int num_vars() const { return num_vars_; }
  VarRange add_variables(int count, const std::string& name);
  const std::vector<std::pair<std::string, VarRange>>& variable_blocks() const { return blocks_; }

  void add_constraint(Cone cone, const SparseMatrix& F, const Vector& f, const std::string& label = "");
  void add_constraint(Cone cone, const Matrix& F, const Vector& f, const std::string& label = "");
  // Common shorthands, all in terms of dense rows over every variable.
  void add_equality(const Matrix& F, const Vector& f, const std::string& label = "");      // F z + f = 0
  void add_nonnegative(const Matrix& F, const Vector& f, const std::string& label = "");   // F z + f >= 0

  void add_linear_cost(const Vector& q);  // accumulates
  void add_linear_cost(int var, double coeff);
  void add_quadratic_cost(const Matrix& P);  // accumulates, 0.5 z'Pz
  void add_constant(double c) { constant_ += c; }

  const Matrix& P() const { return P_; }
  const Vector& q() const { return q_; }
  double constant() const { return constant_; }
  bool has_quadratic() const { return has_quadratic_; }
  const std::vector<ConeConstraint>& constraints() const { return constraints_; }

  double objective_at(const Vector& z) const;
  /// Largest violation of any cone membership at z (0 when feasible).
  double max_violation(const Vector& z) const;

  std::string to_json_text(int indent = -1) const;
  static ConicProgram from_json_text(const std::string& text);

 private:
  int num_vars_ = 0;
  Matrix P_;
  Vector q_;
  double constant_ = 0.0;
  bool has_quadratic_ = false;
  std::vector<ConeConstraint> constraints_;
  std::vector<std::pair<std::string, VarRange>> blocks_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalLimit };
std::string to_string(SolveStatus status);

struct SolverSettings {
  double tolerance = 1e-8;       // relative primal/dual residual and gap target
  int max_iterations = 100;
  double step_fraction = 0.99;
  bool verbose = false;
  /// Tolerance used when the program contains PSD cones.
  double psd_tolerance = 1e-7;
};

struct SolverStats {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double solve_seconds = 0.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalLimit;
  std::optional<Vector> solution;  // present iff status is Optimal
  double objective_value = 0.0;
  SolverStats stats;
  std::string message;
};

SolveResult solve(const ConicProgram& program, const SolverSettings& settings = {});

// Robust linear constraint (a + B'xi)'x <= b for all xi in an uncertainty set.
struct BoxSet { double rho = 0.0; };          // ||xi||_inf <= rho
struct EllipsoidSet { double rho = 0.0; };    // ||xi||_2 <= rho
struct BudgetSet { Matrix D; Vector d; };     // D xi <= d
struct PolyhedralSet { double rho = 0.0; double tau = 0.0; };  // ||xi||_inf <= rho, ||xi||_1 <= tau
using RobustLinearSet = std::variant<BoxSet, EllipsoidSet, BudgetSet, PolyhedralSet>;

/// Parse {"type": "box"|"ellipsoid"|"budget"|"polyhedral", ...}.
RobustLinearSet robust_linear_set_from_json_text(const std::string& text);

/// Append the tractable counterpart of the robust constraint over the variables `x`.
void add_robust_linear_constraint(ConicProgram& program, VarRange x, const Vector& a, const Matrix& B,
                                  double b, const RobustLinearSet& set, const std::string& label = "");

}  // namespace rdeepc
