#include <Eigen/Eigenvalues>

#include <cmath>

#include "json_util.hpp"
#include "rdeepc/conic.hpp"

namespace rdeepc {

using detail::json;

std::string to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::Zero: return "zero";
    case ConeKind::Nonnegative: return "nonnegative";
    case ConeKind::SecondOrder: return "second_order";
    case ConeKind::PositiveSemidefinite: return "psd";
  }
  return "unknown";
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalLimit: return "numerical_limit";
  }
  return "unknown";
}

namespace {
ConeKind cone_kind_from_string(const std::string& s) {
  if (s == "zero") return ConeKind::Zero;
  if (s == "nonnegative") return ConeKind::Nonnegative;
  if (s == "second_order") return ConeKind::SecondOrder;
  if (s == "psd") return ConeKind::PositiveSemidefinite;
  throw std::invalid_argument("unknown cone tag '" + s + "'");
}
}  // namespace

int svec_length(int side) { return side * (side + 1) / 2; }

int svec_index(int side, int row, int col) {
  if (row < col) std::swap(row, col);
  // Columns before `col` contribute side + (side-1) + ... entries.
  return col * side - col * (col - 1) / 2 + (row - col);
}

Vector svec(const Matrix& S) {
  const int k = static_cast<int>(S.rows());
  Vector v(svec_length(k));
  int idx = 0;
  for (int c = 0; c < k; ++c)
    for (int r = c; r < k; ++r) v(idx++) = r == c ? S(r, c) : std::sqrt(2.0) * S(r, c);
  return v;
}

Matrix smat(const Vector& v) {
  const int k = static_cast<int>(std::lround((std::sqrt(8.0 * v.size() + 1.0) - 1.0) / 2.0));
  if (svec_length(k) != v.size()) throw DimensionError("svec", "length is not triangular");
  Matrix S(k, k);
  int idx = 0;
  for (int c = 0; c < k; ++c)
    for (int r = c; r < k; ++r) {
      const double val = r == c ? v(idx) : v(idx) / std::sqrt(2.0);
      S(r, c) = val;
      S(c, r) = val;
      ++idx;
    }
  return S;
}

int Cone::dimension() const { return kind == ConeKind::PositiveSemidefinite ? svec_length(size) : size; }

ConicProgram::ConicProgram(int num_vars) : num_vars_(num_vars), P_(Matrix::Zero(num_vars, num_vars)), q_(Vector::Zero(num_vars)) {
  if (num_vars < 0) throw std::invalid_argument("ConicProgram: negative variable count");
  if (num_vars > 0) blocks_.push_back({"z", {0, num_vars}});
}

VarRange ConicProgram::add_variables(int count, const std::string& name) {
  if (count < 0) throw std::invalid_argument("add_variables: negative count");
  VarRange range{num_vars_, count};
  num_vars_ += count;
  P_.conservativeResizeLike(Matrix::Zero(num_vars_, num_vars_));
  q_.conservativeResizeLike(Vector::Zero(num_vars_));
  for (auto& c : constraints_) c.F.conservativeResize(c.F.rows(), num_vars_);
  blocks_.push_back({name, range});
  return range;
}

void ConicProgram::add_constraint(Cone cone, const SparseMatrix& F, const Vector& f, const std::string& label) {
  if (cone.size < 0 || (cone.kind != ConeKind::Zero && cone.kind != ConeKind::Nonnegative && cone.size < 1))
    throw std::invalid_argument("add_constraint: invalid cone size");
  const int dim = cone.dimension();
  if (F.rows() != dim) throw DimensionError(label.empty() ? "F" : label, "rows differ from the cone dimension");
  if (F.cols() > num_vars_) throw DimensionError(label.empty() ? "F" : label, "more columns than variables");
  require_size(label.empty() ? "f" : label, f.size(), dim);
  ConeConstraint c{cone, F, f, label};
  c.F.conservativeResize(dim, num_vars_);
  c.F.makeCompressed();
  constraints_.push_back(std::move(c));
}

void ConicProgram::add_constraint(Cone cone, const Matrix& F, const Vector& f, const std::string& label) {
  add_constraint(cone, SparseMatrix(F.sparseView()), f, label);
}

void ConicProgram::add_equality(const Matrix& F, const Vector& f, const std::string& label) {
  add_constraint(Cone{ConeKind::Zero, static_cast<int>(F.rows())}, F, f, label);
}

void ConicProgram::add_nonnegative(const Matrix& F, const Vector& f, const std::string& label) {
  add_constraint(Cone{ConeKind::Nonnegative, static_cast<int>(F.rows())}, F, f, label);
}

void ConicProgram::add_linear_cost(const Vector& q) {
  if (q.size() > num_vars_) throw DimensionError("q", "longer than the variable count");
  q_.head(q.size()) += q;
}

void ConicProgram::add_linear_cost(int var, double coeff) {
  if (var < 0 || var >= num_vars_) throw DimensionError("q", "variable index out of range");
  q_(var) += coeff;
}

void ConicProgram::add_quadratic_cost(const Matrix& P) {
  if (P.rows() != P.cols() || P.rows() > num_vars_) throw DimensionError("P", "must be square and fit the variables");
  P_.topLeftCorner(P.rows(), P.cols()) += 0.5 * (P + P.transpose());
  if (P.size() > 0 && P.cwiseAbs().maxCoeff() > 0.0) has_quadratic_ = true;
}

double ConicProgram::objective_at(const Vector& z) const {
  require_size("z", z.size(), num_vars_);
  return 0.5 * z.dot(P_ * z) + q_.dot(z) + constant_;
}

double ConicProgram::max_violation(const Vector& z) const {
  require_size("z", z.size(), num_vars_);
  double worst = 0.0;
  for (const auto& c : constraints_) {
    const Vector v = c.F * z + c.f;
    switch (c.cone.kind) {
      case ConeKind::Zero: worst = std::max(worst, v.size() ? v.cwiseAbs().maxCoeff() : 0.0); break;
      case ConeKind::Nonnegative: worst = std::max(worst, v.size() ? -v.minCoeff() : 0.0); break;
      case ConeKind::SecondOrder: worst = std::max(worst, v.tail(v.size() - 1).norm() - v(0)); break;
      case ConeKind::PositiveSemidefinite: {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(smat(v), Eigen::EigenvaluesOnly);
        worst = std::max(worst, -eig.eigenvalues().minCoeff());
        break;
      }
    }
  }
  return worst;
}

std::string ConicProgram::to_json_text(int indent) const {
  json j;
  j["num_vars"] = num_vars_;
  json blocks = json::array();
  for (const auto& [name, r] : blocks_) blocks.push_back({{"name", name}, {"start", r.start}, {"count", r.count}});
  j["variables"] = blocks;
  json P_trip = json::array();
  for (int c = 0; c < num_vars_; ++c)
    for (int r = 0; r < num_vars_; ++r)
      if (P_(r, c) != 0.0) P_trip.push_back({r, c, P_(r, c)});
  j["objective"] = {{"P", P_trip}, {"q", detail::vector_to_json(q_)}, {"constant", constant_}};
  json cons = json::array();
  for (const auto& c : constraints_) {
    json F = json::array();
    for (int k = 0; k < c.F.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(c.F, k); it; ++it) F.push_back({it.row(), it.col(), it.value()});
    cons.push_back({{"label", c.label},
                    {"cone", {{"kind", to_string(c.cone.kind)}, {"size", c.cone.size}}},
                    {"F", F},
                    {"f", detail::vector_to_json(c.f)}});
  }
  j["constraints"] = cons;
  return j.dump(indent);
}

ConicProgram ConicProgram::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  const int n = j.at("num_vars").get<int>();
  ConicProgram prog(0);
  for (const auto& b : j.at("variables")) prog.add_variables(b.at("count").get<int>(), b.at("name").get<std::string>());
  if (prog.num_vars() != n) throw DimensionError("num_vars", "does not match variable blocks");
  const auto& obj = j.at("objective");
  for (const auto& t : obj.at("P")) prog.P_(t[0].get<int>(), t[1].get<int>()) = t[2].get<double>();
  prog.has_quadratic_ = prog.P_.size() > 0 && prog.P_.cwiseAbs().maxCoeff() > 0.0;
  prog.q_ = detail::vector_from_json(obj.at("q"), "objective.q");
  if (prog.q_.size() != n) throw DimensionError("objective.q", "length differs from num_vars");
  prog.constant_ = obj.at("constant").get<double>();
  for (const auto& c : j.at("constraints")) {
    Cone cone{cone_kind_from_string(c.at("cone").at("kind").get<std::string>()), c.at("cone").at("size").get<int>()};
    std::vector<Triplet> trips;
    for (const auto& t : c.at("F")) trips.emplace_back(t[0].get<int>(), t[1].get<int>(), t[2].get<double>());
    SparseMatrix F(cone.dimension(), n);
    F.setFromTriplets(trips.begin(), trips.end());
    prog.add_constraint(cone, F, detail::vector_from_json(c.at("f"), "constraints.f"), c.at("label").get<std::string>());
  }
  return prog;
}

RobustLinearSet robust_linear_set_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  if (!j.contains("type")) throw ConfigError("set.type", "missing");
  const auto type = j["type"].get<std::string>();
  if (type == "box") return BoxSet{j.at("rho").get<double>()};
  if (type == "ellipsoid") return EllipsoidSet{j.at("rho").get<double>()};
  if (type == "budget")
    return BudgetSet{detail::matrix_from_json(j.at("D"), "set.D"), detail::vector_from_json(j.at("d"), "set.d")};
  if (type == "polyhedral") return PolyhedralSet{j.at("rho").get<double>(), j.at("tau").get<double>()};
  throw ConfigError("set.type", "unknown set tag '" + type + "'");
}

void add_robust_linear_constraint(ConicProgram& prog, VarRange x, const Vector& a, const Matrix& B, double b,
                                  const RobustLinearSet& set, const std::string& label) {
  require_size("a", a.size(), x.count);
  if (B.cols() != x.count) throw DimensionError("B", "column count differs from the variable block");
  if (x.start < 0 || x.start + x.count > prog.num_vars()) throw DimensionError("x", "variable block out of range");
  const int k = static_cast<int>(B.rows());

  // Row of the scalar inequality b - a'x - (...) >= 0 over all program variables.
  auto base_row = [&](int nv) {
    Matrix row = Matrix::Zero(1, nv);
    row.block(0, x.start, 1, x.count) = -a.transpose();
    return row;
  };
  auto Bx_rows = [&](int nv, double scale) {
    Matrix M = Matrix::Zero(k, nv);
    M.block(0, x.start, k, x.count) = scale * B;
    return M;
  };

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          if (s.rho < 0) throw std::invalid_argument("box set: negative radius");
          const VarRange t = prog.add_variables(k, label + ":abs");
          const int nv = prog.num_vars();
          Matrix F = Matrix::Zero(2 * k, nv);
          F.topRows(k) = -Bx_rows(nv, 1.0);
          F.bottomRows(k) = Bx_rows(nv, 1.0);
          F.block(0, t.start, k, k).setIdentity();
          F.block(k, t.start, k, k).setIdentity();
          prog.add_nonnegative(F, Vector::Zero(2 * k), label + ":abs");
          Matrix row = base_row(nv);
          row.block(0, t.start, 1, k).setConstant(-s.rho);
          prog.add_nonnegative(row, Vector::Constant(1, b), label);
        } else if constexpr (std::is_same_v<T, EllipsoidSet>) {
          if (s.rho < 0) throw std::invalid_argument("ellipsoid set: negative radius");
          const int nv = prog.num_vars();
          if (s.rho == 0.0 || k == 0) {
            prog.add_nonnegative(base_row(nv), Vector::Constant(1, b), label);
            return;
          }
          Matrix F(k + 1, nv);
          F.topRows(1) = base_row(nv);
          F.bottomRows(k) = Bx_rows(nv, s.rho);
          Vector f = Vector::Zero(k + 1);
          f(0) = b;
          prog.add_constraint(Cone{ConeKind::SecondOrder, k + 1}, F, f, label);
        } else if constexpr (std::is_same_v<T, BudgetSet>) {
          if (s.D.rows() == 0) throw std::invalid_argument("budget set: D is empty");
          if (s.D.cols() != k) throw DimensionError("D", "column count differs from rows of B");
          require_size("d", s.d.size(), s.D.rows());
          const int nb = static_cast<int>(s.D.rows());
          const VarRange nu = prog.add_variables(nb, label + ":nu");
          const int nv = prog.num_vars();
          Matrix row = base_row(nv);
          row.block(0, nu.start, 1, nb) = -s.d.transpose();
          prog.add_nonnegative(row, Vector::Constant(1, b), label);
          Matrix E = Bx_rows(nv, -1.0);
          E.block(0, nu.start, k, nb) = s.D.transpose();
          prog.add_equality(E, Vector::Zero(k), label + ":dual");
          Matrix pos = Matrix::Zero(nb, nv);
          pos.block(0, nu.start, nb, nb).setIdentity();
          prog.add_nonnegative(pos, Vector::Zero(nb), label + ":nu");
        } else {
          if (s.rho < 0 || s.tau < 0) throw std::invalid_argument("polyhedral set: negative bound");
          const VarRange nu = prog.add_variables(k, label + ":nu");
          const VarRange a1 = prog.add_variables(k, label + ":abs_nu");
          const VarRange tinf = prog.add_variables(1, label + ":inf");
          const int nv = prog.num_vars();
          Matrix F = Matrix::Zero(4 * k, nv);
          // a1 >= |nu|
          F.block(0, a1.start, k, k).setIdentity();
          F.block(0, nu.start, k, k).setIdentity();
          F.block(k, a1.start, k, k).setIdentity();
          F.block(k, nu.start, k, k) = -Matrix::Identity(k, k);
          // t >= |Bx - nu| entrywise
          F.block(2 * k, 0, k, nv) = -Bx_rows(nv, 1.0);
          F.block(2 * k, nu.start, k, k).setIdentity();
          F.block(2 * k, tinf.start, k, 1).setOnes();
          F.block(3 * k, 0, k, nv) = Bx_rows(nv, 1.0);
          F.block(3 * k, nu.start, k, k) = -Matrix::Identity(k, k);
          F.block(3 * k, tinf.start, k, 1).setOnes();
          prog.add_nonnegative(F, Vector::Zero(4 * k), label + ":aux");
          Matrix row = base_row(nv);
          row.block(0, a1.start, 1, k).setConstant(-s.rho);
          row(0, tinf.start) = -s.tau;
          prog.add_nonnegative(row, Vector::Constant(1, b), label);
        }
      },
      set);
}

}  // namespace rdeepc
