#include "rdeepc/data_matrices.hpp"

#include <Eigen/QR>

#include "json_util.hpp"

namespace rdeepc {

using detail::json;

std::string to_string(DataMatrixKind kind) {
  switch (kind) {
    case DataMatrixKind::Hankel: return "hankel";
    case DataMatrixKind::Page: return "page";
    case DataMatrixKind::TrajectoryMatrix: return "trajectory";
  }
  return "unknown";
}

DataMatrixKind data_matrix_kind_from_string(const std::string& name) {
  if (name == "hankel") return DataMatrixKind::Hankel;
  if (name == "page") return DataMatrixKind::Page;
  if (name == "trajectory") return DataMatrixKind::TrajectoryMatrix;
  throw std::invalid_argument("unknown data matrix kind '" + name + "'");
}

Matrix build_hankel(const Matrix& signal, int L) {
  const auto q = signal.rows();
  const auto T = static_cast<int>(signal.cols());
  if (L < 1) throw std::invalid_argument("build_hankel: depth must be at least 1");
  if (T < L) throw std::invalid_argument("build_hankel: signal length " + std::to_string(T) +
                                         " is shorter than depth " + std::to_string(L));
  const int cols = T - L + 1;
  Matrix H(q * L, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < L; ++i) H.block(i * q, j, q, 1) = signal.col(i + j);
  return H;
}

Matrix build_page(const Matrix& signal, int L) {
  const auto q = signal.rows();
  const auto T = static_cast<int>(signal.cols());
  if (L < 1) throw std::invalid_argument("build_page: depth must be at least 1");
  if (T == 0 || T % L != 0)
    throw std::invalid_argument("build_page: signal length " + std::to_string(T) +
                                " is not a multiple of depth " + std::to_string(L));
  const int cols = T / L;
  Matrix P(q * L, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < L; ++i) P.block(i * q, j, q, 1) = signal.col(j * L + i);
  return P;
}

Matrix build_trajectory_matrix(const std::vector<Matrix>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("build_trajectory_matrix: no trajectories");
  const auto q = trajectories.front().rows();
  const auto L = trajectories.front().cols();
  Matrix M(q * L, static_cast<Eigen::Index>(trajectories.size()));
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Matrix& t = trajectories[i];
    if (t.rows() != q || t.cols() != L)
      throw std::invalid_argument("build_trajectory_matrix: trajectory " + std::to_string(i) +
                                  " has a different length or channel count");
    M.col(static_cast<Eigen::Index>(i)) = stack_signal(t);
  }
  return M;
}

Matrix DataMatrices::input_matrix() const {
  Matrix M(Up.rows() + Uf.rows(), Up.cols());
  M << Up, Uf;
  return M;
}

Matrix DataMatrices::output_matrix() const {
  Matrix M(Yp.rows() + Yf.rows(), Yp.cols());
  M << Yp, Yf;
  return M;
}

Matrix DataMatrices::stacked() const {
  Matrix M(Up.rows() + Yp.rows() + Uf.rows() + Yf.rows(), Up.cols());
  M << Up, Yp, Uf, Yf;
  return M;
}

DataMatrices partition(const Matrix& u_matrix, const Matrix& y_matrix, int T_ini, int N, DataMatrixKind kind) {
  if (T_ini < 1 || N < 1) throw std::invalid_argument("partition: T_ini and N must be positive");
  const int L = T_ini + N;
  if (u_matrix.rows() == 0 || u_matrix.rows() % L != 0)
    throw DimensionError("u_matrix", "row count " + std::to_string(u_matrix.rows()) +
                                         " is not m*(T_ini+N) for T_ini+N=" + std::to_string(L));
  if (y_matrix.rows() == 0 || y_matrix.rows() % L != 0)
    throw DimensionError("y_matrix", "row count " + std::to_string(y_matrix.rows()) +
                                         " is not p*(T_ini+N) for T_ini+N=" + std::to_string(L));
  if (u_matrix.cols() != y_matrix.cols()) throw DimensionError("y_matrix", "column count differs from u_matrix");
  const auto m = u_matrix.rows() / L;
  const auto p = y_matrix.rows() / L;
  DataMatrices dm;
  dm.kind = kind;
  dm.T_ini = T_ini;
  dm.N = N;
  dm.Up = u_matrix.topRows(m * T_ini);
  dm.Uf = u_matrix.bottomRows(m * N);
  dm.Yp = y_matrix.topRows(p * T_ini);
  dm.Yf = y_matrix.bottomRows(p * N);
  return dm;
}

DataMatrices make_data_matrices(const Trajectory& data, int T_ini, int N, DataMatrixKind kind) {
  const int L = T_ini + N;
  DataMatrices dm;
  if (kind == DataMatrixKind::Hankel) {
    dm = partition(build_hankel(data.inputs, L), build_hankel(data.outputs, L), T_ini, N, kind);
  } else if (kind == DataMatrixKind::Page) {
    const int usable = (data.length() / L) * L;
    dm = partition(build_page(data.inputs.leftCols(usable), L), build_page(data.outputs.leftCols(usable), L),
                   T_ini, N, kind);
  } else {
    throw std::invalid_argument("make_data_matrices: trajectory matrices need independent experiments");
  }
  dm.source_inputs = data.inputs;
  dm.source_outputs = data.outputs;
  return dm;
}

DataMatrices make_trajectory_data(const std::vector<Trajectory>& experiments, int T_ini, int N) {
  std::vector<Matrix> us, ys;
  for (const auto& e : experiments) {
    if (e.length() != T_ini + N)
      throw std::invalid_argument("make_trajectory_data: experiment length must equal T_ini+N");
    us.push_back(e.inputs);
    ys.push_back(e.outputs);
  }
  return partition(build_trajectory_matrix(us), build_trajectory_matrix(ys), T_ini, N,
                   DataMatrixKind::TrajectoryMatrix);
}

RankCheck check_rank_condition(const Matrix& stacked, int m, int L, int n_upper) {
  RankCheck out;
  out.rank = numerical_rank(stacked);
  out.required = m * L + n_upper;
  out.satisfied = out.rank == out.required;
  return out;
}

RankCheck check_rank_condition(const Trajectory& data, int L, int n_upper) {
  const Matrix Hu = build_hankel(data.inputs, L);
  const Matrix Hy = build_hankel(data.outputs, L);
  Matrix H(Hu.rows() + Hy.rows(), Hu.cols());
  H << Hu, Hy;
  return check_rank_condition(H, data.m(), L, n_upper);
}

Vector complete_trajectory(const DataMatrices& dm, const Vector& u_ini, const Vector& y_ini, const Vector& u_future) {
  require_size("u_ini", u_ini.size(), dm.Up.rows());
  require_size("y_ini", y_ini.size(), dm.Yp.rows());
  require_size("u_future", u_future.size(), dm.Uf.rows());
  Matrix lhs(dm.Up.rows() + dm.Yp.rows() + dm.Uf.rows(), dm.columns());
  lhs << dm.Up, dm.Yp, dm.Uf;
  Vector rhs(lhs.rows());
  rhs << u_ini, y_ini, u_future;
  const Vector g = lhs.completeOrthogonalDecomposition().solve(rhs);
  const double residual = (lhs * g - rhs).norm();
  if (residual > 1e-6 * std::max(1.0, rhs.norm())) throw std::invalid_argument("data does not represent a trajectory");
  return dm.Yf * g;
}

ArxMatrices arx_matrices(const DataMatrices& perfect) {
  const int m = perfect.m(), p = perfect.p();
  Matrix H(perfect.Up.rows() + perfect.Yp.rows() + perfect.Uf.rows(), perfect.columns());
  H << perfect.Up, perfect.Yp, perfect.Uf;
  const Matrix full = perfect.Yf * H.completeOrthogonalDecomposition().pseudoInverse();
  return {full.leftCols((m + p) * perfect.T_ini), full.rightCols(m * perfect.N)};
}

std::string DataMatrices::to_json_text() const {
  json j;
  j["kind"] = to_string(kind);
  j["T_ini"] = T_ini;
  j["N"] = N;
  j["H_c"] = columns();
  j["blocks"] = {{"U_P", detail::matrix_to_json(Up)},
                 {"Y_P", detail::matrix_to_json(Yp)},
                 {"U_F", detail::matrix_to_json(Uf)},
                 {"Y_F", detail::matrix_to_json(Yf)}};
  return j.dump();
}

DataMatrices DataMatrices::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  DataMatrices dm;
  dm.kind = data_matrix_kind_from_string(j.at("kind").get<std::string>());
  dm.T_ini = j.at("T_ini").get<int>();
  dm.N = j.at("N").get<int>();
  const auto& b = j.at("blocks");
  dm.Up = detail::matrix_from_json(b.at("U_P"), "blocks.U_P");
  dm.Yp = detail::matrix_from_json(b.at("Y_P"), "blocks.Y_P");
  dm.Uf = detail::matrix_from_json(b.at("U_F"), "blocks.U_F");
  dm.Yf = detail::matrix_from_json(b.at("Y_F"), "blocks.Y_F");
  if (dm.columns() != j.at("H_c").get<int>()) throw DimensionError("H_c", "does not match the blocks");
  return dm;
}

}  // namespace rdeepc
