#pragma once

#include <string>
#include <vector>

#include "rdeepc/lti.hpp"
#include "rdeepc/types.hpp"

namespace rdeepc {

enum class DataMatrixKind { Hankel, Page, TrajectoryMatrix };

std::string to_string(DataMatrixKind kind);
DataMatrixKind data_matrix_kind_from_string(const std::string& name);

/// Signal windows stacked as columns: column j is (s_j, ..., s_{j+L-1}).
Matrix build_hankel(const Matrix& signal, int L);
/// Non-overlapping windows: column j is (s_{jL}, ..., s_{jL+L-1}).
Matrix build_page(const Matrix& signal, int L);
/// Column i is the stacked i-th trajectory; every entry is a q x L signal.
Matrix build_trajectory_matrix(const std::vector<Matrix>& trajectories);

/// Past/future predictor blocks.
struct DataMatrices {
  Matrix Up, Yp, Uf, Yf;
  DataMatrixKind kind = DataMatrixKind::Hankel;
  int T_ini = 0;
  int N = 0;
  // Raw recorded signals (m x T, p x T). Present for Hankel and Page data.
  Matrix source_inputs;
  Matrix source_outputs;

  int m() const { return T_ini > 0 ? static_cast<int>(Up.rows()) / T_ini : 0; }
  int p() const { return T_ini > 0 ? static_cast<int>(Yp.rows()) / T_ini : 0; }
  int columns() const { return static_cast<int>(Up.cols()); }
  int depth() const { return T_ini + N; }

  Matrix input_matrix() const;   // col(Up, Uf)
  Matrix output_matrix() const;  // col(Yp, Yf)
  Matrix stacked() const;        // col(Up, Yp, Uf, Yf)

  std::string to_json_text() const;
  static DataMatrices from_json_text(const std::string& text);
};

DataMatrices partition(const Matrix& u_matrix, const Matrix& y_matrix, int T_ini, int N,
                       DataMatrixKind kind = DataMatrixKind::Hankel);

/// Hankel or Page predictor from one recorded trajectory.
DataMatrices make_data_matrices(const Trajectory& data, int T_ini, int N, DataMatrixKind kind);
DataMatrices make_trajectory_data(const std::vector<Trajectory>& experiments, int T_ini, int N);

struct RankCheck {
  int rank = 0;
  int required = 0;
  bool satisfied = false;
};
/// Generalized persistency check: rank of H_L(u, y) against mL + n_upper.
RankCheck check_rank_condition(const Matrix& stacked, int m, int L, int n_upper);
/// Same check on the interleaved Hankel matrix of a trajectory.
RankCheck check_rank_condition(const Trajectory& data, int L, int n_upper);

/// Predict y_future from noiseless data by least squares on the stacked system.
Vector complete_trajectory(const DataMatrices& dm, const Vector& u_ini, const Vector& y_ini,
                           const Vector& u_future);

/// [K T_N] from noiseless data via Yf * pinv(col(Up, Yp, Uf)).
ArxMatrices arx_matrices(const DataMatrices& perfect);

}  // namespace rdeepc
