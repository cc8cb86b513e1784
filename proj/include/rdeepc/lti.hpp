#pragma once

#include <optional>
#include <random>
#include <string>
#include <variant>

#include "rdeepc/types.hpp"

namespace rdeepc {

/// Discrete-time plant x+ = A x + B u, y = C x + D u.
class LtiSystem {
 public:
  LtiSystem(Matrix A, Matrix B, Matrix C, Matrix D);

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& C() const { return C_; }
  const Matrix& D() const { return D_; }
  int n() const { return static_cast<int>(A_.rows()); }
  int m() const { return static_cast<int>(B_.cols()); }
  int p() const { return static_cast<int>(C_.rows()); }

  /// Parse {"A","B","C","D"} row-major nested arrays.
  static LtiSystem from_json_text(const std::string& text);
  static LtiSystem from_json_file(const std::string& path);
  std::string to_json_text() const;

 private:
  Matrix A_, B_, C_, D_;
};

/// Input/output record. Column t holds the sample at time t.
struct Trajectory {
  Matrix inputs;   // m x T
  Matrix outputs;  // p x T

  int length() const { return static_cast<int>(inputs.cols()); }
  int m() const { return static_cast<int>(inputs.rows()); }
  int p() const { return static_cast<int>(outputs.rows()); }
  Vector stacked_inputs() const;   // channel-major within each time step
  Vector stacked_outputs() const;
  Trajectory slice(int start, int count) const;
  /// CSV with header t,u_1..u_m,y_1..y_p.
  std::string to_csv() const;
};

// Stack an q x T signal into a length qT vector, and back.
Vector stack_signal(const Matrix& signal);
Matrix unstack_signal(const Vector& stacked, int channels);

enum class NoiseTarget { Outputs, Inputs, Both };
enum class BallGeometry { Structured, Unstructured };

struct GaussianNoise {
  Vector sigma;  // one entry per affected channel, or a single entry broadcast
  NoiseTarget target = NoiseTarget::Outputs;
};
/// Uniform in the Euclidean ball over the stacked affected signal. The
/// unstructured geometry acts on data matrices and is applied by the harness.
struct UniformBallNoise {
  double radius = 0.0;
  BallGeometry geometry = BallGeometry::Structured;
  NoiseTarget target = NoiseTarget::Outputs;
};
struct UniformBoxNoise {
  double bound = 0.0;
  NoiseTarget target = NoiseTarget::Outputs;
};
/// Overwrite `count` consecutive output samples of one channel with `value`.
struct BadDataNoise {
  int count = 0;
  double value = 0.0;
  int start = 0;
  int channel = -1;  // -1: every output channel
};
using NoiseModel = std::variant<GaussianNoise, UniformBallNoise, UniformBoxNoise, BadDataNoise>;

void validate_noise(const NoiseModel& noise);
/// Returns a corrupted copy of `clean`.
Trajectory apply_noise(const Trajectory& clean, const NoiseModel& noise, std::mt19937_64& rng);
/// Uniform sample from the Euclidean ball of the given radius in R^dim.
Vector sample_uniform_ball(int dim, double radius, std::mt19937_64& rng);
/// Uniform sample on the sphere of the given radius in R^dim.
Vector sample_sphere(int dim, double radius, std::mt19937_64& rng);

Trajectory simulate(const LtiSystem& sys, const Vector& x0, const Matrix& inputs,
                    Vector* final_state = nullptr);

/// iid Gaussian excitation with the given standard deviation.
struct GaussianExcitation {
  double amplitude = 1.0;
};
using Excitation = std::variant<GaussianExcitation, Matrix>;

struct CollectOptions {
  int burn_in = 0;             // samples simulated and discarded before recording
  int predictor_depth = 0;     // T_ini + N; 0 disables the length check
  std::optional<NoiseModel> noise;
};

struct CollectedData {
  Trajectory clean;
  Trajectory measured;   // equals clean when no noise model is attached
  bool length_sufficient = true;
  std::string warning;
};

/// Length heuristic for a depth-L Hankel predictor: (m+1)(L+n)-1 samples.
int sufficient_length(int m, int n, int depth);

CollectedData collect_data(const LtiSystem& sys, const Vector& x0, const Excitation& excitation,
                           int T, std::mt19937_64& rng, const CollectOptions& options = {});

/// Block lower-triangular convolution matrix, pN x mN.
Matrix impulse_response_matrix(const LtiSystem& sys, int N);
/// Extended observability matrix col(C, CA, ..., CA^{L-1}).
Matrix observability_matrix(const LtiSystem& sys, int L);
/// Smallest l with rank O_l equal to the rank of the observable subspace.
int lag(const LtiSystem& sys);

struct ArxMatrices {
  Matrix K;   // pN x (m+p)T_ini, acting on col(u_ini, y_ini)
  Matrix TN;  // pN x mN
};
ArxMatrices arx_matrices(const LtiSystem& sys, int T_ini, int N);

}  // namespace rdeepc
