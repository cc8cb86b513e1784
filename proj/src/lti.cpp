#include "rdeepc/lti.hpp"

#include <Eigen/QR>

#include <cmath>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace rdeepc {

using detail::json;

LtiSystem::LtiSystem(Matrix A, Matrix B, Matrix C, Matrix D)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)) {
  if (A_.rows() < 1 || A_.rows() != A_.cols()) throw DimensionError("A", "must be square with n >= 1");
  const auto n = A_.rows();
  if (B_.rows() != n || B_.cols() < 1) throw DimensionError("B", "must be n x m with m >= 1");
  if (C_.cols() != n || C_.rows() < 1) throw DimensionError("C", "must be p x n with p >= 1");
  require_shape("D", D_.rows(), D_.cols(), C_.rows(), B_.cols());
}

LtiSystem LtiSystem::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("plant", std::string("invalid JSON: ") + e.what());
  }
  for (const char* key : {"A", "B", "C", "D"})
    if (!j.contains(key)) throw ConfigError(std::string("plant.") + key, "missing");
  return LtiSystem(detail::matrix_from_json(j["A"], "plant.A"), detail::matrix_from_json(j["B"], "plant.B"),
                   detail::matrix_from_json(j["C"], "plant.C"), detail::matrix_from_json(j["D"], "plant.D"));
}

LtiSystem LtiSystem::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open plant file");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string LtiSystem::to_json_text() const {
  json j;
  j["A"] = detail::matrix_to_json(A_);
  j["B"] = detail::matrix_to_json(B_);
  j["C"] = detail::matrix_to_json(C_);
  j["D"] = detail::matrix_to_json(D_);
  return j.dump(2);
}

Vector stack_signal(const Matrix& signal) {
  return Eigen::Map<const Vector>(signal.data(), signal.size());
}

Matrix unstack_signal(const Vector& stacked, int channels) {
  if (channels < 1 || stacked.size() % channels != 0)
    throw DimensionError("stacked signal", "length is not a multiple of the channel count");
  return Eigen::Map<const Matrix>(stacked.data(), channels, stacked.size() / channels);
}

Vector Trajectory::stacked_inputs() const { return stack_signal(inputs); }
Vector Trajectory::stacked_outputs() const { return stack_signal(outputs); }

Trajectory Trajectory::slice(int start, int count) const {
  if (start < 0 || count < 0 || start + count > length())
    throw DimensionError("slice", "window outside trajectory");
  return {inputs.middleCols(start, count), outputs.middleCols(start, count)};
}

std::string Trajectory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "t";
  for (int i = 0; i < m(); ++i) out << ",u_" << i + 1;
  for (int i = 0; i < p(); ++i) out << ",y_" << i + 1;
  out << "\n";
  for (int t = 0; t < length(); ++t) {
    out << t;
    for (int i = 0; i < m(); ++i) out << "," << inputs(i, t);
    for (int i = 0; i < p(); ++i) out << "," << outputs(i, t);
    out << "\n";
  }
  return out.str();
}

Trajectory simulate(const LtiSystem& sys, const Vector& x0, const Matrix& inputs, Vector* final_state) {
  require_size("x0", x0.size(), sys.n());
  if (inputs.cols() < 1) throw DimensionError("u", "input sequence is empty");
  if (inputs.rows() != sys.m()) throw DimensionError("u", "expected " + std::to_string(sys.m()) + " input channels");
  Trajectory out{inputs, Matrix(sys.p(), inputs.cols())};
  Vector x = x0;
  for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
    out.outputs.col(t) = sys.C() * x + sys.D() * inputs.col(t);
    x = sys.A() * x + sys.B() * inputs.col(t);
  }
  if (final_state) *final_state = x;
  return out;
}

namespace {

Vector standard_normal(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

void check_nonneg(double value, const char* what) {
  if (!(value >= 0.0)) throw std::invalid_argument(std::string(what) + " must be nonnegative");
}

// Apply a perturbation to the selected signal(s) of a trajectory.
template <class Fn>
void for_targets(Trajectory& traj, NoiseTarget target, Fn&& fn) {
  if (target == NoiseTarget::Outputs || target == NoiseTarget::Both) fn(traj.outputs);
  if (target == NoiseTarget::Inputs || target == NoiseTarget::Both) fn(traj.inputs);
}

}  // namespace

Vector sample_sphere(int dim, double radius, std::mt19937_64& rng) {
  if (dim == 0) return Vector(0);
  Vector v = standard_normal(dim, rng);
  double nrm = v.norm();
  while (nrm == 0.0) {
    v = standard_normal(dim, rng);
    nrm = v.norm();
  }
  return radius * v / nrm;
}

Vector sample_uniform_ball(int dim, double radius, std::mt19937_64& rng) {
  if (dim == 0) return Vector(0);
  Vector dir = sample_sphere(dim, 1.0, rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return radius * std::pow(unif(rng), 1.0 / dim) * dir;
}

void validate_noise(const NoiseModel& noise) {
  std::visit(
      [](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, GaussianNoise>) {
          if (model.sigma.size() == 0) throw std::invalid_argument("Gaussian noise: sigma is empty");
          if (model.sigma.minCoeff() < 0.0) throw std::invalid_argument("Gaussian noise: sigma must be nonnegative");
        } else if constexpr (std::is_same_v<T, UniformBallNoise>) {
          check_nonneg(model.radius, "ball noise radius");
        } else if constexpr (std::is_same_v<T, UniformBoxNoise>) {
          check_nonneg(model.bound, "box noise bound");
        } else {
          if (model.count < 0 || model.start < 0) throw std::invalid_argument("bad data: negative count or start");
        }
      },
      noise);
}

Trajectory apply_noise(const Trajectory& clean, const NoiseModel& noise, std::mt19937_64& rng) {
  validate_noise(noise);
  Trajectory out = clean;
  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, GaussianNoise>) {
          for_targets(out, model.target, [&](Matrix& sig) {
            if (model.sigma.size() != 1 && model.sigma.size() != sig.rows())
              throw DimensionError("sigma", "one entry per channel or a single entry");
            std::normal_distribution<double> normal(0.0, 1.0);
            for (Eigen::Index t = 0; t < sig.cols(); ++t)
              for (Eigen::Index c = 0; c < sig.rows(); ++c)
                sig(c, t) += model.sigma(model.sigma.size() == 1 ? 0 : c) * normal(rng);
          });
        } else if constexpr (std::is_same_v<T, UniformBallNoise>) {
          if (model.geometry == BallGeometry::Unstructured)
            throw std::invalid_argument("unstructured ball noise acts on data matrices, not signals");
          // One ball over everything affected, so Both couples inputs and outputs.
          const bool in = model.target != NoiseTarget::Outputs, outp = model.target != NoiseTarget::Inputs;
          const int nu = in ? static_cast<int>(out.inputs.size()) : 0;
          const int ny = outp ? static_cast<int>(out.outputs.size()) : 0;
          const Vector delta = sample_uniform_ball(nu + ny, model.radius, rng);
          if (in) out.inputs += unstack_signal(delta.head(nu), static_cast<int>(out.inputs.rows()));
          if (outp) out.outputs += unstack_signal(delta.tail(ny), static_cast<int>(out.outputs.rows()));
        } else if constexpr (std::is_same_v<T, UniformBoxNoise>) {
          for_targets(out, model.target, [&](Matrix& sig) {
            std::uniform_real_distribution<double> unif(-model.bound, model.bound);
            for (Eigen::Index t = 0; t < sig.cols(); ++t)
              for (Eigen::Index c = 0; c < sig.rows(); ++c) sig(c, t) += unif(rng);
          });
        } else {
          Matrix& sig = out.outputs;
          if (model.start + model.count > sig.cols())
            throw std::invalid_argument("bad data: count exceeds the output sequence length");
          if (model.channel >= sig.rows()) throw DimensionError("bad data channel", "out of range");
          for (int t = model.start; t < model.start + model.count; ++t) {
            if (model.channel < 0)
              sig.col(t).setConstant(model.value);
            else
              sig(model.channel, t) = model.value;
          }
        }
      },
      noise);
  return out;
}

int sufficient_length(int m, int n, int depth) { return (m + 1) * (depth + n) - 1; }

CollectedData collect_data(const LtiSystem& sys, const Vector& x0, const Excitation& excitation, int T,
                           std::mt19937_64& rng, const CollectOptions& options) {
  if (T < 1) throw std::invalid_argument("collect_data: T must be positive");
  if (options.burn_in < 0) throw std::invalid_argument("collect_data: burn_in must be nonnegative");
  const int total = T + options.burn_in;
  Matrix u;
  if (const auto* gauss = std::get_if<GaussianExcitation>(&excitation)) {
    check_nonneg(gauss->amplitude, "excitation amplitude");
    u.resize(sys.m(), total);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < total; ++t)
      for (int c = 0; c < sys.m(); ++c) u(c, t) = gauss->amplitude * normal(rng);
  } else {
    u = std::get<Matrix>(excitation);
    require_shape("excitation", u.rows(), u.cols(), sys.m(), total);
  }
  const Trajectory full = simulate(sys, x0, u);
  CollectedData out;
  out.clean = full.slice(options.burn_in, T);
  out.measured = options.noise ? apply_noise(out.clean, *options.noise, rng) : out.clean;
  if (options.predictor_depth > 0) {
    const int need = sufficient_length(sys.m(), sys.n(), options.predictor_depth);
    if (T < need) {
      out.length_sufficient = false;
      out.warning = "T=" + std::to_string(T) + " is below the sufficient length " + std::to_string(need) +
                    " for a depth-" + std::to_string(options.predictor_depth) + " predictor";
    }
  }
  return out;
}

Matrix impulse_response_matrix(const LtiSystem& sys, int N) {
  if (N < 1) throw std::invalid_argument("impulse_response_matrix: N must be at least 1");
  const int m = sys.m(), p = sys.p();
  // Markov parameters h_0 = D, h_k = C A^{k-1} B.
  std::vector<Matrix> markov(N);
  markov[0] = sys.D();
  Matrix AkB = sys.B();
  for (int k = 1; k < N; ++k) {
    markov[k] = sys.C() * AkB;
    AkB = sys.A() * AkB;
  }
  Matrix T = Matrix::Zero(p * N, m * N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j) T.block(i * p, j * m, p, m) = markov[i - j];
  return T;
}

Matrix observability_matrix(const LtiSystem& sys, int L) {
  Matrix O(sys.p() * L, sys.n());
  Matrix CAk = sys.C();
  for (int k = 0; k < L; ++k) {
    O.middleRows(k * sys.p(), sys.p()) = CAk;
    CAk = CAk * sys.A();
  }
  return O;
}

int lag(const LtiSystem& sys) {
  const int target = numerical_rank(observability_matrix(sys, sys.n()));
  for (int l = 0; l <= sys.n(); ++l) {
    const int r = l == 0 ? 0 : numerical_rank(observability_matrix(sys, l));
    if (r == target) return l;
  }
  return sys.n();
}

ArxMatrices arx_matrices(const LtiSystem& sys, int T_ini, int N) {
  if (T_ini < 1 || N < 1) throw std::invalid_argument("arx_matrices: T_ini and N must be positive");
  if (T_ini < lag(sys)) throw std::invalid_argument("initial window shorter than system lag");
  const int n = sys.n(), m = sys.m(), p = sys.p();
  const Matrix O_ini = observability_matrix(sys, T_ini);
  const Matrix T_ini_mat = impulse_response_matrix(sys, T_ini);
  const Matrix O_N = observability_matrix(sys, N);
  Matrix ctrl(n, m * T_ini);  // state after the window from zero initial state
  Matrix Ak = Matrix::Identity(n, n);
  for (int k = T_ini - 1; k >= 0; --k) {
    ctrl.middleCols(k * m, m) = Ak * sys.B();
    Ak = sys.A() * Ak;
  }
  const Matrix& A_pow = Ak;  // A^{T_ini}

  // Psi maps (u_ini, x_start, u_F) to (u_ini, y_ini, u_F); Phi maps it to y_F.
  const int cols = m * T_ini + n + m * N;
  Matrix Psi = Matrix::Zero((m + p) * T_ini + m * N, cols);
  Psi.topLeftCorner(m * T_ini, m * T_ini).setIdentity();
  Psi.block(m * T_ini, 0, p * T_ini, m * T_ini) = T_ini_mat;
  Psi.block(m * T_ini, m * T_ini, p * T_ini, n) = O_ini;
  Psi.bottomRightCorner(m * N, m * N).setIdentity();
  Matrix Phi(p * N, cols);
  Phi.leftCols(m * T_ini) = O_N * ctrl;
  Phi.middleCols(m * T_ini, n) = O_N * A_pow;
  const Matrix TN = impulse_response_matrix(sys, N);
  Phi.rightCols(m * N) = TN;

  const Matrix full = Phi * Psi.completeOrthogonalDecomposition().pseudoInverse();
  return {full.leftCols((m + p) * T_ini), TN};
}

}  // namespace rdeepc
