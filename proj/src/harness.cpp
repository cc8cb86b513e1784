#include "rdeepc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "json_util.hpp"

namespace rdeepc {

using detail::json;

namespace {

// ---- JSON reading with path-qualified errors ----------------------------------------

class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  Node at(const std::string& key) const {
    if (!has(key)) throw ConfigError(sub(key), "missing");
    return {j_.at(key), sub(key)};
  }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void require_object() const {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "expected an object");
  }
  void allow_only(std::initializer_list<const char*> keys) const {
    require_object();
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& item : j_.items())
      if (!known.count(item.key())) throw ConfigError(sub(item.key()), "unknown field");
  }

  double number(const std::string& key, double fallback) const { return has(key) ? at(key).as_number() : fallback; }
  int integer(const std::string& key, int fallback) const { return has(key) ? at(key).as_int() : fallback; }
  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(sub(key), "expected true or false");
    return j_.at(key).get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? at(key).as_string() : fallback;
  }

  double as_number() const {
    if (!j_.is_number()) throw ConfigError(path_, "expected a number");
    return j_.get<double>();
  }
  int as_int() const {
    if (!j_.is_number_integer()) throw ConfigError(path_, "expected an integer");
    return j_.get<int>();
  }
  std::uint64_t as_seed() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<long long>() >= 0))
      throw ConfigError(path_, "expected a nonnegative integer");
    return j_.get<std::uint64_t>();
  }
  std::string as_string() const {
    if (!j_.is_string()) throw ConfigError(path_, "expected a string");
    return j_.get<std::string>();
  }
  Vector as_vector() const { return detail::vector_from_json(j_, path_); }
  Matrix as_matrix() const { return detail::matrix_from_json(j_, path_); }

 private:
  const json& j_;
  std::string path_;
};

std::array<double, 4> alpha_from(const Node& n) {
  const Vector a = n.as_vector();
  if (a.size() != 4) throw ConfigError(n.path(), "expected four block scalings");
  if (a.minCoeff() < 0.0) throw ConfigError(n.path(), "block scalings must be nonnegative");
  return {a(0), a(1), a(2), a(3)};
}

NoiseTarget target_from(const Node& n) {
  const std::string t = n.as_string();
  if (t == "outputs") return NoiseTarget::Outputs;
  if (t == "inputs") return NoiseTarget::Inputs;
  if (t == "both") return NoiseTarget::Both;
  throw ConfigError(n.path(), "expected outputs, inputs or both");
}

std::array<double, 4> target_alpha(NoiseTarget t) {
  const double in = t != NoiseTarget::Outputs ? 1.0 : 0.0, out = t != NoiseTarget::Inputs ? 1.0 : 0.0;
  return {in, out, in, out};
}

// Per-sample weight: a scalar, one entry per channel, or a full matrix.
Matrix weight_from(const Node& n, int channels) {
  const Matrix M = n.as_matrix();
  if (M.size() == 1) return M(0, 0) * Matrix::Identity(channels, channels);
  if (M.cols() == 1 && M.rows() == channels) return Matrix(M.col(0).asDiagonal());
  if (M.rows() == channels && M.cols() == channels) return M;
  throw ConfigError(n.path(), "expected a scalar, " + std::to_string(channels) + " entries or a " +
                                  std::to_string(channels) + "x" + std::to_string(channels) + " matrix");
}

Vector broadcast(const Vector& v, int size, const std::string& name) {
  if (v.size() == 1) return Vector::Constant(size, v(0));
  if (v.size() != size)
    throw ConfigError(name, "expected " + std::to_string(size) + " entries, got " + std::to_string(v.size()));
  return v;
}

SetSpec set_from(const Node& n) {
  n.allow_only({"kind", "rho", "rho_A", "rho_b", "input_bound", "output_bound", "alpha"});
  SetSpec s;
  s.kind = n.at("kind").as_string();
  if (s.kind == "unstructured" || s.kind == "structured") {
    s.rho = n.at("rho").as_number();
    if (s.rho < 0.0) throw ConfigError(n.sub("rho"), "must be nonnegative");
    if (n.has("alpha")) s.alpha = alpha_from(n.at("alpha"));
  } else if (s.kind == "columnwise") {
    s.rho_A = n.at("rho_A").as_vector();
    s.rho_b = n.number("rho_b", 0.0);
    if ((s.rho_A.size() > 0 && s.rho_A.minCoeff() < 0.0) || s.rho_b < 0.0)
      throw ConfigError(n.sub("rho_A"), "bounds must be nonnegative");
  } else if (s.kind == "interval") {
    s.input_bound = n.has("input_bound") ? n.at("input_bound").as_vector() : Vector::Zero(1);
    s.output_bound = n.has("output_bound") ? n.at("output_bound").as_vector() : Vector::Zero(1);
    if (s.input_bound.minCoeff() < 0.0 || s.output_bound.minCoeff() < 0.0)
      throw ConfigError(n.path(), "bounds must be nonnegative");
  } else {
    throw ConfigError(n.sub("kind"), "expected unstructured, columnwise, interval or structured");
  }
  return s;
}

NoiseModel noise_from(const Node& n) {
  const std::string kind = n.at("kind").as_string();
  if (kind == "gaussian") {
    n.allow_only({"kind", "sigma", "target"});
    GaussianNoise g{n.at("sigma").as_vector(), NoiseTarget::Outputs};
    if (n.has("target")) g.target = target_from(n.at("target"));
    if (g.sigma.size() == 0 || g.sigma.minCoeff() < 0.0) throw ConfigError(n.sub("sigma"), "must be nonnegative");
    return g;
  }
  if (kind == "ball") {
    n.allow_only({"kind", "radius", "target"});
    UniformBallNoise b{n.at("radius").as_number(), BallGeometry::Structured, NoiseTarget::Outputs};
    if (n.has("target")) b.target = target_from(n.at("target"));
    if (b.radius < 0.0) throw ConfigError(n.sub("radius"), "must be nonnegative");
    return b;
  }
  if (kind == "box") {
    n.allow_only({"kind", "bound", "target"});
    UniformBoxNoise b{n.at("bound").as_number(), NoiseTarget::Outputs};
    if (n.has("target")) b.target = target_from(n.at("target"));
    if (b.bound < 0.0) throw ConfigError(n.sub("bound"), "must be nonnegative");
    return b;
  }
  if (kind == "bad_data") {
    n.allow_only({"kind", "count", "value", "start", "channel"});
    BadDataNoise b;
    b.count = n.integer("count", 5);
    b.value = n.number("value", 0.0);
    b.channel = n.integer("channel", 0);
    // -1 places the run in the middle of the record once its length is known.
    b.start = -1;
    if (n.has("start")) {
      const Node s = n.at("start");
      if (s.raw().is_string()) {
        if (s.as_string() != "middle") throw ConfigError(s.path(), "expected an index or \"middle\"");
      } else {
        b.start = s.as_int();
        if (b.start < 0) throw ConfigError(s.path(), "must be nonnegative");
      }
    }
    if (b.count < 0) throw ConfigError(n.sub("count"), "must be nonnegative");
    if (b.channel < -1) throw ConfigError(n.sub("channel"), "expected a channel index or -1");
    return b;
  }
  throw ConfigError(n.sub("kind"), "expected gaussian, ball, box or bad_data");
}

void check_set_names(const std::vector<std::string>& names, const std::string& path) {
  static const std::set<std::string> known{"unstructured", "columnwise", "interval", "structured"};
  for (const auto& s : names)
    if (!known.count(s)) throw ConfigError(path, "unknown set '" + s + "'");
  if (names.empty()) throw ConfigError(path, "at least one set is required");
}

std::vector<std::string> split_names(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::string> names_from(const Node& n) {
  std::vector<std::string> out;
  if (n.raw().is_string()) {
    out = split_names(n.as_string());
  } else if (n.raw().is_array()) {
    for (std::size_t i = 0; i < n.raw().size(); ++i)
      out.push_back(Node(n.raw()[i], n.path() + "[" + std::to_string(i) + "]").as_string());
  } else {
    throw ConfigError(n.path(), "expected a list of set names");
  }
  check_set_names(out, n.path());
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Realized cost of applying u open loop from x_start over the problem's horizon.
double open_loop_cost(const LtiSystem& sys, const Vector& x_start, const Vector& u, const DeepcProblem& prob) {
  const Trajectory tr = simulate(sys, x_start, unstack_signal(u, sys.m()));
  return realized_cost(u, tr.stacked_outputs(), prob.r, prob.Q, prob.R);
}

double set_radius(const UncertaintySet& set) {
  if (const auto* s = std::get_if<UnstructuredSet>(&set)) return s->rho;
  if (const auto* s = std::get_if<StructuredSet>(&set)) return s->rho;
  if (const auto* s = std::get_if<ColumnWiseSet>(&set)) return s->rho_A.size() ? s->rho_A.maxCoeff() : 0.0;
  const auto& s = std::get<IntervalSet>(set);
  return s.A_bar.size() ? s.A_bar.maxCoeff() : 0.0;
}

Matrix block_diagonal(const Matrix& block, int copies) {
  const auto r = block.rows(), c = block.cols();
  Matrix out = Matrix::Zero(r * copies, c * copies);
  for (int i = 0; i < copies; ++i) out.block(r * i, c * i, r, c) = block;
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// ---- configuration -------------------------------------------------------------

namespace {

BadDataNoise placed(BadDataNoise b, int T) {
  if (b.start < 0) b.start = std::max(0, (T - b.count) / 2);
  return b;
}

}  // namespace

UncertaintySet SetSpec::resolve(const DeepcProblem& prob) const {
  if (kind == "unstructured") return UnstructuredSet{rho, true};
  if (kind == "structured") return StructuredSet{rho, alpha};
  if (kind == "columnwise") return ColumnWiseSet{broadcast(rho_A, prob.data.columns(), "rho_A"), rho_b, {}};
  if (kind == "interval")
    return interval_bounds_from_channels(prob, broadcast(input_bound, prob.data.m(), "input_bound"),
                                         broadcast(output_bound, prob.data.p(), "output_bound"));
  throw std::invalid_argument("unknown set kind '" + kind + "'");
}

void ExperimentConfig::validate() const {
  const int m = plant.m(), p = plant.p();
  if (T_ini < 1) throw ConfigError("horizon.T_ini", "must be at least 1");
  if (N < 1) throw ConfigError("horizon.N", "must be at least 1");
  if (k < 1 || k > N) throw ConfigError("horizon.k", "must satisfy 1 <= k <= N");
  if (collection.T < T_ini + N) throw ConfigError("collection.T", "shorter than T_ini + N");
  if (collection.excitation < 0.0) throw ConfigError("collection.excitation", "must be nonnegative");
  if (collection.burn_in < 0) throw ConfigError("collection.burn_in", "must be nonnegative");
  if (Q_step.rows() != p || Q_step.cols() != p) throw ConfigError("weights.Q", "wrong size");
  if (R_step.rows() != m || R_step.cols() != m) throw ConfigError("weights.R", "wrong size");
  if (lambda_u < 0.0) throw ConfigError("weights.lambda_u", "must be nonnegative");
  if (lambda_y < 0.0) throw ConfigError("weights.lambda_y", "must be nonnegative");
  if (lambda_g < 0.0) throw ConfigError("weights.lambda_g", "must be nonnegative");
  if (reference.empty()) throw ConfigError("reference", "at least one step is required");
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const std::string path = "reference[" + std::to_string(i) + "]";
    if (reference[i].value.size() != p) throw ConfigError(path + ".value", "expected one entry per output");
    if (i > 0 && reference[i].start <= reference[i - 1].start)
      throw ConfigError(path + ".start", "steps must be in increasing time order");
  }
  if (controller.kind == ControllerKind::Robust && !controller.set)
    throw ConfigError("controller.set", "required for a robust controller");
  if (steps < 1) throw ConfigError("run.steps", "must be at least 1");
  if (x0.size() != plant.n()) throw ConfigError("run.x0", "expected one entry per state");
  if (feedback_noise_std < 0.0) throw ConfigError("run.feedback_noise_std", "must be nonnegative");
  if (study.trials < 1) throw ConfigError("study.trials", "must be at least 1");
  if (study.time < 0) throw ConfigError("study.time", "must be nonnegative");
  if (verify.trials < 1) throw ConfigError("verify.trials", "must be at least 1");
  if (threads < 0) throw ConfigError("threads", "must be nonnegative");
  if (noise) {
    try {
      if (const auto* b = std::get_if<BadDataNoise>(&*noise)) validate_noise(placed(*b, collection.T));
      else validate_noise(*noise);
    } catch (const std::exception& e) {
      throw ConfigError("noise", e.what());
    }
  }
}

Vector ExperimentConfig::reference_at(int t) const {
  Vector r = reference.front().value;
  for (const auto& step : reference)
    if (step.start <= t) r = step.value;
  return r;
}

Vector ExperimentConfig::reference_window(int t) const {
  const int p = plant.p();
  Vector r(p * N);
  for (int i = 0; i < N; ++i) r.segment(p * i, p) = reference_at(t + i);
  return r;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  const Node root(doc, "");
  root.allow_only({"plant", "collection", "predictor", "horizon", "weights", "reference", "controller", "noise", "run",
                   "study", "verify", "seed", "threads", "output_dir", "solver", "description"});
  ExperimentConfig cfg;
  auto resolve_path = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (std::filesystem::path(base_dir) / fp).string();
  };

  const Node plant = root.at("plant");
  try {
    if (plant.raw().is_string()) {
      cfg.plant = LtiSystem::from_json_file(resolve_path(plant.as_string()));
    } else if (plant.has("path")) {
      plant.allow_only({"path"});
      cfg.plant = LtiSystem::from_json_file(resolve_path(plant.at("path").as_string()));
    } else {
      plant.allow_only({"A", "B", "C", "D"});
      cfg.plant = LtiSystem::from_json_text(plant.raw().dump());
    }
  } catch (const DimensionError& e) {
    throw ConfigError("plant", e.what());
  }
  const int m = cfg.plant.m(), p = cfg.plant.p(), n = cfg.plant.n();

  if (root.has("collection")) {
    const Node c = root.at("collection");
    c.allow_only({"T", "excitation", "seed", "burn_in"});
    cfg.collection.T = c.integer("T", cfg.collection.T);
    cfg.collection.excitation = c.number("excitation", cfg.collection.excitation);
    if (c.has("seed")) cfg.collection.seed = c.at("seed").as_seed();
    cfg.collection.burn_in = c.integer("burn_in", 0);
  }
  if (root.has("predictor")) {
    const Node pk = root.at("predictor");
    try {
      cfg.predictor = data_matrix_kind_from_string(pk.as_string());
    } catch (const std::invalid_argument&) {
      throw ConfigError(pk.path(), "expected hankel, page or trajectory");
    }
  }
  if (root.has("horizon")) {
    const Node h = root.at("horizon");
    h.allow_only({"T_ini", "N", "k"});
    cfg.T_ini = h.integer("T_ini", cfg.T_ini);
    cfg.N = h.integer("N", cfg.N);
    cfg.k = h.integer("k", cfg.N);
  } else {
    cfg.k = cfg.N;
  }

  cfg.Q_step = Matrix::Identity(p, p);
  cfg.R_step = Matrix::Identity(m, m);
  if (root.has("weights")) {
    const Node w = root.at("weights");
    w.allow_only({"Q", "R", "lambda_u", "lambda_y", "lambda_g"});
    if (w.has("Q")) cfg.Q_step = weight_from(w.at("Q"), p);
    if (w.has("R")) cfg.R_step = weight_from(w.at("R"), m);
    cfg.lambda_u = w.number("lambda_u", cfg.lambda_u);
    cfg.lambda_y = w.number("lambda_y", cfg.lambda_y);
    cfg.lambda_g = w.number("lambda_g", cfg.lambda_g);
  }

  if (root.has("reference")) {
    const Node r = root.at("reference");
    if (!r.raw().is_array() || r.raw().empty()) throw ConfigError(r.path(), "expected a list of steps");
    if (r.raw().front().is_number()) {
      cfg.reference.push_back({0, r.as_vector()});
    } else {
      for (std::size_t i = 0; i < r.raw().size(); ++i) {
        const Node step(r.raw()[i], r.path() + "[" + std::to_string(i) + "]");
        step.allow_only({"start", "value"});
        cfg.reference.push_back({step.integer("start", 0), broadcast(step.at("value").as_vector(), p, step.sub("value"))});
      }
    }
  } else {
    cfg.reference.push_back({0, Vector::Zero(p)});
  }

  if (root.has("controller")) {
    const Node c = root.at("controller");
    c.allow_only({"kind", "set", "regularizer"});
    const std::string kind = c.string("kind", "nominal");
    if (kind == "nominal") cfg.controller.kind = ControllerKind::Nominal;
    else if (kind == "robust") cfg.controller.kind = ControllerKind::Robust;
    else if (kind == "regularized") cfg.controller.kind = ControllerKind::Regularized;
    else throw ConfigError(c.sub("kind"), "expected nominal, robust or regularized");
    if (c.has("set")) cfg.controller.set = set_from(c.at("set"));
    const std::string reg = c.string("regularizer", "quadratic");
    if (reg == "quadratic") cfg.controller.regularizer = RegularizerMode::Quadratic;
    else if (reg == "one_norm") cfg.controller.regularizer = RegularizerMode::OneNorm;
    else throw ConfigError(c.sub("regularizer"), "expected quadratic or one_norm");
  }

  if (root.has("noise")) cfg.noise = noise_from(root.at("noise"));

  cfg.x0 = Vector::Zero(n);
  if (root.has("run")) {
    const Node r = root.at("run");
    r.allow_only({"steps", "x0", "feedback_noise_std"});
    cfg.steps = r.integer("steps", cfg.steps);
    if (r.has("x0")) cfg.x0 = broadcast(r.at("x0").as_vector(), n, r.sub("x0"));
    cfg.feedback_noise_std = r.number("feedback_noise_std", 0.0);
  }

  if (root.has("study")) {
    const Node s = root.at("study");
    s.allow_only({"sets", "trials", "time", "resample_data", "design_output_bound", "design_input_bound"});
    if (s.has("sets")) cfg.study.sets = names_from(s.at("sets"));
    cfg.study.trials = s.integer("trials", cfg.study.trials);
    cfg.study.time = s.integer("time", 0);
    cfg.study.resample_data = s.boolean("resample_data", false);
    if (s.has("design_output_bound")) cfg.study.design_output_bound = s.at("design_output_bound").as_number();
    if (s.has("design_input_bound")) cfg.study.design_input_bound = s.at("design_input_bound").as_number();
  }

  if (root.has("verify")) {
    const Node v = root.at("verify");
    v.allow_only({"trials", "sets", "noise_radius", "alpha", "disturbance", "reference_std", "lambda_margin"});
    auto& vs = cfg.verify;
    vs.trials = v.integer("trials", vs.trials);
    if (v.has("sets")) vs.sets = names_from(v.at("sets"));
    vs.noise_radius = v.number("noise_radius", vs.noise_radius);
    if (v.has("alpha")) vs.alpha = alpha_from(v.at("alpha"));
    vs.disturbance = v.number("disturbance", vs.disturbance);
    vs.reference_std = v.number("reference_std", vs.reference_std);
    vs.lambda_margin = v.number("lambda_margin", vs.lambda_margin);
    if (vs.noise_radius < 0.0 || vs.disturbance < 0.0 || vs.lambda_margin < 0.0)
      throw ConfigError(v.path(), "radii and margins must be nonnegative");
  }

  if (root.has("seed")) cfg.seed = root.at("seed").as_seed();
  cfg.threads = root.integer("threads", 0);
  cfg.output_dir = resolve_path(root.string("output_dir", "out"));
  if (root.has("solver")) {
    const Node s = root.at("solver");
    s.allow_only({"tolerance", "psd_tolerance", "max_iterations"});
    cfg.solver.tolerance = s.number("tolerance", cfg.solver.tolerance);
    cfg.solver.psd_tolerance = s.number("psd_tolerance", cfg.solver.psd_tolerance);
    cfg.solver.max_iterations = s.integer("max_iterations", cfg.solver.max_iterations);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  return from_json_text(read_file(path), base.empty() ? "." : base);
}

std::vector<std::string> parse_set_names(const std::string& list, const std::string& path) {
  auto names = split_names(list);
  check_set_names(names, path);
  return names;
}

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- single problems ------------------------------------------------------------

CollectedData collect(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CollectOptions opt;
  opt.burn_in = cfg.collection.burn_in;
  opt.predictor_depth = cfg.T_ini + cfg.N;
  if (cfg.noise) {
    if (const auto* b = std::get_if<BadDataNoise>(&*cfg.noise)) opt.noise = placed(*b, cfg.collection.T);
    else opt.noise = *cfg.noise;
  }
  return collect_data(cfg.plant, Vector::Zero(cfg.plant.n()), GaussianExcitation{cfg.collection.excitation},
                      cfg.collection.T, rng, opt);
}

WarmupWindow warmup(const ExperimentConfig& cfg) {
  WarmupWindow w;
  w.window = simulate(cfg.plant, cfg.x0, Matrix::Zero(cfg.plant.m(), cfg.T_ini), &w.x_end);
  return w;
}

DeepcProblem make_problem(const ExperimentConfig& cfg, const DataMatrices& data, const Vector& u_ini,
                          const Vector& y_ini, int t) {
  DeepcProblem prob;
  prob.data = data;
  prob.Q = block_diagonal(cfg.Q_step, cfg.N);
  prob.R = block_diagonal(cfg.R_step, cfg.N);
  prob.lambda_u = cfg.lambda_u;
  prob.lambda_y = cfg.lambda_y;
  prob.r = cfg.reference_window(t);
  prob.u_ini = u_ini;
  prob.y_ini = y_ini;
  prob.validate();
  return prob;
}

namespace {

Reformulation controller_reformulation(const ExperimentConfig& cfg, const DeepcProblem& prob) {
  switch (cfg.controller.kind) {
    case ControllerKind::Nominal: return reform_deepc(prob);
    case ControllerKind::Regularized:
      return reform_regularized(assemble_stacked(prob), cfg.controller.regularizer, cfg.lambda_g,
                                FeasibleSet::from_problem(prob));
    case ControllerKind::Robust: break;
  }
  return reform_robust(prob, cfg.controller.set->resolve(prob));
}

}  // namespace

DeepcSolution solve_controller(const ExperimentConfig& cfg, const DeepcProblem& prob) {
  return solve_reformulation(controller_reformulation(cfg, prob), prob, cfg.solver);
}

ConicProgram controller_program(const ExperimentConfig& cfg, const DeepcProblem& prob) {
  return controller_reformulation(cfg, prob).program;
}

// ---- receding horizon ---------------------------------------------------------------

std::string RunRecord::to_csv() const {
  const int m = static_cast<int>(inputs.rows()), p = static_cast<int>(outputs.rows());
  std::ostringstream os;
  os << "step,t";
  for (int i = 1; i <= m; ++i) os << ",u_" << i;
  for (int i = 1; i <= p; ++i) os << ",y_" << i;
  for (int i = 1; i <= p; ++i) os << ",ym_" << i;
  for (int i = 1; i <= p; ++i) os << ",r_" << i;
  os << ",cost,cycle,status,solve_seconds\n";
  for (std::size_t s = 0; s < step_cost.size(); ++s) {
    const int col = warmup + static_cast<int>(s);
    const CycleRecord& c = cycles[step_cycle[s]];
    os << s << ',' << s;
    for (int i = 0; i < m; ++i) os << ',' << fmt(inputs(i, col));
    for (int i = 0; i < p; ++i) os << ',' << fmt(outputs(i, col));
    for (int i = 0; i < p; ++i) os << ',' << fmt(measured_outputs(i, col));
    for (int i = 0; i < p; ++i) os << ',' << fmt(references(i, s));
    os << ',' << fmt(step_cost[s]) << ',' << step_cycle[s] << ',' << c.status << ',' << fmt(c.solve_seconds) << '\n';
  }
  return os.str();
}

RunRecord run_receding_horizon(const ExperimentConfig& cfg, const DataMatrices& data, std::uint64_t seed) {
  cfg.validate();
  const LtiSystem& sys = cfg.plant;
  const int m = sys.m(), p = sys.p(), Ti = cfg.T_ini;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto measure = [&](const Vector& y) {
    Vector ym = y;
    if (cfg.feedback_noise_std > 0.0)
      for (int i = 0; i < p; ++i) ym(i) += cfg.feedback_noise_std * nd(rng);
    return ym;
  };

  RunRecord rec;
  rec.warmup = Ti;
  const int total = Ti + cfg.steps;
  rec.inputs = Matrix::Zero(m, total);
  rec.outputs = Matrix::Zero(p, total);
  rec.measured_outputs = Matrix::Zero(p, total);
  rec.references = Matrix::Zero(p, cfg.steps);

  Vector x = cfg.x0;
  auto advance = [&](int col, const Vector& u) {
    const Vector y = sys.C() * x + sys.D() * u;
    x = sys.A() * x + sys.B() * u;
    rec.inputs.col(col) = u;
    rec.outputs.col(col) = y;
    rec.measured_outputs.col(col) = measure(y);
  };
  for (int t = 0; t < Ti; ++t) advance(t, Vector::Zero(m));

  for (int t = 0; t < cfg.steps; t += cfg.k) {
    CycleRecord cyc;
    cyc.t = t;
    cyc.u_ini = stack_signal(rec.inputs.middleCols(t, Ti));
    cyc.y_ini = stack_signal(rec.measured_outputs.middleCols(t, Ti));
    const DeepcProblem prob = make_problem(cfg, data, cyc.u_ini, cyc.y_ini, t);
    Vector u_seq = Vector::Zero(m * cfg.N);
    try {
      const DeepcSolution sol = solve_controller(cfg, prob);
      cyc.status = to_string(sol.status);
      cyc.solve_seconds = sol.stats.solve_seconds;
      if (sol.ok()) {
        u_seq = sol.u;
        cyc.c_opt = sol.c_opt;
      }
    } catch (const std::exception& e) {
      cyc.status = "error";
    }
    if (cyc.status != to_string(SolveStatus::Optimal)) {
      ++rec.failures;
      rec.degraded = true;
    }
    const int cycle_index = static_cast<int>(rec.cycles.size());
    rec.cycles.push_back(std::move(cyc));
    for (int s = t; s < std::min(t + cfg.k, cfg.steps); ++s) {
      const Vector u = u_seq.segment(m * (s - t), m);
      advance(Ti + s, u);
      const Vector r = cfg.reference_at(s);
      rec.references.col(s) = r;
      const Vector e = rec.outputs.col(Ti + s) - r;
      rec.step_cost.push_back(u.dot(cfg.R_step * u) + e.dot(cfg.Q_step * e));
      rec.step_cycle.push_back(cycle_index);
    }
  }
  for (double c : rec.step_cost) rec.total_cost += c;
  return rec;
}

namespace {

DataMatrices predictor_from(const ExperimentConfig& cfg, const Trajectory& data) {
  if (cfg.predictor == DataMatrixKind::TrajectoryMatrix)
    throw ConfigError("predictor", "trajectory predictors need separate experiments; use hankel or page");
  try {
    return make_data_matrices(data, cfg.T_ini, cfg.N, cfg.predictor);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("collection.T", e.what());
  }
}

}  // namespace

RunRecord run_receding_horizon(const ExperimentConfig& cfg) {
  const CollectedData data = collect(cfg, cfg.collection.seed);
  return run_receding_horizon(cfg, predictor_from(cfg, data.measured), cfg.seed);
}

// ---- Monte Carlo studies ---------------------------------------------------------------

const SetSummary& StudyResult::summary_for(const std::string& set) const {
  for (const auto& s : summary)
    if (s.set == set) return s;
  throw std::invalid_argument("no summary for set '" + set + "'");
}

std::string StudyResult::trials_csv() const {
  std::ostringstream os;
  os << "trial,seed,set,status,radius,c_opt,c_realized,solve_seconds,assumption_holds\n";
  for (const auto& r : rows)
    os << r.trial << ',' << r.seed << ',' << r.set << ',' << r.status << ',' << fmt(r.radius) << ',' << fmt(r.c_opt)
       << ',' << fmt(r.c_realized) << ',' << fmt(r.solve_seconds) << ',' << (r.assumption_holds ? 1 : 0) << '\n';
  return os.str();
}

std::string StudyResult::summary_json() const {
  json out = json::array();
  for (const auto& s : summary)
    out.push_back({{"set", s.set},
                   {"solved", s.solved},
                   {"failed", s.failed},
                   {"mean_cost", s.mean_cost},
                   {"worst_cost", s.worst_cost},
                   {"mean_solve_seconds", s.mean_solve_seconds},
                   {"assumption_failures", s.assumption_failures}});
  return json{{"sets", out}}.dump(2) + "\n";
}

namespace {

// Per-sample bounds that describe the noise for sizing the sets.
struct NoiseEnvelope {
  enum class Kind { Ball, Box } kind = Kind::Box;
  double radius = 0.0;  // ball
  std::array<double, 4> alpha{};
  double input_bound = 0.0, output_bound = 0.0;  // box
};

NoiseEnvelope envelope(const ExperimentConfig& cfg) {
  NoiseEnvelope env;
  if (cfg.study.design_output_bound || cfg.study.design_input_bound) {
    env.input_bound = cfg.study.design_input_bound.value_or(0.0);
    env.output_bound = cfg.study.design_output_bound.value_or(0.0);
    env.alpha = {env.input_bound > 0 ? 1.0 : 0.0, env.output_bound > 0 ? 1.0 : 0.0, env.input_bound > 0 ? 1.0 : 0.0,
                 env.output_bound > 0 ? 1.0 : 0.0};
    return env;
  }
  if (!cfg.noise) throw ConfigError("noise", "a study needs a noise model or design bounds");
  if (const auto* b = std::get_if<UniformBallNoise>(&*cfg.noise)) {
    if (b->geometry != BallGeometry::Structured) throw ConfigError("noise", "only signal-space balls are supported");
    env.kind = NoiseEnvelope::Kind::Ball;
    env.radius = b->radius;
    env.alpha = target_alpha(b->target);
    return env;
  }
  if (const auto* b = std::get_if<UniformBoxNoise>(&*cfg.noise)) {
    env.alpha = target_alpha(b->target);
    env.input_bound = env.alpha[0] * b->bound;
    env.output_bound = env.alpha[1] * b->bound;
    return env;
  }
  throw ConfigError("study.design_output_bound", "required when the noise model is unbounded");
}

}  // namespace

std::vector<std::pair<std::string, UncertaintySet>> containing_study_sets(const ExperimentConfig& cfg,
                                                                          const DeepcProblem& measured) {
  const NoiseEnvelope env = envelope(cfg);
  const int m = measured.data.m(), p = measured.data.p();
  const bool hankel = measured.data.kind == DataMatrixKind::Hankel;
  const auto& names = cfg.study.sets;
  const bool want_structured = std::find(names.begin(), names.end(), "structured") != names.end();
  if (want_structured && !hankel) throw ConfigError("study.sets", "the structured set needs a hankel predictor");

  std::vector<UncertaintySet> family;  // unstructured, columnwise, interval, structured
  if (env.kind == NoiseEnvelope::Kind::Ball) {
    BoundTrialDesign d;
    d.noise_radius = env.radius;
    d.alpha = env.alpha;
    if (hankel) {
      family = containing_sets(measured, d);
    } else {
      const IntervalSet interval = interval_bounds_from_channels(
          measured, Vector::Constant(m, std::max(d.alpha[0], d.alpha[2]) * env.radius),
          Vector::Constant(p, std::max(d.alpha[1], d.alpha[3]) * env.radius));
      const ColumnWiseSet cw = columnwise_containing(interval);
      family = {UnstructuredSet{unstructured_radius_containing(cw), true}, cw, interval, StructuredSet{}};
    }
  } else {
    const IntervalSet interval = interval_bounds_from_channels(measured, Vector::Constant(m, env.input_bound),
                                                               Vector::Constant(p, env.output_bound));
    const ColumnWiseSet cw = columnwise_containing(interval);
    double rho_u = unstructured_radius_containing(cw);
    StructuredSet structured;
    if (hankel) {
      // The ball through the corners of the box over every perturbed sample.
      const int T = static_cast<int>(measured.data.source_inputs.cols()), Ti = measured.data.T_ini;
      const double sq = env.input_bound * env.input_bound * m * (T + Ti) + env.output_bound * env.output_bound * p * (T + Ti);
      structured.rho = std::sqrt(sq);
      structured.alpha = {1.0, 1.0, 1.0, 1.0};
      for (int b = 0; b < 4; ++b) {
        const double bound = b % 2 == 0 ? env.input_bound : env.output_bound;
        if (bound == 0.0) structured.alpha[b] = 0.0;
      }
      rho_u = std::min(rho_u, unstructured_radius_containing(build_structured_operators(measured, structured.alpha),
                                                             structured.rho));
    }
    family = {UnstructuredSet{rho_u, true}, cw, interval, structured};
  }

  std::vector<std::pair<std::string, UncertaintySet>> out;
  for (const auto& name : names) {
    if (name == "unstructured") out.emplace_back(name, family[0]);
    else if (name == "columnwise") out.emplace_back(name, family[1]);
    else if (name == "interval") out.emplace_back(name, family[2]);
    else out.emplace_back(name, family[3]);
  }
  return out;
}

namespace {

struct Realization {
  DataMatrices perfect;
  Vector perfect_u_ini, perfect_y_ini;
  Vector x_start;
  Trajectory measured;
  Vector u_ini, y_ini;
};

// Perturb the recorded signals and the initial window of one trial.
Realization realize(const ExperimentConfig& cfg, int trial, const Trajectory& base_clean, const WarmupWindow& warm) {
  const int m = cfg.plant.m(), p = cfg.plant.p(), Ti = cfg.T_ini;
  Realization rz;
  Trajectory clean = base_clean;
  if (cfg.study.resample_data) clean = collect(cfg, trial_seed(cfg.collection.seed, trial)).clean;
  const int T = clean.length();
  rz.perfect = predictor_from(cfg, clean);
  rz.perfect_u_ini = warm.window.stacked_inputs();
  rz.perfect_y_ini = warm.window.stacked_outputs();
  rz.x_start = warm.x_end;
  rz.measured = clean;
  rz.u_ini = rz.perfect_u_ini;
  rz.y_ini = rz.perfect_y_ini;
  if (!cfg.noise) return rz;

  std::mt19937_64 rng(trial_seed(cfg.seed, trial));
  const std::array<int, 4> sizes{m * T, p * T, m * Ti, p * Ti};
  std::array<Vector, 4> delta;
  for (int b = 0; b < 4; ++b) delta[b] = Vector::Zero(sizes[b]);
  const NoiseModel& noise = *cfg.noise;

  if (const auto* bad = std::get_if<BadDataNoise>(&noise)) {
    rz.measured = apply_noise(clean, placed(*bad, T), rng);
    return rz;
  }
  if (const auto* ball = std::get_if<UniformBallNoise>(&noise)) {
    const auto alpha = target_alpha(ball->target);
    int dim = 0;
    for (int b = 0; b < 4; ++b)
      if (alpha[b] > 0.0) dim += sizes[b];
    const Vector xi = sample_uniform_ball(dim, ball->radius, rng);
    int at = 0;
    for (int b = 0; b < 4; ++b)
      if (alpha[b] > 0.0) {
        delta[b] = xi.segment(at, sizes[b]);
        at += sizes[b];
      }
  } else if (const auto* box = std::get_if<UniformBoxNoise>(&noise)) {
    const auto alpha = target_alpha(box->target);
    std::uniform_real_distribution<double> ud(-box->bound, box->bound);
    for (int b = 0; b < 4; ++b)
      if (alpha[b] > 0.0)
        for (int i = 0; i < sizes[b]; ++i) delta[b](i) = ud(rng);
  } else {
    const auto& gauss = std::get<GaussianNoise>(noise);
    const auto alpha = target_alpha(gauss.target);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int b = 0; b < 4; ++b) {
      if (alpha[b] == 0.0) continue;
      const int channels = b % 2 == 0 ? m : p;
      const Vector sigma = broadcast(gauss.sigma, channels, "noise.sigma");
      for (int i = 0; i < sizes[b]; ++i) delta[b](i) = sigma(i % channels) * nd(rng);
    }
  }
  rz.measured.inputs += unstack_signal(delta[0], m);
  rz.measured.outputs += unstack_signal(delta[1], p);
  rz.u_ini += delta[2];
  rz.y_ini += delta[3];
  return rz;
}

std::vector<SetSummary> summarize(const std::vector<TrialRow>& rows, const std::vector<std::string>& sets) {
  std::vector<SetSummary> out;
  for (const auto& name : sets) {
    SetSummary s;
    s.set = name;
    double time = 0.0;
    for (const auto& r : rows) {
      if (r.set != name) continue;
      if (!r.assumption_holds) ++s.assumption_failures;
      if (r.status != to_string(SolveStatus::Optimal)) {
        ++s.failed;
        continue;
      }
      ++s.solved;
      s.mean_cost += r.c_realized;
      s.worst_cost = std::max(s.worst_cost, r.c_realized);
      time += r.solve_seconds;
    }
    if (s.solved > 0) {
      s.mean_cost /= s.solved;
      s.mean_solve_seconds = time / s.solved;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

StudyResult run_conservativeness_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const CollectedData base = collect(cfg, cfg.collection.seed);
  const WarmupWindow warm = warmup(cfg);
  const int trials = cfg.study.trials;
  std::vector<std::vector<TrialRow>> per_trial(trials);

  parallel_for(trials, cfg.threads, [&](int i) {
    const Realization rz = realize(cfg, i, base.clean, warm);
    const DeepcProblem prob = make_problem(cfg, predictor_from(cfg, rz.measured), rz.u_ini, rz.y_ini, cfg.study.time);
    const auto sets = containing_study_sets(cfg, prob);
    for (const auto& [name, set] : sets) {
      TrialRow row;
      row.trial = i;
      row.seed = trial_seed(cfg.seed, i);
      row.set = name;
      row.radius = set_radius(set);
      row.assumption_holds = contains_perfect_data(prob, rz.perfect, rz.perfect_u_ini, rz.perfect_y_ini, set);
      const DeepcSolution sol = solve_robust(prob, set, cfg.solver);
      row.status = to_string(sol.status);
      row.solve_seconds = sol.stats.solve_seconds;
      if (sol.ok()) {
        row.c_opt = sol.c_opt;
        row.c_realized = open_loop_cost(cfg.plant, rz.x_start, sol.u, prob);
      }
      per_trial[i].push_back(row);
    }
  });

  StudyResult res;
  for (auto& rows : per_trial)
    for (auto& r : rows) res.rows.push_back(std::move(r));
  res.summary = summarize(res.rows, cfg.study.sets);
  return res;
}

StudyResult run_bad_data_study(const ExperimentConfig& cfg) {
  if (cfg.noise && !std::holds_alternative<BadDataNoise>(*cfg.noise))
    throw ConfigError("noise.kind", "a bad-data study needs bad_data noise");
  return run_conservativeness_study(cfg);
}

// ---- verification runs ------------------------------------------------------------------

BoundTrialDesign bound_design(const ExperimentConfig& cfg) {
  BoundTrialDesign d;
  d.T_ini = cfg.T_ini;
  d.N = cfg.N;
  d.T = cfg.collection.T;
  d.excitation = cfg.collection.excitation;
  d.noise_radius = cfg.verify.noise_radius;
  d.alpha = cfg.verify.alpha;
  d.disturbance = cfg.verify.disturbance;
  d.reference_std = cfg.verify.reference_std;
  d.lambda_margin = cfg.verify.lambda_margin;
  const bool scalar_weights = cfg.Q_step.isApprox(cfg.Q_step(0, 0) * Matrix::Identity(cfg.plant.p(), cfg.plant.p())) &&
                              cfg.R_step.isApprox(cfg.R_step(0, 0) * Matrix::Identity(cfg.plant.m(), cfg.plant.m()));
  if (!scalar_weights) throw ConfigError("weights", "verification trials need scalar Q and R");
  d.q_weight = cfg.Q_step(0, 0);
  d.r_weight = cfg.R_step(0, 0);
  return d;
}

std::vector<BoundReport> run_bound_checks(const ExperimentConfig& cfg) {
  cfg.validate();
  const BoundTrialDesign d = bound_design(cfg);
  const int trials = cfg.verify.trials;
  std::vector<std::vector<BoundReport>> per_trial(trials);
  parallel_for(trials, cfg.threads, [&](int i) {
    const std::uint64_t seed = trial_seed(cfg.seed, i);
    const BoundTrial trial = make_bound_trial(cfg.plant, d, seed);
    const auto family = containing_sets(trial.measured, d);
    for (const auto& name : cfg.verify.sets) {
      const int idx = name == "unstructured" ? 0 : name == "columnwise" ? 1 : name == "interval" ? 2 : 3;
      per_trial[i].push_back(check_realized_cost_bound(cfg.plant, trial, family[idx], cfg.solver));
    }
  });
  std::vector<BoundReport> out;
  for (auto& reps : per_trial)
    for (auto& r : reps) out.push_back(std::move(r));
  return out;
}

// ---- output -----------------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path fp(path);
  if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
  std::ofstream out(fp);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace rdeepc
