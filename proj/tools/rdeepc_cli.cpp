// Command-line front end for the experiment harness.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 bound-check failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "rdeepc/harness.hpp"

using namespace rdeepc;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kSolverFailure = 3;
constexpr int kCheckFailure = 4;

struct Common {
  std::string config;
  std::string output_dir;
  int threads = -1;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = ExperimentConfig::from_json_file(c.config);
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  if (c.threads >= 0) cfg.threads = c.threads;
  return cfg;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// The problem at time zero: measured predictor data and the warm-up window.
DeepcProblem initial_problem(const ExperimentConfig& cfg) {
  const CollectedData data = collect(cfg, cfg.collection.seed);
  const WarmupWindow warm = warmup(cfg);
  return make_problem(cfg, make_data_matrices(data.measured, cfg.T_ini, cfg.N, cfg.predictor),
                      warm.window.stacked_inputs(), warm.window.stacked_outputs(), 0);
}

int cmd_collect(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const CollectedData data = collect(cfg, cfg.collection.seed);
  write_text_file(out_path(cfg, "data_clean.csv"), data.clean.to_csv());
  write_text_file(out_path(cfg, "data_measured.csv"), data.measured.to_csv());
  write_text_file(out_path(cfg, "data_matrices.json"),
                  make_data_matrices(data.measured, cfg.T_ini, cfg.N, cfg.predictor).to_json_text());
  const RankCheck rc = check_rank_condition(data.clean, cfg.T_ini + cfg.N, cfg.plant.n());
  std::cout << "collected " << data.clean.length() << " samples; rank " << rc.rank << " (needs " << rc.required
            << ")\n";
  if (!data.warning.empty()) std::cerr << "warning: " << data.warning << "\n";
  return kOk;
}

int cmd_solve(const Common& c, bool dump) {
  const ExperimentConfig cfg = load(c);
  const DeepcProblem prob = initial_problem(cfg);
  const DeepcSolution sol = solve_controller(cfg, prob);
  if (dump) write_text_file(out_path(cfg, "program.json"), sol.program.to_json_text(2));
  json out{{"status", to_string(sol.status)},
           {"message", sol.message},
           {"c_opt", sol.c_opt},
           {"value", sol.value},
           {"iterations", sol.stats.iterations},
           {"solve_seconds", sol.stats.solve_seconds}};
  if (sol.ok()) {
    out["g"] = vec(*sol.g);
    out["u"] = vec(sol.u);
    out["y"] = vec(sol.y);
  }
  write_text_file(out_path(cfg, "solution.json"), out.dump(2) + "\n");
  std::cout << "status " << to_string(sol.status) << ", c_opt " << sol.c_opt << "\n";
  return sol.ok() ? kOk : kSolverFailure;
}

int cmd_dump_program(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ConicProgram program = controller_program(cfg, initial_problem(cfg));
  write_text_file(out_path(cfg, "program.json"), program.to_json_text(2));
  std::cout << "wrote " << out_path(cfg, "program.json") << "\n";
  return kOk;
}

int cmd_simulate(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const RunRecord run = run_receding_horizon(cfg);
  write_text_file(out_path(cfg, "runs.csv"), run.to_csv());
  const json summary{{"total_cost", run.total_cost},
                     {"steps", static_cast<int>(run.step_cost.size())},
                     {"cycles", static_cast<int>(run.cycles.size())},
                     {"failures", run.failures},
                     {"degraded", run.degraded}};
  write_text_file(out_path(cfg, "summary.json"), summary.dump(2) + "\n");
  std::cout << "total cost " << run.total_cost << " over " << run.step_cost.size() << " steps";
  if (run.degraded) std::cout << " (degraded: " << run.failures << " failed cycles)";
  std::cout << "\n";
  return run.degraded ? kSolverFailure : kOk;
}

int cmd_compare(const Common& c, const std::string& sets, int trials) {
  ExperimentConfig cfg = load(c);
  if (!sets.empty()) cfg.study.sets = parse_set_names(sets, "--sets");
  if (trials > 0) cfg.study.trials = trials;
  const bool bad = cfg.noise && std::holds_alternative<BadDataNoise>(*cfg.noise);
  const StudyResult res = bad ? run_bad_data_study(cfg) : run_conservativeness_study(cfg);
  write_text_file(out_path(cfg, "trials.csv"), res.trials_csv());
  write_text_file(out_path(cfg, "summary.json"), res.summary_json());
  std::printf("%-14s %8s %8s %14s %14s %12s\n", "set", "solved", "failed", "mean cost", "worst cost", "mean time");
  int failed = 0;
  for (const auto& s : res.summary) {
    std::printf("%-14s %8d %8d %14.6g %14.6g %12.4g\n", s.set.c_str(), s.solved, s.failed, s.mean_cost, s.worst_cost,
                s.mean_solve_seconds);
    failed += s.failed;
  }
  return failed > 0 ? kSolverFailure : kOk;
}

int cmd_verify(const Common& c, int trials) {
  ExperimentConfig cfg = load(c);
  if (trials > 0) cfg.verify.trials = trials;
  const auto reports = run_bound_checks(cfg);
  std::string csv = BoundReport::csv_header() + "\n";
  for (const auto& r : reports) csv += r.csv_row() + "\n";
  write_text_file(out_path(cfg, "verify.csv"), csv);

  std::printf("%-14s %7s %7s %10s %10s %7s\n", "set", "trials", "solved", "precond", "violated", "result");
  bool ok = true;
  for (const auto& name : cfg.verify.sets) {
    int n = 0, solved = 0, pre = 0, viol = 0;
    for (const auto& r : reports) {
      if (r.set_kind != name) continue;
      ++n;
      solved += r.solved;
      pre += r.preconditions_hold();
      viol += r.violated();
    }
    const bool pass = viol == 0 && solved == n;
    ok = ok && pass;
    std::printf("%-14s %7d %7d %10d %10d %7s\n", name.c_str(), n, solved, pre, viol, pass ? "PASS" : "FAIL");
  }
  return ok ? kOk : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust data-enabled predictive control experiments"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output-dir", common.output_dir, "override the configured output directory");
    sub->add_option("-j,--threads", common.threads, "worker threads (0: all cores)");
  };

  auto* collect_cmd = app.add_subcommand("collect", "record excitation data and write the predictor matrices");
  add_common(collect_cmd);
  bool dump = false;
  auto* solve_cmd = app.add_subcommand("solve", "solve the configured controller once");
  add_common(solve_cmd);
  solve_cmd->add_flag("--dump-program", dump, "also write the conic program");
  auto* simulate_cmd = app.add_subcommand("simulate", "closed-loop receding-horizon run");
  add_common(simulate_cmd);
  std::string sets;
  int trials = 0;
  auto* compare_cmd = app.add_subcommand("compare", "Monte Carlo comparison of uncertainty sets");
  add_common(compare_cmd);
  compare_cmd->add_option("--sets", sets, "comma-separated set names");
  compare_cmd->add_option("--trials", trials, "number of trials");
  auto* verify_cmd = app.add_subcommand("verify", "realized-cost bound checks over seeded trials");
  add_common(verify_cmd);
  verify_cmd->add_option("--trials", trials, "number of trials");
  auto* dump_cmd = app.add_subcommand("dump-program", "write the conic program without solving");
  add_common(dump_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*collect_cmd) return cmd_collect(common);
    if (*solve_cmd) return cmd_solve(common, dump);
    if (*simulate_cmd) return cmd_simulate(common);
    if (*compare_cmd) return cmd_compare(common, sets, trials);
    if (*verify_cmd) return cmd_verify(common, trials);
    if (*dump_cmd) return cmd_dump_program(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
