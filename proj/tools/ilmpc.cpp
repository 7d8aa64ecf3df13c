#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ilmpc/baseline.hpp"
#include "ilmpc/errors.hpp"
#include "ilmpc/io.hpp"

using namespace ilmpc;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load(const Common& c) {
  std::vector<std::string> ov = c.overrides;
  if (c.seed) ov.push_back("run.seed=" + std::to_string(*c.seed));
  if (!c.out.empty()) ov.push_back("run.output_dir=\"" + c.out + "\"");
  if (c.config.empty()) return parse_run_config(default_config_text(), ov);
  return load_run_config(c.config, ov);
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "Run configuration (JSON); defaults to the benchmark");
  app->add_option("--set", c.overrides, "Override a config entry, e.g. --set trainer.iterations=500");
  app->add_option("--seed", c.seed, "Override run.seed");
  app->add_option("-o,--out", c.out, "Output directory (overrides run.output_dir)");
}

State parse_state(const std::string& text, int dim) {
  State x(dim);
  std::stringstream ss(text);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= dim) throw ConfigError("state", "too many entries");
    x[i++] = std::stod(item);
  }
  if (i != dim) throw ConfigError("state", "expected " + std::to_string(dim) + " comma-separated values");
  return x;
}

void print_stats(const ConditionStats& s, const ViolationBounds& b) {
  std::cout << std::left << std::setw(18) << "condition" << std::right << std::setw(10) << "checked"
            << std::setw(10) << "violated" << std::setw(12) << "rate" << std::setw(14) << "worst" << "\n";
  for (int c = 0; c < kNumConditions; ++c)
    std::cout << std::left << std::setw(18) << condition_name(c) << std::right << std::setw(10) << s.checked[c]
              << std::setw(10) << s.violations[c] << std::setw(12) << s.rate(c) << std::setw(14) << s.worst[c]
              << "\n";
  std::cout << "overall violation rate " << s.overall_rate() << " (" << s.samples_violating << " of " << s.samples
            << " samples, " << s.pairs_violating << " of " << s.pairs << " pairs)\n";
  std::cout << "V(goal) " << s.goal_value << "\n";
  std::cout << "delta1_max " << b.delta1_max << "  delta2 " << b.delta2;
  if (b.empty_dataset) std::cout << "  (warning: empty dataset, delta2 set to 0)";
  std::cout << "\n";
}

int exit_code_for(const std::exception& e, std::string& kind) {
  if (dynamic_cast<const ConfigError*>(&e)) return kind = "config_error", 2;
  if (dynamic_cast<const SolverFailure*>(&e)) return kind = "solver_failure", 3;
  if (dynamic_cast<const SafetyViolation*>(&e)) return kind = "safety_violation", 4;
  if (dynamic_cast<const TrainingDivergence*>(&e)) return kind = "training_divergence", 5;
  if (dynamic_cast<const DegenerateRegion*>(&e)) return kind = "degenerate_region", 5;
  if (dynamic_cast<const ContractViolation*>(&e)) return kind = "contract_violation", 1;
  return kind = "error", 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative learning MPC with a learned terminal certificate"};
  app.require_subcommand(1);
  std::string error_dir;

  Common run_c;
  auto* run = app.add_subcommand("run", "Full iterative loop; writes all run artifacts");
  add_common(run, run_c);

  Common train_c;
  std::string train_data, init_cert, init_policy;
  auto* train = app.add_subcommand("train-cert", "Train a certificate and policy on a dataset");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Dataset (JSON Lines); default: the configured initial data");
  train->add_option("--init-cert", init_cert, "Warm-start certificate parameters");
  train->add_option("--init-policy", init_policy, "Warm-start policy parameters");

  Common solve_c;
  std::string solve_cert, solve_policy, solve_state;
  int solve_t = 0;
  auto* solve_cmd = app.add_subcommand("solve-ocp", "Solve one horizon problem and print the solution");
  add_common(solve_cmd, solve_c);
  solve_cmd->add_option("--cert", solve_cert, "Certificate parameters")->required();
  solve_cmd->add_option("--policy", solve_policy, "Policy parameters")->required();
  solve_cmd->add_option("--state", solve_state, "Current state, comma separated")->required();
  solve_cmd->add_option("--t", solve_t, "Absolute time step");

  Common verify_c;
  std::string verify_cert_path, verify_policy_path, verify_data;
  int n_test = 10000;
  double verify_alpha = 0.0;
  auto* verify = app.add_subcommand("verify-cert", "Sampled check of the certificate conditions");
  add_common(verify, verify_c);
  verify->add_option("--cert", verify_cert_path, "Certificate parameters")->required();
  verify->add_option("--policy", verify_policy_path, "Policy parameters")->required();
  verify->add_option("--data", verify_data, "Dataset (JSON Lines); default: the configured initial data");
  verify->add_option("--n-test", n_test, "Number of uniform samples");
  verify->add_option("--alpha", verify_alpha, "Alpha for the safe region (0: automatic)");

  Common heat_c;
  std::string heat_cert, heat_out = "heatmap.csv";
  std::optional<double> heat_theta;
  std::optional<int> heat_res;
  auto* heat = app.add_subcommand("export-heatmap", "Certificate values on a (z, y) grid at a fixed heading");
  add_common(heat, heat_c);
  heat->add_option("--cert", heat_cert, "Certificate parameters")->required();
  heat->add_option("--theta", heat_theta, "Heading (default from config)");
  heat->add_option("--resolution", heat_res, "Grid points per axis (default from config)");
  heat->add_option("--file", heat_out, "Output CSV");

  Common base_c;
  std::optional<int> base_iters, base_k;
  auto* base = app.add_subcommand("bench-baseline", "Run the sampled-safe-set baseline");
  add_common(base, base_c);
  base->add_option("--iterations", base_iters, "Iterations (default run.iterations)");
  base->add_option("--candidates", base_k, "Terminal candidates per step (0: all)");

  std::string summary_dir;
  auto* summ = app.add_subcommand("summary", "Print the performance table of a run directory");
  summ->add_option("run_dir", summary_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      error_dir = run_c.out;
      const RunConfig cfg = load(run_c);
      error_dir = cfg.output_dir;
      const auto reports = run_all(cfg);
      std::cout << performance_summary(reports).text;
      return 0;
    }
    if (*train) {
      error_dir = train_c.out;
      const RunConfig cfg = load(train_c);
      error_dir = cfg.output_dir;
      const TaskSpec& task = *cfg.task;
      TrajectoryDataset data;
      if (!train_data.empty()) {
        data = load_dataset(train_data);
      } else {
        const Trajectory init = initial_trajectory(cfg);
        data.add_trajectory(0, init, task);
        data.add_support_points(behind_points(task, init, cfg.initial.behind_offsets), task);
      }
      std::optional<Certificate> pc;
      std::optional<Policy> pp;
      if (!init_cert.empty()) pc = load_certificate(init_cert);
      if (!init_policy.empty()) pp = load_policy(init_policy);
      TrainerConfig tc = cfg.trainer;
      tc.seed = cfg.seed;
      const TrainResult r =
          train_certificate(data, task, tc, cfg.weights, pc ? &*pc : nullptr, pp ? &*pp : nullptr);
      Artifacts art(cfg.output_dir.empty() ? "." : cfg.output_dir);
      save_certificate(art.path("cert.params"), r.certificate, task);
      save_policy(art.path("policy.params"), r.policy);
      art.alpha(0, *r.shape);
      std::cout << "alpha " << r.alpha << ", mined " << r.mined << "\n";
      print_stats(r.final_stats, r.bounds);
      return 0;
    }
    if (*solve_cmd) {
      const RunConfig cfg = load(solve_c);
      const TaskSpec& task = *cfg.task;
      const Certificate cert = load_certificate(solve_cert);
      const Policy policy = load_policy(solve_policy);
      const State x = parse_state(solve_state, task.state_dim());
      const OcpProblem p{&task, &cert, x, solve_t, task.horizon()};
      const OcpSolution s = solve(p, cold_start(policy, task, x, task.horizon()), cfg.solver);
      std::cout << "status " << status_name(s.status) << "\nobjective " << format_double(s.objective)
                << "\niterations " << s.iterations << "\nwall_time_ms " << s.wall_time_ms << "\n";
      std::cout << "residuals dynamics " << s.residuals.dynamics << " obstacle_margin "
                << s.residuals.obstacle_margin << " domain " << s.residuals.domain << " terminal "
                << s.residuals.terminal << " input " << s.residuals.input << "\n";
      for (std::size_t k = 0; k < s.inputs.size(); ++k)
        std::cout << "u[" << k << "] " << s.inputs[k].transpose() << "   x[" << k + 1 << "] "
                  << s.states[k + 1].transpose() << "\n";
      return 0;
    }
    if (*verify) {
      const RunConfig cfg = load(verify_c);
      const TaskSpec& task = *cfg.task;
      TrajectoryDataset data;
      if (!verify_data.empty()) {
        data = load_dataset(verify_data);
      } else {
        const Trajectory init = initial_trajectory(cfg);
        data.add_trajectory(0, init, task);
        data.add_support_points(behind_points(task, init, cfg.initial.behind_offsets), task);
      }
      const VerifyReport rep = verify_cert(load_certificate(verify_cert_path), load_policy(verify_policy_path),
                                           task, data, verify_alpha, n_test, cfg.seed);
      print_stats(rep.stats, rep.bounds);
      return 0;
    }
    if (*heat) {
      const RunConfig cfg = load(heat_c);
      const auto cells = export_heatmap(load_certificate(heat_cert), *cfg.task, heat_theta.value_or(cfg.heatmap.theta),
                                        heat_res.value_or(cfg.heatmap.resolution));
      write_heatmap_csv(heat_out, cells);
      std::size_t below = 0;
      for (const auto& c : cells) below += c.below;
      std::cout << cells.size() << " cells, " << below << " below the level\n";
      return 0;
    }
    if (*base) {
      error_dir = base_c.out;
      RunConfig cfg = load(base_c);
      error_dir = cfg.output_dir;
      if (base_k) cfg.baseline.candidates = *base_k;
      const auto reports = baseline_run(cfg, initial_trajectory(cfg), base_iters.value_or(cfg.iterations));
      if (!cfg.output_dir.empty()) {
        const PerformanceTable t = performance_summary({}, reports);
        write_summary_csv(Artifacts(cfg.output_dir).path("baseline_summary.csv"), t.summary);
        write_timing_csv(Artifacts(cfg.output_dir).path("baseline_timing.csv"), t.timing);
      }
      std::cout << performance_summary({}, reports).text;
      return 0;
    }
    if (*summ) {
      const Artifacts art(summary_dir);
      const auto rows = read_summary_csv(art.path("summary.csv"));
      std::vector<TimingRow> timing;
      if (std::filesystem::exists(art.path("timing.csv"))) timing = read_timing_csv(art.path("timing.csv"));
      std::cout << std::left << std::setw(6) << "iter" << std::setw(10) << "method" << std::right << std::setw(12)
                << "cost" << std::setw(12) << "disc. cost" << std::setw(12) << "ms/step" << std::setw(12)
                << "viol. rate" << std::setw(10) << "slack ok" << "\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::string ms = "--";
        if (i < timing.size() && timing[i].mean_ms) {
          std::ostringstream os;
          os << std::fixed << std::setprecision(2) << *timing[i].mean_ms;
          ms = os.str();
        }
        std::cout << std::left << std::setw(6) << r.iteration << std::setw(10) << r.method << std::right
                  << std::fixed << std::setprecision(3) << std::setw(12) << r.cumulative_cost << std::setprecision(4)
                  << std::setw(12) << r.cost << std::setw(12) << ms << std::setprecision(4) << std::setw(12)
                  << r.violation_rate << std::setw(10) << (r.slack_ok ? "yes" : "no") << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::string kind;
    const int rc = exit_code_for(e, kind);
    std::cerr << "error (" << kind << "): " << e.what() << "\n";
    if (!error_dir.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(error_dir, ec);
      std::ofstream log(std::filesystem::path(error_dir) / "error.log");
      log << "kind: " << kind << "\nexit_code: " << rc << "\nmessage: " << e.what() << "\n";
    }
    return rc;
  }
  return 0;
}
