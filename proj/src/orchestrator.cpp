#include "ilmpc/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ilmpc/errors.hpp"
#include "ilmpc/io.hpp"

namespace ilmpc {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Input make_input(double v, double omega) {
  Input u(2);
  u << v, omega;
  return u;
}

}  // namespace

// ---- initial data ----------------------------------------------------------

Trajectory make_initial_maneuver(const TaskSpec& task, const ManeuverOptions& o) {
  if (task.state_dim() != 3 || task.input_dim() != 2)
    throw ContractViolation("make_initial_maneuver: needs a planar car (3 states, 2 inputs)");
  const State& start = task.start();
  const State& goal = task.goal();
  if (!(goal[0] > start[0]) || start[1] != goal[1] || start[2] != 0.0 || goal[2] != 0.0)
    throw ContractViolation("make_initial_maneuver: goal must lie straight ahead of the start");
  const double dt = task.time_step();
  if (!(o.speed > 0.0) || o.speed > task.input_box().upper[0])
    throw ConfigError("initial_data.speed", "must lie in (0, v_max]");
  if (std::abs(o.turn_rate) > task.input_box().upper[1])
    throw ConfigError("initial_data.turn_rate", "exceeds the turn-rate bound");
  if (o.arc_steps < 1 || o.climb_steps < 0)
    throw ConfigError("initial_data.arc_steps", "arc needs at least one step");

  std::vector<Input> middle;
  for (int i = 0; i < o.arc_steps; ++i) middle.push_back(make_input(o.speed, o.turn_rate));
  for (int i = 0; i < o.climb_steps; ++i) middle.push_back(make_input(o.speed, 0.0));
  const std::size_t apex = middle.size() + o.arc_steps;
  for (int i = 0; i < 2 * o.arc_steps; ++i) middle.push_back(make_input(o.speed, -o.turn_rate));
  for (int i = 0; i < o.climb_steps; ++i) middle.push_back(make_input(o.speed, 0.0));
  for (int i = 0; i < o.arc_steps; ++i) middle.push_back(make_input(o.speed, o.turn_rate));

  // centre the apex of the detour over the first obstacle (or mid-way)
  State x = State::Zero(3);
  for (std::size_t i = 0; i < apex; ++i) x = task.dynamics().step(x, middle[i]);
  const double centre = task.obstacles().empty() ? 0.5 * (start[0] + goal[0]) : task.obstacles()[0].z;
  const double lead = (centre - start[0] - x[0]) / (o.speed * dt);
  const int lead_steps = std::max(0, static_cast<int>(std::lround(lead)));

  Trajectory traj;
  x = start;
  auto push = [&](const Input& u) {
    traj.states.push_back(x);
    traj.inputs.push_back(u);
    x = task.dynamics().step(x, u);
  };
  for (int i = 0; i < lead_steps; ++i) push(make_input(o.speed, 0.0));
  for (const auto& u : middle) push(u);
  const double vmax = task.input_box().upper[0];
  while (goal[0] - x[0] > 1e-12) {
    const double v = std::min(o.speed, (goal[0] - x[0]) / dt);
    if (v > vmax) throw ContractViolation("make_initial_maneuver: final step exceeds the speed bound");
    push(make_input(v, 0.0));
    if (traj.size() > 100000) throw ContractViolation("make_initial_maneuver: does not reach the goal");
  }
  if ((x - goal).norm() > 1e-9)
    throw ContractViolation("make_initial_maneuver: maneuver does not end at the goal");
  x = goal;
  traj.states.push_back(x);
  traj.inputs.push_back(Input::Zero(2));
  for (std::size_t t = 0; t < traj.size(); ++t)
    if (in_unsafe(task, traj.states[t])) {
      std::ostringstream os;
      os << "make_initial_maneuver: state " << t << " is unsafe";
      throw SafetyViolation(os.str());
    }
  return traj;
}

std::vector<State> behind_points(const TaskSpec& task, const Trajectory& traj,
                                 const std::vector<double>& offsets) {
  std::vector<State> out;
  for (const auto& x : traj.states) {
    Eigen::Vector2d n(-std::sin(x[2]), std::cos(x[2]));
    double side = 0.0;
    if (!task.obstacles().empty()) {
      const Disc* nearest = nullptr;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& d : task.obstacles()) {
        const double dist = std::hypot(x[0] - d.z, x[1] - d.y);
        if (dist < best) {
          best = dist;
          nearest = &d;
        }
      }
      side = n.dot(Eigen::Vector2d(x[0] - nearest->z, x[1] - nearest->y));
    }
    double sign = side > 1e-9 ? 1.0 : (side < -1e-9 ? -1.0 : (n[1] < 0.0 ? -1.0 : 1.0));
    for (double off : offsets) {
      State p = x;
      p[0] += sign * off * n[0];
      p[1] += sign * off * n[1];
      if (!in_unsafe(task, p)) out.push_back(p);
    }
  }
  return out;
}

Trajectory initial_trajectory(const RunConfig& config) {
  if (!config.initial.trajectory_file.empty()) return load_trajectory(config.initial.trajectory_file);
  return make_initial_maneuver(*config.task, config.initial.maneuver);
}

void RunConfig::validate() const {
  if (!task) throw ConfigError("task", "missing");
  if (iterations < 1) throw ConfigError("run.iterations", "must be >= 1");
  if (task->max_steps() < task->horizon()) throw ConfigError("task.max_steps", "must be >= horizon");
  if (trainer.validation_interval < 1) throw ConfigError("trainer.k_val", "must be >= 1");
  if (trainer.validation_samples < 1) throw ConfigError("trainer.n_test", "must be >= 1");
  if (trainer.iterations < 0) throw ConfigError("trainer.iterations", "must be >= 0");
  for (double a : {weights.a1, weights.a2, weights.a3, weights.a4, weights.a5})
    if (!(a > 0.0)) throw ConfigError("loss.a", "weights must be positive");
  if (containment_samples < 1) throw ConfigError("run.containment_samples", "must be >= 1");
  if (initial_certificate.empty() != initial_policy.empty())
    throw ConfigError("run.initial_policy", "certificate and policy files must be given together");
}

// ---- iterations ------------------------------------------------------------

namespace {

void fill_costs(IterationReport& r, const TaskSpec& task) {
  r.cost = discounted_cost(task, r.trajectory);
  r.cumulative_cost = cumulative_cost(task, r.trajectory);
  r.final_error = (r.trajectory.states.back() - task.goal()).norm();
  r.reached_goal = r.final_error <= task.goal_tolerance();
}

void fill_timing(IterationReport& r) {
  r.mean_solve_ms = r.max_solve_ms = r.total_solve_ms = 0.0;
  for (const auto& s : r.steps) {
    r.total_solve_ms += s.wall_time_ms;
    r.max_solve_ms = std::max(r.max_solve_ms, s.wall_time_ms);
  }
  if (!r.steps.empty()) r.mean_solve_ms = r.total_solve_ms / static_cast<double>(r.steps.size());
}

}  // namespace

IterationReport run_iteration(int j, const TaskSpec& task, const Certificate& cert, const Policy& policy,
                              const SolverSettings& settings) {
  IterationReport rep;
  rep.iteration = j;
  const int N = task.horizon();
  const double gamma = task.discount();
  State x = task.start();
  WarmStart warm = cold_start(policy, task, x, N);
  double prev_objective = 0.0;
  double prev_cost = 0.0;

  for (int t = 0; t < task.max_steps(); ++t) {
    if ((x - task.goal()).norm() <= task.goal_tolerance()) break;
    OcpProblem problem{&task, &cert, x, t, N};
    MpcStep step = mpc_step(problem, warm, policy, settings);
    const OcpSolution& sol = step.solution;

    double objective = sol.objective;
    if (!settings.normalize_discount) objective /= std::pow(gamma, t);
    if (!rep.steps.empty()) {
      StepLog& last = rep.steps.back();
      last.decrease = gamma * objective - prev_objective + prev_cost;
      last.decrease_flag =
          last.decrease > 1e-9 && last.delta1 < std::pow(gamma, -N) * prev_cost;
    }

    StepLog log;
    log.t = t;
    log.status = sol.status;
    log.objective = sol.objective;
    log.iterations = sol.iterations;
    log.kkt = sol.kkt_residual;
    log.residuals = sol.residuals;
    log.delta1 = std::max(0.0, value_decrease_residual(cert, policy, task, sol.states.back()));
    log.wall_time_ms = sol.wall_time_ms;
    rep.steps.push_back(log);
    if (sol.status == SolveStatus::InfeasibleFallback) ++rep.fallbacks;
    if (sol.status == SolveStatus::Converged) ++rep.converged;
    rep.delta1_max = std::max(rep.delta1_max, log.delta1);

    rep.trajectory.states.push_back(x);
    rep.trajectory.inputs.push_back(step.applied);
    prev_objective = objective;
    prev_cost = task.stage_cost().value(x, step.applied);

    x = task.dynamics().step(x, step.applied);
    if (in_unsafe(task, x)) {
      std::ostringstream os;
      os << "iteration " << j << ": state at t = " << t + 1 << " is unsafe: [" << x.transpose()
         << "]\ntrace:";
      for (std::size_t k = 0; k < rep.trajectory.size(); ++k)
        os << "\n  t=" << k << " x=[" << rep.trajectory.states[k].transpose() << "] u=["
           << rep.trajectory.inputs[k].transpose() << "]";
      throw SafetyViolation(os.str());
    }
    warm = std::move(step.next);
  }
  rep.trajectory.states.push_back(x);
  rep.trajectory.inputs.push_back(Input::Zero(task.input_dim()));
  fill_costs(rep, task);
  fill_timing(rep);
  return rep;
}

void record_training(IterationReport& report, const TrainResult& r, const TrajectoryDataset& data,
                     const TaskSpec& task, const Certificate* previous, int containment_samples,
                     std::uint64_t seed, double seconds) {
  report.trained = true;
  report.training_seconds = seconds;
  report.alpha = r.alpha;
  report.violation_rate = r.final_stats.overall_rate();
  for (int c = 0; c < kNumConditions; ++c) report.condition_rates[c] = r.final_stats.rate(c);
  report.goal_value = r.certificate.value(task.goal());
  report.train_delta1 = r.bounds.delta1_max;
  report.train_delta2 = r.bounds.delta2;
  report.dataset_states = static_cast<std::int64_t>(data.num_states());
  if (previous) {
    Rng rng(seed);
    const Mat samples = sample_domain(task, containment_samples, rng);
    report.containment = check_containment(*previous, r.certificate, task.level(), samples).fraction();
  }
  std::int64_t inside = 0, total = 0;
  for (const auto& rec : data.trajectories())
    for (const auto& x : rec.states) {
      ++total;
      if (r.certificate.value(x) <= task.level()) ++inside;
    }
  report.inside_fraction = total ? static_cast<double>(inside) / static_cast<double>(total) : 1.0;
}

Bootstrap bootstrap(const RunConfig& config, const Trajectory& initial, Artifacts* art) {
  const TaskSpec& task = *config.task;
  if (initial.states.empty()) throw ContractViolation("bootstrap: empty initial data");
  Bootstrap b;
  b.initial = initial;
  b.data.add_trajectory(0, initial, task);
  if (!config.initial.behind_offsets.empty())
    b.data.add_support_points(behind_points(task, initial, config.initial.behind_offsets), task);

  b.report.iteration = 0;
  b.report.trajectory = initial;
  fill_costs(b.report, task);

  Rng seeds(config.seed);
  if (!config.initial_certificate.empty()) {
    b.certificate = load_certificate(config.initial_certificate);
    b.policy = load_policy(config.initial_policy);
    if (b.certificate.state_dim() != task.state_dim() || b.policy.net().input_size() != task.state_dim())
      throw ConfigError("run.initial_certificate", "network dimension does not match the task");
    b.report.goal_value = b.certificate.value(task.goal());
  } else {
    TrainerConfig tc = config.trainer;
    tc.seed = seeds.next();
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train_certificate(b.data, task, tc, config.weights);
    record_training(b.report, r, b.data, task, nullptr, config.containment_samples, seeds.next(),
                    seconds_since(t0));
    if (art) art->alpha(0, *r.shape);
    b.certificate = std::move(r.certificate);
    b.policy = std::move(r.policy);
  }

  std::size_t outside = 0;
  for (const auto& x : initial.states)
    if (b.certificate.value(x) > task.level()) ++outside;
  const double frac = static_cast<double>(outside) / static_cast<double>(initial.size());
  if (frac > config.bootstrap_outside_tolerance) {
    std::ostringstream os;
    os << "bootstrap: " << outside << " of " << initial.size()
       << " initial states lie outside the certified region of V0";
    throw TrainingDivergence(os.str());
  }

  const WarmStart cold = cold_start(b.policy, task, task.start(), task.horizon());
  try {
    solve(OcpProblem{&task, &b.certificate, task.start(), 0, task.horizon()}, cold, config.solver);
  } catch (const SolverFailure& e) {
    throw SolverFailure(std::string("bootstrap: horizon problem at t = 0 is infeasible under V0: ") +
                        e.what());
  }
  if (art) {
    art->networks(0, b.certificate, b.policy, task);
    art->heatmap(0, b.certificate, task, config.heatmap);
  }
  return b;
}

std::vector<IterationReport> run_all(const RunConfig& config) {
  config.validate();
  const TaskSpec& task = *config.task;
  Artifacts art(config.output_dir);
  Bootstrap b = bootstrap(config, initial_trajectory(config), &art);
  std::vector<IterationReport> reports{b.report};
  art.dataset(b.data);
  art.iteration(b.report);
  art.summary(reports);

  Certificate cert = std::move(b.certificate);
  Policy policy = std::move(b.policy);
  TrajectoryDataset data = std::move(b.data);
  double delta2_prev = reports.front().train_delta2;
  Rng seeds(config.seed);
  seeds.next();
  seeds.next();

  const double gamma = task.discount();
  const double tail = std::pow(gamma, task.horizon()) / (1.0 - gamma);
  for (int j = 1; j <= config.iterations; ++j) {
    IterationReport rep = run_iteration(j, task, cert, policy, config.solver);
    rep.delta2 = delta2_prev;
    rep.slack = tail * (rep.delta1_max + rep.delta2);
    rep.slack_ok = rep.cost.value <= reports.back().cost.value + rep.slack + 1e-12;
    data.add_trajectory(j, rep.trajectory, task);

    if (j < config.iterations) {
      TrainerConfig tc = config.trainer;
      tc.seed = seeds.next();
      const std::uint64_t containment_seed = seeds.next();
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult r = train_certificate(data, task, tc, config.weights, &cert, &policy,
                                        reports.back().alpha);
      record_training(rep, r, data, task, &cert, config.containment_samples, containment_seed,
                      seconds_since(t0));
      cert = std::move(r.certificate);
      policy = std::move(r.policy);
      delta2_prev = rep.train_delta2;
      art.networks(j, cert, policy, task);
      art.heatmap(j, cert, task, config.heatmap);
      art.alpha(j, *r.shape);
    }
    art.dataset(data);
    art.iteration(rep);
    reports.push_back(std::move(rep));
    art.summary(reports);
  }
  return reports;
}

// ---- reporting -------------------------------------------------------------

namespace {

SummaryRow summary_row(const IterationReport& r) {
  SummaryRow s;
  s.iteration = r.iteration;
  s.method = r.method;
  s.cost = r.cost.value;
  s.cumulative_cost = r.cumulative_cost;
  s.steps = static_cast<int>(r.steps.size());
  s.final_error = r.final_error;
  s.delta1_max = r.delta1_max;
  s.delta2 = r.delta2;
  s.slack = r.slack;
  s.slack_ok = r.slack_ok ? 1 : 0;
  s.violation_rate = r.violation_rate;
  s.goal_value = r.goal_value;
  s.containment = r.containment;
  s.fallbacks = r.fallbacks;
  return s;
}

TimingRow timing_row(const IterationReport& r) {
  TimingRow t;
  t.iteration = r.iteration;
  t.method = r.method;
  if (r.iteration > 0) {
    t.mean_ms = r.mean_solve_ms;
    t.total_ms = r.total_solve_ms;
    t.max_ms = r.max_solve_ms;
  }
  t.training_seconds = r.training_seconds;
  return t;
}

std::string cell(const std::optional<double>& v, int precision) {
  if (!v) return "--";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

}  // namespace

PerformanceTable performance_summary(const std::vector<IterationReport>& reports,
                                     const std::vector<IterationReport>& baseline) {
  PerformanceTable t;
  for (const auto& r : reports) {
    t.summary.push_back(summary_row(r));
    t.timing.push_back(timing_row(r));
  }
  for (const auto& r : baseline) {
    t.summary.push_back(summary_row(r));
    t.timing.push_back(timing_row(r));
  }

  std::ostringstream os;
  auto header = [&](const std::string& name) {
    os << name << "\n";
    os << std::left << std::setw(6) << "iter" << std::right << std::setw(12) << "cost" << std::setw(12)
       << "disc. cost" << std::setw(14) << "ms/step" << std::setw(14) << "online s" << "\n";
  };
  auto rows = [&](const std::vector<IterationReport>& rs) {
    for (const auto& r : rs) {
      const TimingRow tr = timing_row(r);
      std::optional<double> total;
      if (tr.total_ms) total = *tr.total_ms / 1000.0;
      os << std::left << std::setw(6) << r.iteration << std::right << std::setw(12)
         << cell(r.cumulative_cost, 3) << std::setw(12) << cell(r.cost.value, 4) << std::setw(14)
         << cell(tr.mean_ms, 2) << std::setw(14) << cell(total, 2) << "\n";
    }
  };
  header("proposed");
  rows(reports);
  if (!baseline.empty()) {
    os << "\n";
    header("baseline");
    rows(baseline);
  }
  t.text = os.str();
  return t;
}

std::vector<HeatmapCell> export_heatmap(const Certificate& cert, const TaskSpec& task, double theta,
                                        int resolution) {
  if (resolution < 1) throw ConfigError("heatmap.resolution", "must be >= 1");
  if (task.state_dim() != 3) throw ContractViolation("export_heatmap: needs (z, y, theta) states");
  const Box& box = task.domain_box();
  auto coord = [&](int d, int i) {
    if (resolution == 1) return 0.5 * (box.lower[d] + box.upper[d]);
    return box.lower[d] + (box.upper[d] - box.lower[d]) * i / (resolution - 1);
  };
  Mat X(3, static_cast<Eigen::Index>(resolution) * resolution);
  Eigen::Index k = 0;
  for (int iy = 0; iy < resolution; ++iy)
    for (int iz = 0; iz < resolution; ++iz, ++k) X.col(k) << coord(0, iz), coord(1, iy), theta;
  const Vec V = cert.values(X);
  std::vector<HeatmapCell> out(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    out[j] = {X(0, j), X(1, j), V[j], V[j] <= cert.level()};
  return out;
}

VerifyReport verify_cert(const Certificate& cert, const Policy& policy, const TaskSpec& task,
                         const TrajectoryDataset& data, double alpha, int num_samples, std::uint64_t seed) {
  if (data.empty()) throw ContractViolation("verify_cert: empty dataset");
  SampleRegions regions;
  regions.alpha = alpha > 0.0 ? alpha : choose_alpha(data, 1.0, 0.0);
  regions.shape = std::make_shared<AlphaShape>(
      AlphaShape::build(planar_projection(data.all_states()), regions.alpha));
  const DataPairs pairs = data.pairs();
  Rng rng(seed);
  Rng bounds_rng = rng.split();
  VerifyReport rep;
  rep.stats = validate_and_mine(cert, policy, task, regions, num_samples, rng, &pairs).stats;
  rep.bounds = estimate_violation_bounds(cert, policy, pairs, task, num_samples, bounds_rng);
  return rep;
}

}  // namespace ilmpc
