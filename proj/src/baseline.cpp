#include "ilmpc/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include "ilmpc/errors.hpp"
#include "ilmpc/io.hpp"

namespace ilmpc {

void SampledSafeSet::add_trajectory(int iteration, const Trajectory& traj, const TaskSpec& task) {
  if (traj.states.empty()) throw ContractViolation("SampledSafeSet: empty trajectory");
  const auto tails = discounted_tails(task, traj);
  const int base = static_cast<int>(entries_.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    if (in_unsafe(task, traj.states[t])) throw SafetyViolation("SampledSafeSet: unsafe state");
    Entry e;
    e.x = traj.states[t];
    e.u = traj.inputs[t];
    e.cost_to_go = tails[t];
    e.iteration = iteration;
    e.next = t + 1 < traj.size() ? base + static_cast<int>(t) + 1 : -1;
    entries_.push_back(std::move(e));
  }
  // duplicates share the cheapest recorded suffix value
  for (int i = base; i < static_cast<int>(entries_.size()); ++i)
    for (int k = 0; k < base; ++k)
      if (entries_[k].x == entries_[i].x) {
        const double best = std::min(entries_[k].cost_to_go, entries_[i].cost_to_go);
        entries_[k].cost_to_go = entries_[i].cost_to_go = best;
      }
  iterations_ = std::max(iterations_, iteration + 1);
}

std::vector<int> SampledSafeSet::nearest(const State& x, int k) const {
  std::vector<int> idx(entries_.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (k <= 0 || k >= static_cast<int>(idx.size())) return idx;
  std::vector<double> d(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) d[i] = (entries_[i].x - x).squaredNorm();
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    return d[a] < d[b] || (d[a] == d[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

BaselineSolution baseline_solve(const TaskSpec& task, const SampledSafeSet& safe_set, const State& x, int t,
                                const WarmStart& warm, const BaselineSettings& s) {
  if (safe_set.empty()) throw ContractViolation("baseline_solve: empty safe set");
  const auto t0 = std::chrono::steady_clock::now();
  // predicted terminal state of the warm start
  State xn = x;
  for (const auto& u : warm.inputs) xn = task.dynamics().step(xn, u);

  BaselineSolution best;
  const auto cands = safe_set.nearest(xn, s.candidates);
  for (int c : cands) {
    const auto& e = safe_set.entries()[c];
    const TerminalSpec term = TerminalSpec::pinned_to(e.x, e.cost_to_go);
    OcpSolution sol = solve_terminal(task, term, x, t, warm, s.solver, s.terminal_tolerance, false);
    ++best.candidates;
    if (sol.status == SolveStatus::InfeasibleFallback) continue;
    if (best.candidate < 0 || sol.objective < best.solution.objective) {
      best.solution = std::move(sol);
      best.candidate = c;
    }
  }
  if (best.candidate < 0) {
    // every subproblem failed: keep the shifted previous plan
    best.solution = evaluate_plan(task, TerminalSpec::pinned_to(xn, 0.0), x, t, warm.inputs, s.solver);
    best.solution.status = SolveStatus::InfeasibleFallback;
  }
  best.solution.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

WarmStart baseline_warm_start(const BaselineSolution& sol, const SampledSafeSet& safe_set,
                              const TaskSpec& task) {
  WarmStart w;
  w.origin = WarmStart::Origin::Previous;
  const auto& in = sol.solution.inputs;
  w.inputs.assign(in.begin() + 1, in.end());
  if (sol.candidate >= 0)
    w.inputs.push_back(safe_set.entries()[sol.candidate].u);
  else
    w.inputs.push_back(Input::Zero(task.input_dim()));
  return w;
}

namespace {

// First N inputs of the stored trajectory starting at the start state,
// padded with the inputs that keep it at the goal.
WarmStart initial_warm_start(const TaskSpec& task, const SampledSafeSet& set) {
  int k = -1;
  for (int i = 0; i < static_cast<int>(set.size()); ++i)
    if (set.entries()[i].x == task.start()) {
      k = i;
      break;
    }
  if (k < 0) throw ContractViolation("baseline: start state is not in the safe set");
  WarmStart w;
  for (int i = 0; i < task.horizon(); ++i) {
    const auto& e = set.entries()[k];
    w.inputs.push_back(e.u);
    if (e.next >= 0) k = e.next;
  }
  return w;
}

}  // namespace

IterationReport baseline_iteration(int j, const TaskSpec& task, const SampledSafeSet& safe_set,
                                   const BaselineSettings& s) {
  IterationReport rep;
  rep.iteration = j;
  rep.method = "baseline";
  State x = task.start();
  WarmStart warm = initial_warm_start(task, safe_set);
  for (int t = 0; t < task.max_steps(); ++t) {
    if ((x - task.goal()).norm() <= task.goal_tolerance()) break;
    BaselineSolution sol = baseline_solve(task, safe_set, x, t, warm, s);
    StepLog log;
    log.t = t;
    log.status = sol.solution.status;
    log.objective = sol.solution.objective;
    log.iterations = sol.solution.iterations;
    log.kkt = sol.solution.kkt_residual;
    log.residuals = sol.solution.residuals;
    log.wall_time_ms = sol.solution.wall_time_ms;
    log.candidates = sol.candidates;
    rep.steps.push_back(log);
    if (sol.solution.status == SolveStatus::InfeasibleFallback) ++rep.fallbacks;
    if (sol.solution.status == SolveStatus::Converged) ++rep.converged;

    const Input u = sol.solution.inputs.front();
    rep.trajectory.states.push_back(x);
    rep.trajectory.inputs.push_back(u);
    x = task.dynamics().step(x, u);
    if (in_unsafe(task, x)) {
      std::ostringstream os;
      os << "baseline iteration " << j << ": state at t = " << t + 1 << " is unsafe: [" << x.transpose()
         << "]";
      throw SafetyViolation(os.str());
    }
    warm = baseline_warm_start(sol, safe_set, task);
  }
  rep.trajectory.states.push_back(x);
  rep.trajectory.inputs.push_back(Input::Zero(task.input_dim()));
  rep.cost = discounted_cost(task, rep.trajectory);
  rep.cumulative_cost = cumulative_cost(task, rep.trajectory);
  rep.final_error = (x - task.goal()).norm();
  rep.reached_goal = rep.final_error <= task.goal_tolerance();
  for (const auto& st : rep.steps) {
    rep.total_solve_ms += st.wall_time_ms;
    rep.max_solve_ms = std::max(rep.max_solve_ms, st.wall_time_ms);
  }
  if (!rep.steps.empty()) rep.mean_solve_ms = rep.total_solve_ms / static_cast<double>(rep.steps.size());
  return rep;
}

std::vector<IterationReport> baseline_run(const RunConfig& config, const Trajectory& initial,
                                          int iterations) {
  config.validate();
  const TaskSpec& task = *config.task;
  SampledSafeSet set;
  set.add_trajectory(0, initial, task);
  std::vector<IterationReport> reports;
  IterationReport r0;
  r0.method = "baseline";
  r0.trajectory = initial;
  r0.cost = discounted_cost(task, initial);
  r0.cumulative_cost = cumulative_cost(task, initial);
  r0.final_error = (initial.states.back() - task.goal()).norm();
  r0.reached_goal = r0.final_error <= task.goal_tolerance();
  reports.push_back(r0);
  Artifacts art(config.output_dir);
  for (int j = 1; j <= iterations; ++j) {
    IterationReport rep = baseline_iteration(j, task, set, config.baseline);
    set.add_trajectory(j, rep.trajectory, task);
    art.iteration(rep);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace ilmpc
