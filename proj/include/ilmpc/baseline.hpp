#pragma once

#include <vector>

#include "ilmpc/orchestrator.hpp"

namespace ilmpc {

/// Every state visited in earlier iterations with its discounted cost-to-go,
/// the input applied there and the index of its successor.
class SampledSafeSet {
 public:
  struct Entry {
    State x;
    Input u;
    double cost_to_go = 0.0;
    int iteration = 0;
    int next = -1;  // successor entry, -1 at the end of a trajectory
  };

  /// Appends a trajectory; a state already stored keeps the smaller cost-to-go.
  void add_trajectory(int iteration, const Trajectory& traj, const TaskSpec& task);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int iterations() const { return iterations_; }

  /// Indices of the k entries closest to x (all entries when k <= 0 or k >= size()).
  std::vector<int> nearest(const State& x, int k) const;

 private:
  std::vector<Entry> entries_;
  int iterations_ = 0;
};

struct BaselineSolution {
  OcpSolution solution;
  int candidate = -1;   // chosen entry, -1 on fallback
  int candidates = 0;   // subproblems solved
};

/// Terminal-candidate enumeration: for each of the K stored states nearest
/// to the warm start's predicted terminal state, solve the horizon problem
/// with the terminal state pinned to it and its cost-to-go as terminal cost;
/// keep the cheapest acceptable solution. Falls back to the warm start when
/// every subproblem fails.
BaselineSolution baseline_solve(const TaskSpec& task, const SampledSafeSet& safe_set, const State& x, int t,
                                const WarmStart& warm, const BaselineSettings& settings);

/// Shifted warm start continuing along the chosen candidate's stored trajectory.
WarmStart baseline_warm_start(const BaselineSolution& sol, const SampledSafeSet& safe_set,
                              const TaskSpec& task);

/// One closed-loop episode of the baseline.
IterationReport baseline_iteration(int j, const TaskSpec& task, const SampledSafeSet& safe_set,
                                   const BaselineSettings& settings);

/// The full baseline loop starting from the same initial trajectory.
std::vector<IterationReport> baseline_run(const RunConfig& config, const Trajectory& initial,
                                          int iterations);

}  // namespace ilmpc
