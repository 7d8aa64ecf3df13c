#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ilmpc/ocp.hpp"
#include "ilmpc/trainer.hpp"

namespace ilmpc {

/// Hand-designed open-loop maneuver used as the initial trajectory: a
/// straight run, a left arc, a climb, a right arc twice as long, a descent,
/// a left arc back to zero heading, and a straight run to the goal.
struct ManeuverOptions {
  double speed = 1.12;
  double turn_rate = 1.0;  // rad/s
  int arc_steps = 8;
  int climb_steps = 11;
};

/// Follows the maneuver until the goal abscissa is reached, ending exactly
/// at the goal with a zero input. Throws if the result is unsafe or if the
/// task is not planar with the goal straight ahead of the start.
Trajectory make_initial_maneuver(const TaskSpec& task, const ManeuverOptions& options = {});

/// States placed behind a trajectory: offsets along the heading normal,
/// pointing away from the nearest obstacle (toward +y on ties). Unsafe
/// candidates are dropped.
std::vector<State> behind_points(const TaskSpec& task, const Trajectory& traj,
                                 const std::vector<double>& offsets);

struct InitialDataConfig {
  std::string trajectory_file;  // empty: generate the maneuver
  ManeuverOptions maneuver;
  std::vector<double> behind_offsets{0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
};

struct HeatmapConfig {
  double theta = -0.7853981633974483;
  int resolution = 101;
};

struct BaselineSettings {
  /// Terminal candidates per step; 0 enumerates every stored state.
  int candidates = 10;
  double terminal_tolerance = 1e-4;
  SolverSettings solver;
};

struct RunConfig {
  std::shared_ptr<const TaskSpec> task;
  int iterations = 5;
  TrainerConfig trainer;
  LossWeights weights;
  SolverSettings solver;
  BaselineSettings baseline;
  InitialDataConfig initial;
  HeatmapConfig heatmap;
  std::uint64_t seed = 1;
  std::string output_dir;
  /// Pretrained V0 / pi0 (parameter files); training is skipped when set.
  std::string initial_certificate;
  std::string initial_policy;
  int containment_samples = 10000;
  /// Largest share of initial data points allowed outside {V0 <= c}.
  double bootstrap_outside_tolerance = 0.01;

  void validate() const;
};

struct StepLog {
  int t = 0;
  SolveStatus status = SolveStatus::Converged;
  double objective = 0.0;
  int iterations = 0;
  double kkt = 0.0;
  ConstraintResiduals residuals;
  double delta1 = 0.0;       // clipped value-decrease residual at the predicted terminal state
  double decrease = 0.0;     // gamma J(x_{t+1}) - J(x_t) + l(x_t, u_t), normalized by gamma^t
  bool decrease_flag = false;
  double wall_time_ms = 0.0;
  int candidates = 0;        // baseline only
};

struct IterationReport {
  int iteration = 0;
  std::string method = "proposed";
  Trajectory trajectory;
  DiscountedCost cost;          // discounted performance cost
  double cumulative_cost = 0.0; // undiscounted, states 1..T
  std::vector<StepLog> steps;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double total_solve_ms = 0.0;
  int fallbacks = 0;
  int converged = 0;
  double final_error = 0.0;
  bool reached_goal = false;

  // certificate used at this iteration (V^{j-1}) and its bounds
  double delta1_max = 0.0;  // over predicted terminal states of this iteration
  double delta2 = 0.0;
  double slack = 0.0;       // gamma^N (delta1_max + delta2) / (1 - gamma)
  bool slack_ok = true;

  // certificate trained after this iteration (V^j), when one was trained
  bool trained = false;
  double training_seconds = 0.0;
  double alpha = 0.0;
  double violation_rate = 0.0;
  std::array<double, kNumConditions> condition_rates{};
  double goal_value = 0.0;
  double train_delta1 = 0.0;
  double train_delta2 = 0.0;
  std::optional<double> containment;  // against the previous certificate
  double inside_fraction = 0.0;       // recorded states with V^j <= c
  std::int64_t dataset_states = 0;
};

struct Artifacts;

struct Bootstrap {
  TrajectoryDataset data;
  Trajectory initial;
  Certificate certificate;
  Policy policy;
  IterationReport report;  // iteration 0
};

/// Builds the initial dataset and V0 / pi0, checks that the initial data
/// lie in {V0 <= c} and that the horizon problem is solvable at t = 0.
Bootstrap bootstrap(const RunConfig& config, const Trajectory& initial, Artifacts* artifacts = nullptr);

/// Trajectory to start from: the configured file or the generated maneuver.
Trajectory initial_trajectory(const RunConfig& config);

/// One closed-loop episode from the start state with V^{j-1} and pi^{j-1}.
IterationReport run_iteration(int j, const TaskSpec& task, const Certificate& cert, const Policy& policy,
                              const SolverSettings& settings);

/// Adds V^j training results to a report.
void record_training(IterationReport& report, const TrainResult& result, const TrajectoryDataset& data,
                     const TaskSpec& task, const Certificate* previous, int containment_samples,
                     std::uint64_t seed, double seconds);

/// The full loop. Reports are written to the output directory as they are
/// produced, so a failure leaves the completed iterations on disk.
std::vector<IterationReport> run_all(const RunConfig& config);

struct SummaryRow {
  int iteration = 0;
  std::string method;
  double cost = 0.0;             // discounted
  double cumulative_cost = 0.0;  // undiscounted
  int steps = 0;
  double final_error = 0.0;
  double delta1_max = 0.0;
  double delta2 = 0.0;
  double slack = 0.0;
  int slack_ok = 1;
  double violation_rate = 0.0;
  double goal_value = 0.0;
  std::optional<double> containment;
  int fallbacks = 0;
};

struct TimingRow {
  int iteration = 0;
  std::string method;
  std::optional<double> mean_ms;  // empty at iteration 0
  std::optional<double> total_ms;
  std::optional<double> max_ms;
  double training_seconds = 0.0;
};

struct PerformanceTable {
  std::vector<SummaryRow> summary;
  std::vector<TimingRow> timing;
  std::string text;  // human-readable table
};

PerformanceTable performance_summary(const std::vector<IterationReport>& reports,
                                     const std::vector<IterationReport>& baseline = {});

struct HeatmapCell {
  double z = 0.0;
  double y = 0.0;
  double value = 0.0;
  bool below = false;
};

/// Uniform resolution x resolution grid over the (z, y) domain box at a fixed heading.
std::vector<HeatmapCell> export_heatmap(const Certificate& cert, const TaskSpec& task, double theta,
                                        int resolution);

struct VerifyReport {
  ConditionStats stats;
  ViolationBounds bounds;
};

/// Condition rates on fresh uniform samples (regions from the dataset's
/// alpha shape) plus the violation bounds.
VerifyReport verify_cert(const Certificate& cert, const Policy& policy, const TaskSpec& task,
                         const TrajectoryDataset& data, double alpha, int num_samples, std::uint64_t seed);

}  // namespace ilmpc
