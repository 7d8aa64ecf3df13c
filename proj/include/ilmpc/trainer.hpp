#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ilmpc/alpha_shape.hpp"
#include "ilmpc/neural.hpp"
#include "ilmpc/random.hpp"
#include "ilmpc/task.hpp"

namespace ilmpc {

/// One recorded trajectory with its discounted cost-to-go tails,
/// cost_to_go[t] = sum_{i >= t} gamma^(i - t) l(x_i, u_i).
struct TrajectoryRecord {
  int iteration = 0;
  std::vector<State> states;
  std::vector<Input> inputs;
  std::vector<double> cost_to_go;
};

/// Consecutive (x_k, u_k, x_{k+1}) triples, one per column.
struct DataPairs {
  Mat x;
  Mat u;
  Mat next;
  Vec tail;  // recorded discounted cost-to-go at x
  Eigen::Index size() const { return x.cols(); }
};

/// Trajectories collected so far, plus optional support points that only
/// shape the sampling region (the states placed "behind" the initial
/// trajectory).
class TrajectoryDataset {
 public:
  /// Appends a trajectory. Every state must be safe and consecutive states
  /// must follow the task dynamics within `dynamics_tolerance`.
  void add_trajectory(int iteration, const Trajectory& traj, const TaskSpec& task,
                      double dynamics_tolerance = 1e-6);
  void add_record(TrajectoryRecord record) { records_.push_back(std::move(record)); }
  void add_support_points(const std::vector<State>& points, const TaskSpec& task);
  /// Unchecked; for data read back from disk.
  void restore_support_points(std::vector<State> points) {
    support_.insert(support_.end(), points.begin(), points.end());
  }

  const std::vector<TrajectoryRecord>& trajectories() const { return records_; }
  const std::vector<State>& support_points() const { return support_; }

  bool empty() const { return records_.empty() && support_.empty(); }
  std::size_t num_trajectory_states() const;
  std::size_t num_states() const { return num_trajectory_states() + support_.size(); }
  /// Trajectory states followed by support points.
  std::vector<State> all_states() const;
  DataPairs pairs() const;

 private:
  std::vector<TrajectoryRecord> records_;
  std::vector<State> support_;
};

/// Tail costs for a trajectory.
std::vector<double> discounted_tails(const TaskSpec& task, const Trajectory& traj);

struct RegionCounts {
  int safe = 4000;
  int unsafe = 4000;
  /// Share of the unsafe samples drawn from obstacle interiors.
  double obstacle_fraction = 0.25;
  /// Uniform jitter (rad) added to the heading copied from the nearest datum.
  double heading_jitter = 0.2;
};

/// Safe/unsafe sets built from the alpha shape of the (z, y) projections of
/// the dataset. Safe = inside the alpha shape and not unsafe for the task;
/// unsafe = everything else in the domain.
struct SampleRegions {
  Mat safe;
  Mat unsafe;
  double alpha = 0.0;
  std::shared_ptr<const AlphaShape> shape;

  bool is_safe(const TaskSpec& task, const State& x) const;
};

std::vector<Point2> planar_projection(const std::vector<State>& states);

/// Alpha used for a dataset: AlphaShape::select_alpha scaled by `scale`,
/// and never below `floor`.
double choose_alpha(const TrajectoryDataset& data, double scale, double floor);

SampleRegions construct_regions(const TrajectoryDataset& data, const TaskSpec& task, double alpha,
                                const RegionCounts& counts, Rng& rng);

struct LossWeights {
  double a1 = 1.0;
  double a2 = 1.0;
  double a3 = 1.0;
  double a4 = 1.0;
  double a5 = 1.0;
  double level = 7.0;
  double discount = 0.8;
  /// Training margins added inside the hinges; validation stays strict.
  double margin_level = 0.0;     // [V - c + m]+, [c - V + m]+
  double margin_decrease = 0.0;  // [V(f) - V + m]+
  double margin_value = 0.0;     // value-decrease and data-consistency hinges
  /// Weight of the squared fit of V to the recorded cost-to-go; 0 disables.
  double tail_fit = 0.0;
  /// Weight of mean V over safe samples, pulling V down toward the policy's cost-to-go.
  double shrink = 0.0;
};

struct LossTerms {
  double goal = 0.0;          // V(x_F)^2
  double safe_level = 0.0;    // [V - c]+ on safe samples
  double unsafe_level = 0.0;  // [c - V]+ on unsafe samples
  double decrease = 0.0;      // [V(f(x, pi)) - V]+
  double value_decrease = 0.0;  // [gamma V(f(x, pi)) - V + l]+
  double data = 0.0;          // [-gamma V(x+) + V - l]+ on recorded pairs
  double tail_fit = 0.0;      // (V - recorded cost-to-go)^2 on recorded pairs
  double shrink = 0.0;        // mean V on safe samples
};

struct LossResult {
  double value = 0.0;
  LossTerms terms;
  Vec grad_certificate;
  Vec grad_policy;
};

/// Certificate training loss with exact gradients w.r.t. both networks.
/// Means are taken over the columns passed in, so minibatches give unbiased
/// estimates of the full-set loss. Throws TrainingDivergence on a
/// non-finite value.
LossResult clbf_loss(const Certificate& cert, const Policy& policy, const Mat& safe, const Mat& unsafe,
                     const DataPairs& pairs, const LossWeights& weights, const TaskSpec& task,
                     bool with_gradient = true);

/// Indices into the per-condition arrays below.
enum Condition : int {
  kPositive = 0,        // V(x) > 0 for x != x_F
  kSafeLevel = 1,       // V <= c on safe states
  kUnsafeLevel = 2,     // V > c on unsafe states
  kDecrease = 3,        // V(f(x, pi(x))) - V(x) <= 0 on safe states
  kValueDecrease = 4,   // gamma V(f) - V + l <= 0 on safe states
  kDataConsistency = 5, // gamma V(x_{k+1}) - V(x_k) + l_k >= 0 on recorded pairs
  kNumConditions = 6,
};

const char* condition_name(int condition);

struct ConditionStats {
  std::array<std::int64_t, kNumConditions> violations{};
  std::array<std::int64_t, kNumConditions> checked{};
  std::array<double, kNumConditions> worst{};  // largest residual (violation > 0)
  std::int64_t samples = 0;            // uniform validation samples
  std::int64_t samples_violating = 0;  // samples violating any of kPositive..kValueDecrease
  std::int64_t pairs = 0;
  std::int64_t pairs_violating = 0;
  double goal_value = 0.0;             // V(x_F)

  double rate(int condition) const;
  /// Violating items over all checked items (validation samples and recorded pairs).
  double overall_rate() const;
};

struct ValidationResult {
  ConditionStats stats;
  Mat counter_safe;
  Mat counter_unsafe;
};

/// Draws `num_samples` states uniformly from the domain box, checks the
/// certificate conditions (infimum terms evaluated at the policy), and
/// returns the violators split by region. Recorded pairs, when given, are
/// checked for data consistency.
ValidationResult validate_and_mine(const Certificate& cert, const Policy& policy, const TaskSpec& task,
                                   const SampleRegions& regions, int num_samples, Rng& rng,
                                   const DataPairs* pairs = nullptr);

struct ViolationBounds {
  double delta1_max = 0.0;
  double delta2 = 0.0;
  std::int64_t samples = 0;
  std::int64_t pairs = 0;
  bool empty_dataset = false;
};

/// delta1 = max over uniform domain samples of [gamma V(f(x, pi)) - V + l]+,
/// delta2 = max over recorded pairs of [-(gamma V(x+) - V + l)]+.
ViolationBounds estimate_violation_bounds(const Certificate& cert, const Policy& policy,
                                          const DataPairs& pairs, const TaskSpec& task,
                                          int num_samples, Rng& rng);

/// Residual gamma V(f(x, pi(x))) - V(x) + l(x, pi(x)) at one state.
double value_decrease_residual(const Certificate& cert, const Policy& policy, const TaskSpec& task,
                               const State& x);

struct ContainmentReport {
  std::int64_t violations = 0;  // V_prev <= c but V_new > c
  std::int64_t inside_prev = 0;
  std::int64_t total = 0;
  double fraction() const { return total ? static_cast<double>(violations) / total : 0.0; }
};

ContainmentReport check_containment(const Certificate& prev, const Certificate& next, double level,
                                    const Mat& samples);

/// Uniform samples over the domain box, one per column.
Mat sample_domain(const TaskSpec& task, int count, Rng& rng);

struct TrainerConfig {
  int iterations = 20000;
  int validation_interval = 100;
  int validation_samples = 10000;
  int batch_safe = 256;
  int batch_unsafe = 256;
  int batch_pairs = 256;
  RegionCounts counts;
  OptimizerSettings optimizer;
  /// Alpha: 0 selects automatically (see choose_alpha).
  double alpha = 0.0;
  double alpha_scale = 1.0;
  std::vector<int> certificate_hidden{32, 32};
  int certificate_output = 1;
  std::vector<int> policy_hidden{16, 16};
  bool anchor_goal = true;
  /// Normalize network inputs by the domain box; raw states otherwise.
  bool scale_inputs = true;
  /// Weight of mean squared pre-squash policy output on the safe batch;
  /// keeps the tanh away from saturation.
  double policy_saturation_penalty = 0.0;
  /// Share of each safe/unsafe batch drawn from mined counterexamples;
  /// negative draws uniformly from the merged pool.
  double mined_fraction = -1.0;
  /// Recorded trajectory states join the initial safe samples.
  bool data_in_safe_batch = false;
  std::uint64_t seed = 1;
  int final_validation_samples = 10000;
};

struct TrainResult {
  Certificate certificate;
  Policy policy;
  ViolationBounds bounds;
  ConditionStats final_stats;
  std::vector<double> loss_history;  // running minibatch loss, one entry per validation round
  double alpha = 0.0;
  std::shared_ptr<const AlphaShape> shape;
  std::int64_t safe_samples = 0;
  std::int64_t unsafe_samples = 0;
  std::int64_t mined = 0;
};

/// Full training loop: region construction, minibatch loss minimization,
/// periodic validation with counterexample mining, and violation bounds.
/// Warm-starts from the previous networks when given.
TrainResult train_certificate(const TrajectoryDataset& data, const TaskSpec& task,
                              const TrainerConfig& config, const LossWeights& weights,
                              const Certificate* previous_certificate = nullptr,
                              const Policy* previous_policy = nullptr, double alpha_floor = 0.0);

}  // namespace ilmpc
