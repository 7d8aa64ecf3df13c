#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace ilmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using State = Eigen::VectorXd;
using Input = Eigen::VectorXd;

/// Discrete-time dynamics x+ = f(x, u) with analytic Jacobians.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual State step(const State& x, const Input& u) const = 0;
  /// A = df/dx (n x n), B = df/du (n x m).
  virtual void jacobians(const State& x, const Input& u, Mat& A, Mat& B) const = 0;
  virtual std::string name() const = 0;
};

/// Unicycle / Dubins car: [z, y, theta] driven by [v, omega], forward Euler.
/// Heading is deliberately left unwrapped.
class DubinsDynamics final : public Dynamics {
 public:
  explicit DubinsDynamics(double dt);
  int state_dim() const override { return 3; }
  int input_dim() const override { return 2; }
  State step(const State& x, const Input& u) const override;
  void jacobians(const State& x, const Input& u, Mat& A, Mat& B) const override;
  std::string name() const override { return "dubins"; }
  double dt() const { return dt_; }

 private:
  double dt_;
};

/// Linear dynamics x+ = A x + B u. Mostly useful for tests.
class LinearDynamics final : public Dynamics {
 public:
  LinearDynamics(Mat A, Mat B);
  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int input_dim() const override { return static_cast<int>(B_.cols()); }
  State step(const State& x, const Input& u) const override;
  void jacobians(const State& x, const Input& u, Mat& A, Mat& B) const override;
  std::string name() const override { return "linear"; }

 private:
  Mat A_;
  Mat B_;
};

/// Stage cost l(x, u) >= 0 with gradients.
class StageCost {
 public:
  virtual ~StageCost() = default;
  virtual double value(const State& x, const Input& u) const = 0;
  virtual void gradient(const State& x, const Input& u, Vec& gx, Vec& gu) const = 0;
};

/// state_weight * |x - target|^2 + input_weight * |u|^2.
class QuadraticGoalCost final : public StageCost {
 public:
  QuadraticGoalCost(State target, double state_weight, double input_weight = 0.0);
  double value(const State& x, const Input& u) const override;
  void gradient(const State& x, const Input& u, Vec& gx, Vec& gu) const override;
  double state_weight() const { return state_weight_; }
  double input_weight() const { return input_weight_; }

 private:
  State target_;
  double state_weight_;
  double input_weight_;
};

/// Axis-aligned box, inclusive.
struct Box {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x) const;
  Vec center() const { return 0.5 * (lower + upper); }
  Vec half_width() const { return 0.5 * (upper - lower); }
};

/// Closed disc in the (z, y) plane; the first two state coordinates.
struct Disc {
  double z = 0.0;
  double y = 0.0;
  double radius = 1.0;

  bool contains(double pz, double py) const {
    const double dz = pz - z;
    const double dy = py - y;
    return dz * dz + dy * dy <= radius * radius;
  }
};

struct WheelGeometry {
  double wheel_radius = 0.035;
  double wheelbase = 0.23;
};

/// Parameters used to build a TaskSpec. Kept as plain data so that the
/// config layer can fill it in field by field.
struct TaskParams {
  std::shared_ptr<const Dynamics> dynamics;
  std::shared_ptr<const StageCost> stage_cost;
  Box input_box;
  Box domain_box;
  std::vector<Disc> obstacles;
  State goal;
  State start;
  double discount = 0.8;
  int horizon = 15;
  double level = 7.0;
  double time_step = 0.1;
  int max_steps = 200;
  double goal_tolerance = 1e-2;
};

/// The controlled system, stage cost and constraint sets. Immutable once
/// constructed; construction validates the invariants (goal is an
/// equilibrium, goal and start are safe, discount in (0, 1)).
class TaskSpec {
 public:
  explicit TaskSpec(TaskParams params);

  int state_dim() const { return state_dim_; }
  int input_dim() const { return input_dim_; }
  const Dynamics& dynamics() const { return *p_.dynamics; }
  const StageCost& stage_cost() const { return *p_.stage_cost; }
  const Box& input_box() const { return p_.input_box; }
  const Box& domain_box() const { return p_.domain_box; }
  const std::vector<Disc>& obstacles() const { return p_.obstacles; }
  const State& goal() const { return p_.goal; }
  const State& start() const { return p_.start; }
  double discount() const { return p_.discount; }
  int horizon() const { return p_.horizon; }
  double level() const { return p_.level; }
  double time_step() const { return p_.time_step; }
  int max_steps() const { return p_.max_steps; }
  double goal_tolerance() const { return p_.goal_tolerance; }
  const TaskParams& params() const { return p_; }

  /// Copy with a different horizon or level; everything else shared.
  TaskSpec with_horizon(int horizon) const;

 private:
  TaskParams p_;
  int state_dim_;
  int input_dim_;
};

/// Options of the Dubins reach-avoid benchmark.
struct DubinsBenchmarkOptions {
  double time_step = 0.1;
  double cost_weight = 1e-3;
  Disc obstacle{0.0, 0.0, 1.0};
  double domain_half_extent = 8.0;
  double v_max = 2.0;
  double omega_max = 1.5707963267948966;
  double discount = 0.8;
  int horizon = 15;
  double level = 7.0;
  int max_steps = 200;
  double goal_tolerance = 1e-2;
};

TaskSpec make_dubins_benchmark(const DubinsBenchmarkOptions& options = {});

// ---- operations ----------------------------------------------------------

State step(const TaskSpec& task, const State& x, const Input& u);
double stage_cost(const TaskSpec& task, const State& x, const Input& u);
/// True iff x lies in any (closed) obstacle disc or outside the domain box.
bool in_unsafe(const TaskSpec& task, const State& x);
bool in_obstacle(const TaskSpec& task, const State& x);

/// Wheel speeds (right, left) for a differential drive, with the sign
/// convention v_r = (v - wL/2)/R, v_l = (v + wL/2)/R. `swap` exchanges the
/// two for the usual convention.
std::pair<double, double> wheel_velocities(const WheelGeometry& g, double v, double omega,
                                           bool swap = false);

/// A closed-loop (or recorded) trajectory: inputs[t] is applied at states[t].
struct Trajectory {
  std::vector<State> states;
  std::vector<Input> inputs;

  std::size_t size() const { return states.size(); }
};

struct DiscountedCost {
  double value = 0.0;
  /// gamma^T * l_max / (1 - gamma), bound on the omitted infinite tail,
  /// with l_max the largest stage cost seen on the trajectory.
  double tail_bound = 0.0;
};

DiscountedCost discounted_cost(const TaskSpec& task, const Trajectory& traj);

/// Undiscounted sum of the stage cost over states 1..T (the cumulative
/// cost used to tabulate closed-loop performance).
double cumulative_cost(const TaskSpec& task, const Trajectory& traj);

/// Throws ContractViolation when the sizes do not match the task.
void check_state(const TaskSpec& task, const Vec& x, const char* what);
void check_input(const TaskSpec& task, const Vec& u, const char* what);

}  // namespace ilmpc
