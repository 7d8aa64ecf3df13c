#include "ilmpc/task.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ilmpc/errors.hpp"

namespace ilmpc {

DubinsDynamics::DubinsDynamics(double dt) : dt_(dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time_step", "must be positive");
}

State DubinsDynamics::step(const State& x, const Input& u) const {
  State next(3);
  const double c = std::cos(x[2]);
  const double s = std::sin(x[2]);
  next[0] = x[0] + dt_ * u[0] * c;
  next[1] = x[1] + dt_ * u[0] * s;
  next[2] = x[2] + dt_ * u[1];
  return next;
}

void DubinsDynamics::jacobians(const State& x, const Input& u, Mat& A, Mat& B) const {
  const double c = std::cos(x[2]);
  const double s = std::sin(x[2]);
  A.setIdentity(3, 3);
  A(0, 2) = -dt_ * u[0] * s;
  A(1, 2) = dt_ * u[0] * c;
  B.setZero(3, 2);
  B(0, 0) = dt_ * c;
  B(1, 0) = dt_ * s;
  B(2, 1) = dt_;
}

LinearDynamics::LinearDynamics(Mat A, Mat B) : A_(std::move(A)), B_(std::move(B)) {
  if (A_.rows() != A_.cols() || B_.rows() != A_.rows())
    throw ContractViolation("LinearDynamics: inconsistent A/B shapes");
}

State LinearDynamics::step(const State& x, const Input& u) const { return A_ * x + B_ * u; }

void LinearDynamics::jacobians(const State&, const Input&, Mat& A, Mat& B) const {
  A = A_;
  B = B_;
}

QuadraticGoalCost::QuadraticGoalCost(State target, double state_weight, double input_weight)
    : target_(std::move(target)), state_weight_(state_weight), input_weight_(input_weight) {
  if (!(state_weight > 0.0)) throw ConfigError("stage_cost.weight", "must be positive");
  if (input_weight < 0.0) throw ConfigError("stage_cost.input_weight", "must be nonnegative");
}

double QuadraticGoalCost::value(const State& x, const Input& u) const {
  double v = state_weight_ * (x - target_).squaredNorm();
  if (input_weight_ > 0.0) v += input_weight_ * u.squaredNorm();
  return v;
}

void QuadraticGoalCost::gradient(const State& x, const Input& u, Vec& gx, Vec& gu) const {
  gx = 2.0 * state_weight_ * (x - target_);
  if (input_weight_ > 0.0)
    gu = 2.0 * input_weight_ * u;
  else
    gu.setZero(u.size());
}

bool Box::contains(const Vec& x) const {
  for (int i = 0; i < dim(); ++i)
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  return true;
}

namespace {

void check_box(const Box& box, int dim, const char* field) {
  if (box.lower.size() != dim || box.upper.size() != dim)
    throw ConfigError(field, "dimension does not match the dynamics");
  for (int i = 0; i < dim; ++i)
    if (!(box.lower[i] <= box.upper[i]) || !std::isfinite(box.lower[i]) ||
        !std::isfinite(box.upper[i]))
      throw ConfigError(field, "lower bound must not exceed upper bound");
}

bool point_in_any_disc(const std::vector<Disc>& discs, const State& x) {
  return std::any_of(discs.begin(), discs.end(),
                     [&](const Disc& d) { return d.contains(x[0], x[1]); });
}

}  // namespace

TaskSpec::TaskSpec(TaskParams params) : p_(std::move(params)) {
  if (!p_.dynamics) throw ConfigError("dynamics", "missing");
  if (!p_.stage_cost) throw ConfigError("stage_cost", "missing");
  state_dim_ = p_.dynamics->state_dim();
  input_dim_ = p_.dynamics->input_dim();
  check_box(p_.input_box, input_dim_, "input_box");
  check_box(p_.domain_box, state_dim_, "domain_box");
  if (p_.goal.size() != state_dim_) throw ConfigError("goal", "wrong dimension");
  if (p_.start.size() != state_dim_) throw ConfigError("start", "wrong dimension");
  if (!p_.goal.allFinite()) throw ConfigError("goal", "must be finite");
  if (!p_.start.allFinite()) throw ConfigError("start", "must be finite");
  if (!(p_.discount > 0.0 && p_.discount < 1.0))
    throw ConfigError("discount", "must lie in (0, 1)");
  if (p_.horizon < 1) throw ConfigError("horizon", "must be >= 1");
  if (!(p_.level > 0.0)) throw ConfigError("level", "must be positive");
  if (!(p_.time_step > 0.0)) throw ConfigError("time_step", "must be positive");
  if (p_.max_steps < 1) throw ConfigError("max_steps", "must be >= 1");
  if (!(p_.goal_tolerance > 0.0)) throw ConfigError("goal_tolerance", "must be positive");
  for (const auto& d : p_.obstacles)
    if (!(d.radius > 0.0)) throw ConfigError("obstacles", "radius must be positive");
  if (!p_.obstacles.empty() && state_dim_ < 2)
    throw ConfigError("obstacles", "disc obstacles need at least two state coordinates");

  const Input zero = Input::Zero(input_dim_);
  const State fixed = p_.dynamics->step(p_.goal, zero);
  if ((fixed - p_.goal).norm() > 1e-9)
    throw ConfigError("goal", "not an equilibrium of the unforced dynamics");
  if (p_.stage_cost->value(p_.goal, zero) != 0.0)
    throw ConfigError("stage_cost", "must vanish at (goal, 0)");
  if (point_in_any_disc(p_.obstacles, p_.goal)) throw ConfigError("goal", "lies in an obstacle");
  if (point_in_any_disc(p_.obstacles, p_.start)) throw ConfigError("start", "lies in an obstacle");
  if (!p_.domain_box.contains(p_.goal)) throw ConfigError("goal", "outside the domain box");
  if (!p_.domain_box.contains(p_.start)) throw ConfigError("start", "outside the domain box");
}

TaskSpec TaskSpec::with_horizon(int horizon) const {
  TaskParams copy = p_;
  copy.horizon = horizon;
  return TaskSpec(std::move(copy));
}

TaskSpec make_dubins_benchmark(const DubinsBenchmarkOptions& o) {
  TaskParams p;
  p.dynamics = std::make_shared<DubinsDynamics>(o.time_step);
  State goal(3);
  goal << 6.0, 0.0, 0.0;
  State start(3);
  start << -6.0, 0.0, 0.0;
  p.stage_cost = std::make_shared<QuadraticGoalCost>(goal, o.cost_weight);
  p.input_box.lower = Vec::Zero(2);
  p.input_box.upper = Vec::Zero(2);
  p.input_box.lower << 0.0, -o.omega_max;
  p.input_box.upper << o.v_max, o.omega_max;
  p.domain_box.lower = Vec(3);
  p.domain_box.upper = Vec(3);
  p.domain_box.lower << -o.domain_half_extent, -o.domain_half_extent, -std::numbers::pi;
  p.domain_box.upper << o.domain_half_extent, o.domain_half_extent, std::numbers::pi;
  p.obstacles = {o.obstacle};
  p.goal = goal;
  p.start = start;
  p.discount = o.discount;
  p.horizon = o.horizon;
  p.level = o.level;
  p.time_step = o.time_step;
  p.max_steps = o.max_steps;
  p.goal_tolerance = o.goal_tolerance;
  return TaskSpec(std::move(p));
}

void check_state(const TaskSpec& task, const Vec& x, const char* what) {
  if (x.size() != task.state_dim()) {
    std::ostringstream os;
    os << what << ": state has length " << x.size() << ", expected " << task.state_dim();
    throw ContractViolation(os.str());
  }
}

void check_input(const TaskSpec& task, const Vec& u, const char* what) {
  if (u.size() != task.input_dim()) {
    std::ostringstream os;
    os << what << ": input has length " << u.size() << ", expected " << task.input_dim();
    throw ContractViolation(os.str());
  }
}

State step(const TaskSpec& task, const State& x, const Input& u) {
  check_state(task, x, "step");
  check_input(task, u, "step");
  return task.dynamics().step(x, u);
}

double stage_cost(const TaskSpec& task, const State& x, const Input& u) {
  check_state(task, x, "stage_cost");
  check_input(task, u, "stage_cost");
  return task.stage_cost().value(x, u);
}

bool in_obstacle(const TaskSpec& task, const State& x) {
  check_state(task, x, "in_obstacle");
  return point_in_any_disc(task.obstacles(), x);
}

bool in_unsafe(const TaskSpec& task, const State& x) {
  check_state(task, x, "in_unsafe");
  return point_in_any_disc(task.obstacles(), x) || !task.domain_box().contains(x);
}

std::pair<double, double> wheel_velocities(const WheelGeometry& g, double v, double omega,
                                           bool swap) {
  if (!(g.wheel_radius > 0.0) || !(g.wheelbase > 0.0))
    throw ContractViolation("wheel_velocities: wheel radius and wheelbase must be positive");
  const double half = omega * g.wheelbase / 2.0;
  const double right = (v - half) / g.wheel_radius;
  const double left = (v + half) / g.wheel_radius;
  if (swap) return {left, right};
  return {right, left};
}

DiscountedCost discounted_cost(const TaskSpec& task, const Trajectory& traj) {
  if (traj.states.empty()) throw ContractViolation("discounted_cost: empty trajectory");
  if (traj.inputs.size() != traj.states.size())
    throw ContractViolation("discounted_cost: states and inputs differ in length");
  DiscountedCost out;
  double weight = 1.0;
  double l_max = 0.0;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const double l = stage_cost(task, traj.states[t], traj.inputs[t]);
    out.value += weight * l;
    l_max = std::max(l_max, l);
    weight *= task.discount();
  }
  // weight == gamma^T here
  out.tail_bound = weight * l_max / (1.0 - task.discount());
  return out;
}

double cumulative_cost(const TaskSpec& task, const Trajectory& traj) {
  double sum = 0.0;
  for (std::size_t t = 1; t < traj.states.size(); ++t)
    sum += stage_cost(task, traj.states[t], traj.inputs[t]);
  return sum;
}

}  // namespace ilmpc
