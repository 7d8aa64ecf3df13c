#pragma once

#include <limits>
#include <vector>

#include "ilmpc/neural.hpp"
#include "ilmpc/task.hpp"

namespace ilmpc {

struct SolverSettings {
  double kkt_tolerance = 1e-6;
  double constraint_tolerance = 1e-6;
  int max_outer = 6;
  int max_inner = 200;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  int memory = 10;
  double armijo = 1e-4;
  int max_backtracks = 40;
  /// Divide the objective by gamma^t; the argmin is unchanged.
  bool normalize_discount = true;
  /// Also constrain the terminal predicted state against obstacles and the domain.
  bool terminal_state_constraints = false;
  /// Obstacle radius is enlarged by this amount inside the solver.
  double obstacle_margin = 1e-3;
  double step_budget_ms = 100.0;
  /// Also start from constant input sequences and keep the best acceptable result.
  bool multistart = true;
};

enum class SolveStatus { Converged, MaxIter, InfeasibleFallback };
const char* status_name(SolveStatus status);

struct ConstraintResiduals {
  double dynamics = 0.0;  // max |x_{k+1} - f(x_k, u_k)|
  /// min over constrained steps and obstacles of (distance - radius).
  double obstacle_margin = std::numeric_limits<double>::infinity();
  double domain = 0.0;    // max violation of the domain box
  double terminal = 0.0;  // V(x_N) - c, or |x_N - target| for a pinned terminal
  double input = 0.0;     // max violation of the input box
};

struct OcpSolution {
  std::vector<Input> inputs;   // u_{t..t+N-1}
  std::vector<State> states;   // x_t .. x_{t+N}
  double objective = 0.0;
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;          // inner iterations over all outer rounds
  int outer_iterations = 0;
  double kkt_residual = 0.0;
  double wall_time_ms = 0.0;
  ConstraintResiduals residuals;
};

struct WarmStart {
  enum class Origin { Previous, Cold };
  std::vector<Input> inputs;
  Origin origin = Origin::Cold;
};

/// Terminal ingredients of the horizon problem. Either the certificate
/// (cost V, constraint V <= level) or a pinned target state with a fixed
/// terminal cost.
struct TerminalSpec {
  const Certificate* certificate = nullptr;
  double level = 0.0;
  bool pinned = false;
  State target;
  double target_cost = 0.0;

  static TerminalSpec from_certificate(const Certificate& cert, double level);
  static TerminalSpec pinned_to(State target, double cost);
};

struct OcpProblem {
  const TaskSpec* task = nullptr;
  const Certificate* certificate = nullptr;
  State x0;
  int t = 0;
  int horizon = 0;
};

struct RolloutResult {
  std::vector<State> states;  // x_0 .. x_N
  double objective = 0.0;
  std::vector<Vec> gradient;  // d objective / d u_k
};

/// Single-shooting rollout: sum_k gamma^(t+k) l(x_k, u_k) + gamma^(t+N) T(x_N),
/// with the exact input gradient by reverse accumulation. With `normalize`
/// the gamma^t factor is dropped.
RolloutResult rollout(const TaskSpec& task, const TerminalSpec& terminal, const State& x0,
                      const std::vector<Input>& inputs, int t, bool normalize, bool with_gradient);
RolloutResult rollout(const TaskSpec& task, const Certificate& cert, const State& x0,
                      const std::vector<Input>& inputs, int t, bool normalize = false,
                      bool with_gradient = true);

ConstraintResiduals constraint_residuals(const TaskSpec& task, const TerminalSpec& terminal,
                                         const std::vector<State>& states,
                                         const std::vector<Input>& inputs,
                                         const SolverSettings& settings);

/// Rollout of a fixed input sequence packaged as a solution (status Converged,
/// no iterations).
OcpSolution evaluate_plan(const TaskSpec& task, const TerminalSpec& terminal, const State& x0, int t,
                          const std::vector<Input>& inputs, const SolverSettings& settings);

/// True when the residuals meet the tolerances of an accepted solution.
bool residuals_acceptable(const ConstraintResiduals& r, const TerminalSpec& terminal,
                          const SolverSettings& settings, double pinned_tolerance = 1e-4);

/// Augmented Lagrangian over the state and terminal constraints with a
/// projected L-BFGS inner loop on the input box. Falls back to the warm start
/// when no acceptable solution is found; throws SolverFailure if the warm
/// start is itself infeasible in that case.
OcpSolution solve(const OcpProblem& problem, const WarmStart& warm, const SolverSettings& settings);
OcpSolution solve_terminal(const TaskSpec& task, const TerminalSpec& terminal, const State& x0, int t,
                           const WarmStart& warm, const SolverSettings& settings,
                           double pinned_tolerance = 1e-4, bool throw_on_infeasible_warm = true);

/// Shift by one step and append pi(x_N).
WarmStart make_warm_start(const OcpSolution& prev, const Policy& policy, const TaskSpec& task);
/// Policy rollout of length N from x0.
WarmStart cold_start(const Policy& policy, const TaskSpec& task, const State& x0, int horizon);

struct MpcStep {
  Input applied;
  WarmStart next;
  OcpSolution solution;
};

MpcStep mpc_step(const OcpProblem& problem, const WarmStart& warm, const Policy& policy,
                 const SolverSettings& settings);

}  // namespace ilmpc
