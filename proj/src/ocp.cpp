#include "ilmpc/ocp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <sstream>

#include "ilmpc/errors.hpp"

namespace ilmpc {

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::InfeasibleFallback: return "infeasible_fallback";
  }
  return "unknown";
}

TerminalSpec TerminalSpec::from_certificate(const Certificate& cert, double level) {
  TerminalSpec t;
  t.certificate = &cert;
  t.level = level;
  return t;
}

TerminalSpec TerminalSpec::pinned_to(State target, double cost) {
  TerminalSpec t;
  t.pinned = true;
  t.target = std::move(target);
  t.target_cost = cost;
  return t;
}

namespace {

void check_inputs(const TaskSpec& task, const std::vector<Input>& inputs, const State& x0) {
  check_state(task, x0, "rollout");
  if (inputs.empty()) throw ContractViolation("rollout: empty input sequence");
  for (const auto& u : inputs) check_input(task, u, "rollout");
}

double terminal_value(const TerminalSpec& term, const State& x, Vec* grad) {
  if (term.pinned) {
    if (grad) *grad = Vec::Zero(x.size());
    return term.target_cost;
  }
  if (!term.certificate) throw ContractViolation("terminal: no certificate");
  if (grad) return term.certificate->value(x, *grad);
  return term.certificate->value(x);
}

[[noreturn]] void non_finite(int k) {
  std::ostringstream os;
  os << "rollout: non-finite state at step " << k;
  throw SolverFailure(os.str());
}

Vec project(const Vec& u, const Vec& lo, const Vec& hi) { return u.cwiseMax(lo).cwiseMin(hi); }

// Horizon NLP in the stacked input vector, augmented Lagrangian form.
class ShootingNlp {
 public:
  ShootingNlp(const TaskSpec& task, const TerminalSpec& term, State x0, int t, int N,
              const SolverSettings& s)
      : task_(task), term_(term), x0_(std::move(x0)), t_(t), N_(N), s_(s) {
    n_ = task.state_dim();
    m_ = task.input_dim();
    const Box& ub = task.input_box();
    lo_.resize(N * m_);
    hi_.resize(N * m_);
    for (int k = 0; k < N; ++k) {
      lo_.segment(k * m_, m_) = ub.lower;
      hi_.segment(k * m_, m_) = ub.upper;
    }
    last_constrained_ = s.terminal_state_constraints ? N : N - 1;
    const Box& db = task.domain_box();
    for (int i = 0; i < n_; ++i)
      if (std::isfinite(db.lower[i]) || std::isfinite(db.upper[i])) box_dims_.push_back(i);
    per_state_ = static_cast<int>(task.obstacles().size() + 2 * box_dims_.size());
    num_ineq_ = per_state_ * std::max(last_constrained_, 0) + (term.pinned ? 0 : 1);
    num_eq_ = term.pinned ? n_ : 0;
    scale0_ = s.normalize_discount ? 1.0 : std::pow(task.discount(), t);
  }

  int num_vars() const { return N_ * m_; }
  int num_ineq() const { return num_ineq_; }
  int num_eq() const { return num_eq_; }
  const Vec& lower() const { return lo_; }
  const Vec& upper() const { return hi_; }

  Vec stack(const std::vector<Input>& inputs) const {
    Vec u(N_ * m_);
    for (int k = 0; k < N_; ++k) u.segment(k * m_, m_) = inputs[k];
    return u;
  }
  std::vector<Input> unstack(const Vec& u) const {
    std::vector<Input> out(N_);
    for (int k = 0; k < N_; ++k) out[k] = u.segment(k * m_, m_);
    return out;
  }

  struct Eval {
    double al = 0.0;
    double objective = 0.0;
    Vec g;  // inequality values, <= 0 feasible
    Vec h;  // equality values
    Vec grad;
    std::vector<State> states;
  };

  // Augmented Lagrangian value (and gradient). With rho = 0 the plain
  // objective is returned in `al`.
  Eval evaluate(const Vec& u, const Vec& lam_g, const Vec& lam_h, double rho, bool with_grad) const {
    Eval e;
    const double gamma = task_.discount();
    e.states.resize(N_ + 1);
    e.states[0] = x0_;
    std::vector<Mat> A(with_grad ? N_ : 0), B(with_grad ? N_ : 0);
    std::vector<Vec> lx(N_ + 1, Vec::Zero(n_)), gu(N_, Vec::Zero(m_));
    Vec gx, gui;
    double w = scale0_;
    for (int k = 0; k < N_; ++k) {
      const Input uk = u.segment(k * m_, m_);
      e.objective += w * task_.stage_cost().value(e.states[k], uk);
      if (with_grad) {
        task_.stage_cost().gradient(e.states[k], uk, gx, gui);
        lx[k] += w * gx;
        gu[k] += w * gui;
        task_.dynamics().jacobians(e.states[k], uk, A[k], B[k]);
      }
      e.states[k + 1] = task_.dynamics().step(e.states[k], uk);
      if (!e.states[k + 1].allFinite()) non_finite(k + 1);
      w *= gamma;
    }
    Vec gterm;
    const double vt = terminal_value(term_, e.states[N_], with_grad ? &gterm : nullptr);
    e.objective += w * vt;
    if (with_grad) lx[N_] += w * gterm;

    e.g.resize(num_ineq_);
    e.h.resize(num_eq_);
    e.al = e.objective;
    int idx = 0;
    auto add_ineq = [&](int k, double value, const Vec* grad) {
      e.g[idx] = value;
      if (rho > 0.0) {
        const double p = std::max(0.0, lam_g[idx] + rho * value);
        e.al += (p * p - lam_g[idx] * lam_g[idx]) / (2.0 * rho);
        if (with_grad && grad && p != 0.0) lx[k] += p * *grad;
      }
      ++idx;
    };
    const Box& db = task_.domain_box();
    Vec grad(n_);
    for (int k = 1; k <= last_constrained_; ++k) {
      const State& x = e.states[k];
      for (const auto& d : task_.obstacles()) {
        const double dz = x[0] - d.z, dy = x[1] - d.y;
        const double r = d.radius + s_.obstacle_margin;
        grad.setZero();
        grad[0] = -2.0 * dz;
        grad[1] = -2.0 * dy;
        add_ineq(k, r * r - dz * dz - dy * dy, &grad);
      }
      for (int i : box_dims_) {
        grad.setZero();
        grad[i] = 1.0;
        add_ineq(k, x[i] - db.upper[i], &grad);
        grad[i] = -1.0;
        add_ineq(k, db.lower[i] - x[i], &grad);
      }
    }
    if (!term_.pinned) add_ineq(N_, vt - term_.level, &gterm);
    if (term_.pinned) {
      e.h = e.states[N_] - term_.target;
      if (rho > 0.0) {
        e.al += lam_h.dot(e.h) + 0.5 * rho * e.h.squaredNorm();
        if (with_grad) lx[N_] += lam_h + rho * e.h;
      }
    }

    if (with_grad) {
      e.grad.resize(N_ * m_);
      Vec adj = lx[N_];
      for (int k = N_ - 1; k >= 0; --k) {
        e.grad.segment(k * m_, m_) = gu[k] + B[k].transpose() * adj;
        adj = lx[k] + A[k].transpose() * adj;
      }
    }
    return e;
  }

  double projected_gradient_norm(const Vec& u, const Vec& grad) const {
    return (project(u - grad, lo_, hi_) - u).lpNorm<Eigen::Infinity>();
  }

 private:
  const TaskSpec& task_;
  const TerminalSpec& term_;
  State x0_;
  int t_;
  int N_;
  const SolverSettings& s_;
  int n_ = 0, m_ = 0;
  Vec lo_, hi_;
  int last_constrained_ = 0;
  std::vector<int> box_dims_;
  int per_state_ = 0;
  int num_ineq_ = 0;
  int num_eq_ = 0;
  double scale0_ = 1.0;
};

struct InnerResult {
  Vec u;
  double pg = 0.0;
  int iterations = 0;
};

// Projected L-BFGS with Armijo backtracking along the projection arc.
InnerResult projected_lbfgs(const ShootingNlp& nlp, Vec u, const Vec& lam_g, const Vec& lam_h,
                            double rho, const SolverSettings& s) {
  const Vec& lo = nlp.lower();
  const Vec& hi = nlp.upper();
  u = project(u, lo, hi);
  auto e = nlp.evaluate(u, lam_g, lam_h, rho, true);
  std::deque<std::pair<Vec, Vec>> mem;
  InnerResult r;
  for (int it = 0; it < s.max_inner; ++it) {
    r.pg = nlp.projected_gradient_norm(u, e.grad);
    if (r.pg <= s.kkt_tolerance) break;

    // variables held at a bound by the gradient are fixed for this step
    const Eigen::Index nv = u.size();
    std::vector<bool> freev(nv);
    for (Eigen::Index i = 0; i < nv; ++i)
      freev[i] = !((u[i] <= lo[i] && e.grad[i] > 0.0) || (u[i] >= hi[i] && e.grad[i] < 0.0));
    auto mask = [&](Vec v) {
      for (Eigen::Index i = 0; i < nv; ++i)
        if (!freev[i]) v[i] = 0.0;
      return v;
    };

    Vec q = mask(e.grad);
    std::vector<double> alpha(mem.size());
    for (std::size_t j = mem.size(); j-- > 0;) {
      const Vec sj = mask(mem[j].first), yj = mask(mem[j].second);
      const double sy = sj.dot(yj);
      if (sy <= 1e-16) {
        alpha[j] = 0.0;
        continue;
      }
      alpha[j] = sj.dot(q) / sy;
      q -= alpha[j] * yj;
    }
    if (!mem.empty()) {
      const Vec sl = mask(mem.back().first), yl = mask(mem.back().second);
      const double yy = yl.squaredNorm();
      if (yy > 0.0 && sl.dot(yl) > 0.0) q *= sl.dot(yl) / yy;
    }
    for (std::size_t j = 0; j < mem.size(); ++j) {
      const Vec sj = mask(mem[j].first), yj = mask(mem[j].second);
      const double sy = sj.dot(yj);
      if (sy <= 1e-16) continue;
      const double beta = yj.dot(q) / sy;
      q += (alpha[j] - beta) * sj;
    }
    Vec d = -q;
    if (e.grad.dot(d) >= 0.0 || !d.allFinite()) {
      mem.clear();
      d = -mask(e.grad);
    }
    if (mem.empty()) {
      const double dn = d.lpNorm<Eigen::Infinity>();
      if (dn > 1.0) d /= dn;
    }

    double step = 1.0;
    bool accepted = false;
    Vec un;
    ShootingNlp::Eval en;
    for (int b = 0; b < s.max_backtracks; ++b) {
      un = project(u + step * d, lo, hi);
      en = nlp.evaluate(un, lam_g, lam_h, rho, true);
      if (std::isfinite(en.al) && en.al <= e.al + s.armijo * e.grad.dot(un - u)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++r.iterations;
    if (!accepted) {
      if (mem.empty()) break;
      mem.clear();
      continue;
    }
    const Vec sv = un - u;
    const Vec yv = en.grad - e.grad;
    if (sv.dot(yv) > 1e-12 * sv.norm() * yv.norm()) {
      mem.emplace_back(sv, yv);
      if (static_cast<int>(mem.size()) > s.memory) mem.pop_front();
    }
    u = std::move(un);
    e = std::move(en);
    if (sv.lpNorm<Eigen::Infinity>() == 0.0) break;
  }
  r.pg = nlp.projected_gradient_norm(u, e.grad);
  r.u = std::move(u);
  return r;
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::string describe(const ConstraintResiduals& r) {
  std::ostringstream os;
  os << "dynamics " << r.dynamics << ", obstacle margin " << r.obstacle_margin << ", domain "
     << r.domain << ", terminal " << r.terminal << ", input " << r.input;
  return os.str();
}

}  // namespace

RolloutResult rollout(const TaskSpec& task, const TerminalSpec& terminal, const State& x0,
                      const std::vector<Input>& inputs, int t, bool normalize, bool with_gradient) {
  check_inputs(task, inputs, x0);
  SolverSettings s;
  s.normalize_discount = normalize;
  const int N = static_cast<int>(inputs.size());
  ShootingNlp nlp(task, terminal, x0, t, N, s);
  const Vec u = nlp.stack(inputs);
  auto e = nlp.evaluate(u, Vec::Zero(nlp.num_ineq()), Vec::Zero(nlp.num_eq()), 0.0, with_gradient);
  RolloutResult r;
  r.states = std::move(e.states);
  r.objective = e.objective;
  if (with_gradient) r.gradient = nlp.unstack(e.grad);
  return r;
}

RolloutResult rollout(const TaskSpec& task, const Certificate& cert, const State& x0,
                      const std::vector<Input>& inputs, int t, bool normalize, bool with_gradient) {
  return rollout(task, TerminalSpec::from_certificate(cert, task.level()), x0, inputs, t, normalize,
                 with_gradient);
}

ConstraintResiduals constraint_residuals(const TaskSpec& task, const TerminalSpec& terminal,
                                         const std::vector<State>& states,
                                         const std::vector<Input>& inputs,
                                         const SolverSettings& settings) {
  ConstraintResiduals r;
  const int N = static_cast<int>(inputs.size());
  if (static_cast<int>(states.size()) != N + 1)
    throw ContractViolation("constraint_residuals: need N + 1 states");
  const Box& ub = task.input_box();
  const Box& db = task.domain_box();
  for (int k = 0; k < N; ++k) {
    r.dynamics = std::max(r.dynamics, (task.dynamics().step(states[k], inputs[k]) - states[k + 1])
                                          .lpNorm<Eigen::Infinity>());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i)
      r.input = std::max({r.input, ub.lower[i] - inputs[k][i], inputs[k][i] - ub.upper[i]});
  }
  const int last = settings.terminal_state_constraints ? N : N - 1;
  for (int k = 1; k <= last; ++k) {
    const State& x = states[k];
    for (const auto& d : task.obstacles())
      r.obstacle_margin = std::min(r.obstacle_margin, std::hypot(x[0] - d.z, x[1] - d.y) - d.radius);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      r.domain = std::max({r.domain, db.lower[i] - x[i], x[i] - db.upper[i]});
  }
  if (terminal.pinned)
    r.terminal = (states.back() - terminal.target).norm();
  else
    r.terminal = terminal.certificate->value(states.back()) - terminal.level;
  return r;
}

OcpSolution evaluate_plan(const TaskSpec& task, const TerminalSpec& terminal, const State& x0, int t,
                          const std::vector<Input>& inputs, const SolverSettings& settings) {
  RolloutResult r = rollout(task, terminal, x0, inputs, t, settings.normalize_discount, false);
  OcpSolution sol;
  sol.inputs = inputs;
  sol.states = std::move(r.states);
  sol.objective = r.objective;
  sol.residuals = constraint_residuals(task, terminal, sol.states, sol.inputs, settings);
  return sol;
}

bool residuals_acceptable(const ConstraintResiduals& r, const TerminalSpec& terminal,
                          const SolverSettings& s, double pinned_tolerance) {
  const double tol = s.constraint_tolerance;
  if (!(r.dynamics <= 1e-8) || !(r.input <= 0.0) || !(r.domain <= tol)) return false;
  if (!(r.obstacle_margin >= -tol)) return false;
  return terminal.pinned ? r.terminal <= pinned_tolerance : r.terminal <= tol;
}

namespace {

struct AlResult {
  Vec u;
  Vec lam_g;
  Vec lam_h;
  bool converged = false;
  int iterations = 0;
  int outer = 0;
  double kkt = 0.0;
};

AlResult augmented_lagrangian(const ShootingNlp& nlp, const Vec& u0, const SolverSettings& s) {
  AlResult r;
  r.u = u0;
  r.lam_g = Vec::Zero(nlp.num_ineq());
  r.lam_h = Vec::Zero(nlp.num_eq());
  double rho = s.penalty_init;
  for (int outer = 0; outer < s.max_outer; ++outer) {
    InnerResult in = projected_lbfgs(nlp, r.u, r.lam_g, r.lam_h, rho, s);
    r.u = in.u;
    r.iterations += in.iterations;
    r.outer = outer + 1;
    const auto e = nlp.evaluate(r.u, r.lam_g, r.lam_h, rho, false);
    double viol = 0.0;
    for (Eigen::Index i = 0; i < e.g.size(); ++i) viol = std::max(viol, e.g[i]);
    for (Eigen::Index i = 0; i < e.h.size(); ++i) viol = std::max(viol, std::abs(e.h[i]));
    double compl_res = 0.0;
    for (Eigen::Index i = 0; i < e.g.size(); ++i) {
      r.lam_g[i] = std::max(0.0, r.lam_g[i] + rho * e.g[i]);
      compl_res = std::max(compl_res, std::abs(r.lam_g[i] * e.g[i]));
    }
    r.lam_h += rho * e.h;
    r.kkt = std::max({in.pg, viol, compl_res});
    if (in.pg <= s.kkt_tolerance && viol <= s.constraint_tolerance && compl_res <= s.kkt_tolerance) {
      r.converged = true;
      break;
    }
    rho *= s.penalty_growth;
  }
  return r;
}

// Constant input sequences: the box center and the points halfway from the
// center to each corner.
std::vector<Vec> multistart_guesses(const ShootingNlp& nlp, int N) {
  const Eigen::Index m = nlp.lower().size() / N;
  const Vec lo = nlp.lower().head(m);
  const Vec hi = nlp.upper().head(m);
  const Vec mid = 0.5 * (lo + hi);
  std::vector<Vec> out;
  out.push_back(mid.replicate(N, 1));
  for (Eigen::Index corner = 0; corner < (Eigen::Index{1} << m); ++corner) {
    Vec u = mid;
    for (Eigen::Index i = 0; i < m; ++i) u[i] = 0.5 * (mid[i] + (((corner >> i) & 1) ? hi[i] : lo[i]));
    out.push_back(u.replicate(N, 1));
  }
  return out;
}

}  // namespace

OcpSolution solve_terminal(const TaskSpec& task, const TerminalSpec& terminal, const State& x0, int t,
                           const WarmStart& warm, const SolverSettings& s, double pinned_tolerance,
                           bool throw_on_infeasible_warm) {
  const double start = now_ms();
  const int N = static_cast<int>(warm.inputs.size());
  if (N < 1) throw ContractViolation("solve: warm start is empty");
  check_inputs(task, warm.inputs, x0);
  if (in_unsafe(task, x0)) throw ContractViolation("solve: initial state is unsafe");

  ShootingNlp nlp(task, terminal, x0, t, N, s);
  const Vec warm_u = project(nlp.stack(warm.inputs), nlp.lower(), nlp.upper());

  auto package = [&](const AlResult& r) {
    OcpSolution sol;
    sol.inputs = nlp.unstack(r.u);
    const auto e = nlp.evaluate(r.u, r.lam_g, r.lam_h, 0.0, false);
    sol.states = e.states;
    sol.objective = e.objective;
    sol.status = r.converged ? SolveStatus::Converged : SolveStatus::MaxIter;
    sol.iterations = r.iterations;
    sol.outer_iterations = r.outer;
    sol.kkt_residual = r.kkt;
    sol.residuals = constraint_residuals(task, terminal, sol.states, sol.inputs, s);
    return sol;
  };

  OcpSolution sol = package(augmented_lagrangian(nlp, warm_u, s));
  bool ok = residuals_acceptable(sol.residuals, terminal, s, pinned_tolerance);
  int total_iterations = sol.iterations;
  if (s.multistart) {
    for (const Vec& guess : multistart_guesses(nlp, N)) {
      OcpSolution cand = package(augmented_lagrangian(nlp, guess, s));
      total_iterations += cand.iterations;
      if (!residuals_acceptable(cand.residuals, terminal, s, pinned_tolerance)) continue;
      if (!ok || cand.objective < sol.objective - 1e-12) {
        sol = std::move(cand);
        ok = true;
      }
    }
  }
  sol.iterations = total_iterations;

  if (!ok) {
    const ConstraintResiduals failed = sol.residuals;
    AlResult fallback;
    fallback.u = warm_u;
    fallback.lam_g = Vec::Zero(nlp.num_ineq());
    fallback.lam_h = Vec::Zero(nlp.num_eq());
    const int iterations = sol.iterations;
    sol = package(fallback);
    sol.iterations = iterations;
    sol.status = SolveStatus::InfeasibleFallback;
    if (throw_on_infeasible_warm && !residuals_acceptable(sol.residuals, terminal, s, pinned_tolerance)) {
      std::ostringstream os;
      os << "solve: no feasible solution at t = " << t << " and the warm start is infeasible; solver ("
         << describe(failed) << "); warm start (" << describe(sol.residuals) << ")";
      throw SolverFailure(os.str());
    }
  }
  sol.wall_time_ms = now_ms() - start;
  return sol;
}

OcpSolution solve(const OcpProblem& p, const WarmStart& warm, const SolverSettings& s) {
  if (!p.task || !p.certificate) throw ContractViolation("solve: incomplete problem");
  if (p.horizon != static_cast<int>(warm.inputs.size()))
    throw ContractViolation("solve: warm start length differs from the horizon");
  return solve_terminal(*p.task, TerminalSpec::from_certificate(*p.certificate, p.task->level()), p.x0,
                        p.t, warm, s);
}

WarmStart make_warm_start(const OcpSolution& prev, const Policy& policy, const TaskSpec&) {
  if (prev.inputs.empty()) throw ContractViolation("make_warm_start: empty solution");
  WarmStart w;
  w.origin = WarmStart::Origin::Previous;
  w.inputs.assign(prev.inputs.begin() + 1, prev.inputs.end());
  w.inputs.push_back(policy.action(prev.states.back()));
  return w;
}

WarmStart cold_start(const Policy& policy, const TaskSpec& task, const State& x0, int horizon) {
  WarmStart w;
  w.origin = WarmStart::Origin::Cold;
  State x = x0;
  for (int k = 0; k < horizon; ++k) {
    w.inputs.push_back(policy.action(x));
    x = task.dynamics().step(x, w.inputs.back());
  }
  return w;
}

MpcStep mpc_step(const OcpProblem& problem, const WarmStart& warm, const Policy& policy,
                 const SolverSettings& settings) {
  MpcStep out;
  out.solution = solve(problem, warm, settings);
  out.applied = out.solution.inputs.front();
  out.next = make_warm_start(out.solution, policy, *problem.task);
  return out;
}

}  // namespace ilmpc
