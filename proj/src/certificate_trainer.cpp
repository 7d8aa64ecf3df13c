#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ilmpc/errors.hpp"
#include "ilmpc/trainer.hpp"

namespace ilmpc {

// ---- dataset ---------------------------------------------------------------

std::vector<double> discounted_tails(const TaskSpec& task, const Trajectory& traj) {
  std::vector<double> tails(traj.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = traj.size(); i-- > 0;) {
    acc = task.stage_cost().value(traj.states[i], traj.inputs[i]) + task.discount() * acc;
    tails[i] = acc;
  }
  return tails;
}

void TrajectoryDataset::add_trajectory(int iteration, const Trajectory& traj, const TaskSpec& task,
                                       double dynamics_tolerance) {
  if (traj.states.empty()) throw ContractViolation("add_trajectory: empty trajectory");
  if (traj.states.size() != traj.inputs.size())
    throw ContractViolation("add_trajectory: states and inputs differ in length");
  for (std::size_t t = 0; t < traj.size(); ++t) {
    check_state(task, traj.states[t], "add_trajectory");
    check_input(task, traj.inputs[t], "add_trajectory");
    if (in_unsafe(task, traj.states[t])) {
      std::ostringstream os;
      os << "add_trajectory: state " << t << " of iteration " << iteration << " is unsafe";
      throw SafetyViolation(os.str());
    }
    if (t + 1 < traj.size()) {
      const double err =
          (task.dynamics().step(traj.states[t], traj.inputs[t]) - traj.states[t + 1]).norm();
      if (err > dynamics_tolerance) {
        std::ostringstream os;
        os << "add_trajectory: step " << t << " deviates from the dynamics by " << err;
        throw ContractViolation(os.str());
      }
    }
  }
  TrajectoryRecord rec;
  rec.iteration = iteration;
  rec.states = traj.states;
  rec.inputs = traj.inputs;
  rec.cost_to_go = discounted_tails(task, traj);
  records_.push_back(std::move(rec));
}

void TrajectoryDataset::add_support_points(const std::vector<State>& points, const TaskSpec& task) {
  for (const auto& p : points) {
    check_state(task, p, "add_support_points");
    if (in_unsafe(task, p)) throw SafetyViolation("add_support_points: support point is unsafe");
    support_.push_back(p);
  }
}

std::size_t TrajectoryDataset::num_trajectory_states() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.states.size();
  return n;
}

std::vector<State> TrajectoryDataset::all_states() const {
  std::vector<State> out;
  out.reserve(num_states());
  for (const auto& r : records_) out.insert(out.end(), r.states.begin(), r.states.end());
  out.insert(out.end(), support_.begin(), support_.end());
  return out;
}

DataPairs TrajectoryDataset::pairs() const {
  Eigen::Index count = 0;
  for (const auto& r : records_)
    if (r.states.size() > 1) count += static_cast<Eigen::Index>(r.states.size()) - 1;
  DataPairs p;
  if (records_.empty()) return p;
  const Eigen::Index n = records_.front().states.front().size();
  const Eigen::Index m = records_.front().inputs.front().size();
  p.x.resize(n, count);
  p.u.resize(m, count);
  p.next.resize(n, count);
  p.tail.resize(count);
  Eigen::Index k = 0;
  for (const auto& r : records_)
    for (std::size_t t = 0; t + 1 < r.states.size(); ++t, ++k) {
      p.x.col(k) = r.states[t];
      p.u.col(k) = r.inputs[t];
      p.next.col(k) = r.states[t + 1];
      p.tail[k] = r.cost_to_go[t];
    }
  return p;
}

// ---- regions ---------------------------------------------------------------

bool SampleRegions::is_safe(const TaskSpec& task, const State& x) const {
  if (in_unsafe(task, x)) return false;
  return shape && shape->contains({x[0], x[1]});
}

std::vector<Point2> planar_projection(const std::vector<State>& states) {
  std::vector<Point2> pts;
  pts.reserve(states.size());
  for (const auto& s : states) pts.push_back({s[0], s[1]});
  return pts;
}

double choose_alpha(const TrajectoryDataset& data, double scale, double floor) {
  const auto pts = planar_projection(data.all_states());
  return std::max(scale * AlphaShape::select_alpha(pts), floor);
}

Mat sample_domain(const TaskSpec& task, int count, Rng& rng) {
  const Box& box = task.domain_box();
  Mat X(task.state_dim(), count);
  for (int j = 0; j < count; ++j)
    for (int i = 0; i < task.state_dim(); ++i) X(i, j) = rng.uniform(box.lower[i], box.upper[i]);
  return X;
}

namespace {

std::size_t nearest(const std::vector<Point2>& pts, const Point2& p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = pts[i].x - p.x, dy = pts[i].y - p.y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

SampleRegions construct_regions(const TrajectoryDataset& data, const TaskSpec& task, double alpha,
                                const RegionCounts& counts, Rng& rng) {
  if (data.empty()) throw ContractViolation("construct_regions: empty dataset");
  if (task.state_dim() < 2) throw ContractViolation("construct_regions: needs planar states");
  const auto states = data.all_states();
  const auto pts = planar_projection(states);

  SampleRegions r;
  r.alpha = alpha;
  r.shape = std::make_shared<AlphaShape>(AlphaShape::build(pts, alpha));
  if (r.shape->empty())
    throw DegenerateRegion("alpha shape has empty interior; increase alpha");

  const Box& box = task.domain_box();
  const int n = task.state_dim();
  r.safe.resize(n, counts.safe);
  int filled = 0;
  const long max_attempts = 200L * std::max(counts.safe, 1) + 1000;
  for (long attempt = 0; filled < counts.safe && attempt < max_attempts; ++attempt) {
    const Point2 p = r.shape->sample(rng);
    State x = states[nearest(pts, p)];
    x[0] = p.x;
    x[1] = p.y;
    for (int i = 2; i < n; ++i)
      x[i] = std::clamp(x[i] + rng.uniform(-counts.heading_jitter, counts.heading_jitter),
                        box.lower[i], box.upper[i]);
    if (in_unsafe(task, x)) continue;
    r.safe.col(filled++) = x;
  }
  if (filled < counts.safe)
    throw DegenerateRegion("could not place safe samples inside the alpha shape; increase alpha");

  r.unsafe.resize(n, counts.unsafe);
  filled = 0;
  const auto& obstacles = task.obstacles();
  const int from_obstacles =
      obstacles.empty() ? 0 : static_cast<int>(std::lround(counts.obstacle_fraction * counts.unsafe));
  for (long attempt = 0; filled < from_obstacles && attempt < max_attempts; ++attempt) {
    const Disc& d = obstacles[rng.index(obstacles.size())];
    const double rad = d.radius * std::sqrt(rng.uniform());
    const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
    State x(n);
    x[0] = d.z + rad * std::cos(ang);
    x[1] = d.y + rad * std::sin(ang);
    for (int i = 2; i < n; ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
    if (!box.contains(x)) continue;
    r.unsafe.col(filled++) = x;
  }
  for (long attempt = 0; filled < counts.unsafe && attempt < max_attempts; ++attempt) {
    State x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
    if (r.is_safe(task, x)) continue;
    r.unsafe.col(filled++) = x;
  }
  if (filled < counts.unsafe) throw DegenerateRegion("could not place unsafe samples in the domain");
  return r;
}

// ---- loss ------------------------------------------------------------------

namespace {

struct Transition {
  Mat next;               // n x B
  Vec cost;               // l(x, u)
  Mat cost_grad_u;        // m x B
  std::vector<Mat> jac_u; // df/du per sample
};

Transition propagate(const TaskSpec& task, const Mat& X, const Mat& U, bool need_jacobians) {
  Transition tr;
  const Eigen::Index B = X.cols();
  tr.next.resize(X.rows(), B);
  tr.cost.resize(B);
  tr.cost_grad_u.resize(U.rows(), B);
  if (need_jacobians) tr.jac_u.resize(B);
  Mat A, Bj;
  Vec gx, gu;
  for (Eigen::Index j = 0; j < B; ++j) {
    const State x = X.col(j);
    const Input u = U.col(j);
    tr.next.col(j) = task.dynamics().step(x, u);
    tr.cost[j] = task.stage_cost().value(x, u);
    if (need_jacobians) {
      task.dynamics().jacobians(x, u, A, Bj);
      tr.jac_u[j] = Bj;
      task.stage_cost().gradient(x, u, gx, gu);
      tr.cost_grad_u.col(j) = gu;
    }
  }
  return tr;
}

[[noreturn]] void report_divergence(const char* where, const Mat& X, const Vec& values) {
  std::ostringstream os;
  os << "clbf_loss: non-finite value in " << where;
  for (Eigen::Index j = 0; j < values.size(); ++j)
    if (!std::isfinite(values[j])) {
      os << " at sample " << j << " x = [" << X.col(j).transpose() << "]";
      break;
    }
  throw TrainingDivergence(os.str());
}

}  // namespace

LossResult clbf_loss(const Certificate& cert, const Policy& policy, const Mat& safe, const Mat& unsafe,
                     const DataPairs& pairs, const LossWeights& w, const TaskSpec& task,
                     bool with_gradient) {
  LossResult r;
  r.grad_certificate = Vec::Zero(cert.net().num_params());
  r.grad_policy = Vec::Zero(policy.net().num_params());
  Vec* gc = with_gradient ? &r.grad_certificate : nullptr;
  Vec* gp = with_gradient ? &r.grad_policy : nullptr;
  const double c = w.level;
  const double gamma = w.discount;

  if (!cert.anchored()) {
    CertificateTape tape;
    const Vec vf = cert.evaluate(Mat(task.goal()), tape);
    r.terms.goal = vf[0] * vf[0];
    if (gc) cert.backpropagate(tape, Vec::Constant(1, 2.0 * vf[0]), gc);
  }

  const Eigen::Index ns = safe.cols();
  if (ns > 0) {
    CertificateTape tv, tn;
    PolicyTape tp;
    const Vec V = cert.evaluate(safe, tv);
    const Mat U = policy.actions(safe, &tp);
    const Transition tr = propagate(task, safe, U, with_gradient);
    const Vec Vn = cert.evaluate(tr.next, tn);
    if (!V.allFinite()) report_divergence("V(safe)", safe, V);
    if (!Vn.allFinite()) report_divergence("V(f(safe, pi))", safe, Vn);

    Vec dV = Vec::Zero(ns), dVn = Vec::Zero(ns), dL = Vec::Zero(ns);
    const double inv = 1.0 / static_cast<double>(ns);
    for (Eigen::Index j = 0; j < ns; ++j) {
      if (w.shrink > 0.0) {
        r.terms.shrink += w.shrink * inv * V[j];
        dV[j] += w.shrink * inv;
      }
      const double h1 = V[j] - c + w.margin_level;
      if (h1 > 0.0) {
        r.terms.safe_level += w.a1 * inv * h1;
        dV[j] += w.a1 * inv;
      }
      const double h3 = Vn[j] - V[j] + w.margin_decrease;
      if (h3 > 0.0) {
        r.terms.decrease += w.a3 * inv * h3;
        dVn[j] += w.a3 * inv;
        dV[j] -= w.a3 * inv;
      }
      const double h4 = gamma * Vn[j] - V[j] + tr.cost[j] + w.margin_value;
      if (h4 > 0.0) {
        r.terms.value_decrease += w.a4 * inv * h4;
        dVn[j] += gamma * w.a4 * inv;
        dV[j] -= w.a4 * inv;
        dL[j] += w.a4 * inv;
      }
    }
    if (with_gradient) {
      cert.backpropagate(tv, dV, gc);
      const Mat gnext = cert.backpropagate(tn, dVn, gc);
      Mat dU(U.rows(), ns);
      for (Eigen::Index j = 0; j < ns; ++j)
        dU.col(j) = tr.jac_u[j].transpose() * gnext.col(j) + dL[j] * tr.cost_grad_u.col(j);
      policy.backpropagate(tp, dU, gp);
    }
  }

  const Eigen::Index nu = unsafe.cols();
  if (nu > 0) {
    CertificateTape tu;
    const Vec V = cert.evaluate(unsafe, tu);
    if (!V.allFinite()) report_divergence("V(unsafe)", unsafe, V);
    Vec dV = Vec::Zero(nu);
    const double inv = 1.0 / static_cast<double>(nu);
    for (Eigen::Index j = 0; j < nu; ++j) {
      const double h = c - V[j] + w.margin_level;
      if (h > 0.0) {
        r.terms.unsafe_level += w.a2 * inv * h;
        dV[j] -= w.a2 * inv;
      }
    }
    if (with_gradient) cert.backpropagate(tu, dV, gc);
  }

  const Eigen::Index np = pairs.size();
  if (np > 0) {
    CertificateTape tk, tk1;
    const Vec Vk = cert.evaluate(pairs.x, tk);
    const Vec Vk1 = cert.evaluate(pairs.next, tk1);
    if (!Vk.allFinite()) report_divergence("V(data)", pairs.x, Vk);
    if (!Vk1.allFinite()) report_divergence("V(data next)", pairs.next, Vk1);
    Vec dVk = Vec::Zero(np), dVk1 = Vec::Zero(np);
    const double inv = 1.0 / static_cast<double>(np);
    for (Eigen::Index j = 0; j < np; ++j) {
      const double l = task.stage_cost().value(pairs.x.col(j), pairs.u.col(j));
      const double h = -gamma * Vk1[j] + Vk[j] - l + w.margin_value;
      if (h > 0.0) {
        r.terms.data += w.a5 * inv * h;
        dVk[j] += w.a5 * inv;
        dVk1[j] -= gamma * w.a5 * inv;
      }
      if (w.tail_fit > 0.0 && pairs.tail.size() == np) {
        const double e = Vk[j] - pairs.tail[j];
        r.terms.tail_fit += w.tail_fit * inv * e * e;
        dVk[j] += 2.0 * w.tail_fit * inv * e;
      }
    }
    if (with_gradient) {
      cert.backpropagate(tk, dVk, gc);
      cert.backpropagate(tk1, dVk1, gc);
    }
  }

  r.value = r.terms.goal + r.terms.safe_level + r.terms.unsafe_level + r.terms.decrease +
            r.terms.value_decrease + r.terms.data + r.terms.tail_fit + r.terms.shrink;
  if (!std::isfinite(r.value)) throw TrainingDivergence("clbf_loss: non-finite total loss");
  return r;
}

// ---- validation ------------------------------------------------------------

const char* condition_name(int c) {
  switch (c) {
    case kPositive: return "positive";
    case kSafeLevel: return "safe_level";
    case kUnsafeLevel: return "unsafe_level";
    case kDecrease: return "decrease";
    case kValueDecrease: return "value_decrease";
    case kDataConsistency: return "data_consistency";
    default: return "unknown";
  }
}

double ConditionStats::rate(int c) const {
  return checked[c] ? static_cast<double>(violations[c]) / static_cast<double>(checked[c]) : 0.0;
}

double ConditionStats::overall_rate() const {
  const auto total = samples + pairs;
  return total ? static_cast<double>(samples_violating + pairs_violating) / static_cast<double>(total) : 0.0;
}

namespace {

constexpr double kTiny = 1e-300;

void note(ConditionStats& s, int c, double residual) {
  ++s.checked[c];
  if (residual > 0.0) {
    ++s.violations[c];
    s.worst[c] = std::max(s.worst[c], residual);
  }
}

void check_pairs(const Certificate& cert, const TaskSpec& task, const DataPairs& pairs,
                 ConditionStats& s) {
  if (pairs.size() == 0) return;
  const Vec Vk = cert.values(pairs.x);
  const Vec Vk1 = cert.values(pairs.next);
  for (Eigen::Index j = 0; j < pairs.size(); ++j) {
    const double l = task.stage_cost().value(pairs.x.col(j), pairs.u.col(j));
    const double residual = -(task.discount() * Vk1[j] - Vk[j] + l);
    const auto before = s.violations[kDataConsistency];
    note(s, kDataConsistency, residual);
    ++s.pairs;
    if (s.violations[kDataConsistency] != before) ++s.pairs_violating;
  }
}

}  // namespace

ValidationResult validate_and_mine(const Certificate& cert, const Policy& policy, const TaskSpec& task,
                                   const SampleRegions& regions, int num_samples, Rng& rng,
                                   const DataPairs* pairs) {
  ValidationResult out;
  auto& s = out.stats;
  const double c = cert.level();
  const double gamma = task.discount();
  s.goal_value = cert.value(task.goal());

  const Mat X = sample_domain(task, num_samples, rng);
  const Vec V = cert.values(X);
  const Mat U = policy.actions(X, nullptr);
  const Transition tr = propagate(task, X, U, false);
  const Vec Vn = cert.values(tr.next);

  std::vector<Eigen::Index> cs, cu;
  for (int j = 0; j < num_samples; ++j) {
    const State x = X.col(j);
    const bool safe = regions.is_safe(task, x);
    const auto before = s.violations;
    const bool at_goal = (x - task.goal()).norm() == 0.0;
    // non-strict conditions: a boundary value counts as a violation
    note(s, kPositive, (!at_goal && V[j] <= 0.0) ? std::max(-V[j], kTiny) : -1.0);
    if (safe) {
      note(s, kSafeLevel, V[j] - c);
      note(s, kDecrease, Vn[j] - V[j]);
      note(s, kValueDecrease, gamma * Vn[j] - V[j] + tr.cost[j]);
    } else {
      const double residual = c - V[j];
      note(s, kUnsafeLevel, residual >= 0.0 ? std::max(residual, kTiny) : residual);
    }
    ++s.samples;
    if (s.violations != before) {
      ++s.samples_violating;
      (safe ? cs : cu).push_back(j);
    }
  }
  out.counter_safe.resize(X.rows(), static_cast<Eigen::Index>(cs.size()));
  for (std::size_t k = 0; k < cs.size(); ++k) out.counter_safe.col(k) = X.col(cs[k]);
  out.counter_unsafe.resize(X.rows(), static_cast<Eigen::Index>(cu.size()));
  for (std::size_t k = 0; k < cu.size(); ++k) out.counter_unsafe.col(k) = X.col(cu[k]);

  if (pairs) check_pairs(cert, task, *pairs, s);
  return out;
}

double value_decrease_residual(const Certificate& cert, const Policy& policy, const TaskSpec& task,
                               const State& x) {
  const Input u = policy.action(x);
  const State next = task.dynamics().step(x, u);
  return task.discount() * cert.value(next) - cert.value(x) + task.stage_cost().value(x, u);
}

ViolationBounds estimate_violation_bounds(const Certificate& cert, const Policy& policy,
                                          const DataPairs& pairs, const TaskSpec& task,
                                          int num_samples, Rng& rng) {
  ViolationBounds b;
  const double gamma = task.discount();
  const Mat X = sample_domain(task, num_samples, rng);
  const Vec V = cert.values(X);
  const Mat U = policy.actions(X, nullptr);
  const Transition tr = propagate(task, X, U, false);
  const Vec Vn = cert.values(tr.next);
  for (int j = 0; j < num_samples; ++j)
    b.delta1_max = std::max(b.delta1_max, gamma * Vn[j] - V[j] + tr.cost[j]);
  b.samples = num_samples;

  b.pairs = pairs.size();
  b.empty_dataset = pairs.size() == 0;
  if (!b.empty_dataset) {
    const Vec Vk = cert.values(pairs.x);
    const Vec Vk1 = cert.values(pairs.next);
    for (Eigen::Index j = 0; j < pairs.size(); ++j) {
      const double l = task.stage_cost().value(pairs.x.col(j), pairs.u.col(j));
      b.delta2 = std::max(b.delta2, -(gamma * Vk1[j] - Vk[j] + l));
    }
  }
  return b;
}

ContainmentReport check_containment(const Certificate& prev, const Certificate& next, double level,
                                    const Mat& samples) {
  if (prev.state_dim() != next.state_dim() || samples.rows() != prev.state_dim())
    throw ContractViolation("check_containment: state dimension mismatch");
  ContainmentReport rep;
  const Vec vp = prev.values(samples);
  const Vec vn = next.values(samples);
  rep.total = samples.cols();
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    if (vp[j] <= level) {
      ++rep.inside_prev;
      if (vn[j] > level) ++rep.violations;
    }
  }
  return rep;
}

// ---- training loop ---------------------------------------------------------

namespace {

DataPairs gather(const DataPairs& all, int count, Rng& rng) {
  if (all.size() <= count) return all;
  DataPairs out;
  out.x.resize(all.x.rows(), count);
  out.u.resize(all.u.rows(), count);
  out.next.resize(all.next.rows(), count);
  out.tail.resize(count);
  for (int j = 0; j < count; ++j) {
    const auto k = static_cast<Eigen::Index>(rng.index(all.size()));
    out.x.col(j) = all.x.col(k);
    out.u.col(j) = all.u.col(k);
    out.next.col(j) = all.next.col(k);
    out.tail[j] = all.tail[k];
  }
  return out;
}

// Batch from a base pool and a mined pool. A negative fraction samples the
// union uniformly.
Mat draw_batch(const Mat& base, const Mat& mined, int count, double mined_fraction, Rng& rng) {
  Mat out(base.rows(), count);
  const Eigen::Index nb = base.cols();
  const Eigen::Index nm = mined.cols();
  for (int j = 0; j < count; ++j) {
    bool from_mined;
    if (nm == 0) from_mined = false;
    else if (mined_fraction < 0.0) from_mined = rng.index(static_cast<std::uint64_t>(nb + nm)) >= static_cast<std::uint64_t>(nb);
    else from_mined = rng.uniform() < mined_fraction;
    if (from_mined) out.col(j) = mined.col(static_cast<Eigen::Index>(rng.index(nm)));
    else out.col(j) = base.col(static_cast<Eigen::Index>(rng.index(nb)));
  }
  return out;
}

void add_saturation_penalty(const Policy& policy, const Mat& X, double weight, Vec& grad) {
  if (weight <= 0.0 || X.cols() == 0) return;
  MlpTape tape;
  const Mat raw = policy.net().forward(policy.scaling().apply(X), &tape);
  policy.net().backward(tape, (2.0 * weight / static_cast<double>(X.cols())) * raw, &grad);
}

void append_columns(Mat& pool, const Mat& extra) {
  if (extra.cols() == 0) return;
  const Eigen::Index old = pool.cols();
  pool.conservativeResize(pool.rows(), old + extra.cols());
  pool.rightCols(extra.cols()) = extra;
}

}  // namespace

TrainResult train_certificate(const TrajectoryDataset& data, const TaskSpec& task,
                              const TrainerConfig& cfg, const LossWeights& weights,
                              const Certificate* prev_cert, const Policy* prev_policy,
                              double alpha_floor) {
  if (data.empty()) throw ContractViolation("train_certificate: empty dataset");
  if (cfg.validation_interval < 1) throw ConfigError("trainer.k_val", "must be >= 1");
  if (cfg.validation_samples < 1) throw ConfigError("trainer.n_test", "must be >= 1");
  if (data.num_states() < 3) throw DegenerateRegion("train_certificate: fewer than three data points");

  Rng rng(cfg.seed);
  Rng region_rng = rng.split();
  Rng init_rng = rng.split();
  Rng batch_rng = rng.split();
  Rng val_rng = rng.split();
  Rng final_rng = rng.split();

  TrainResult res;
  res.alpha = cfg.alpha > 0.0 ? std::max(cfg.alpha, alpha_floor)
                              : choose_alpha(data, cfg.alpha_scale, alpha_floor);
  SampleRegions regions = construct_regions(data, task, res.alpha, cfg.counts, region_rng);
  res.shape = regions.shape;

  const InputScaling scaling = cfg.scale_inputs ? InputScaling::from_box(task.domain_box())
                                                : InputScaling::identity(task.state_dim());
  const State goal = task.goal();
  Certificate cert = Certificate::random(task.state_dim(), cfg.certificate_hidden,
                                         cfg.certificate_output, weights.level, scaling,
                                         cfg.anchor_goal ? &goal : nullptr, init_rng);
  Policy policy = Policy::random(task.state_dim(), cfg.policy_hidden, task.input_box(), scaling, init_rng);
  if (prev_cert) {
    if (prev_cert->net().layer_sizes() != cert.net().layer_sizes())
      throw ContractViolation("train_certificate: previous certificate has a different architecture");
    cert.net().params() = prev_cert->net().params();
  }
  if (prev_policy) {
    if (prev_policy->net().layer_sizes() != policy.net().layer_sizes())
      throw ContractViolation("train_certificate: previous policy has a different architecture");
    policy.net().params() = prev_policy->net().params();
  }

  Optimizer opt_cert(cfg.optimizer, cert.net().num_params());
  Optimizer opt_policy(cfg.optimizer, policy.net().num_params());
  Mat safe_pool = regions.safe;
  Mat unsafe_pool = regions.unsafe;
  if (cfg.data_in_safe_batch) {
    const auto& recs = data.trajectories();
    for (const auto& rec : recs) {
      Mat states(task.state_dim(), static_cast<Eigen::Index>(rec.states.size()));
      for (std::size_t t = 0; t < rec.states.size(); ++t)
        states.col(static_cast<Eigen::Index>(t)) = rec.states[t];
      append_columns(safe_pool, states);
    }
  }
  Mat safe_mined(task.state_dim(), 0);
  Mat unsafe_mined(task.state_dim(), 0);
  const DataPairs pairs = data.pairs();

  double running = 0.0;
  for (int k = 1; k <= cfg.iterations; ++k) {
    const Mat bs = draw_batch(safe_pool, safe_mined, cfg.batch_safe, cfg.mined_fraction, batch_rng);
    const Mat bu = draw_batch(unsafe_pool, unsafe_mined, cfg.batch_unsafe, cfg.mined_fraction, batch_rng);
    const DataPairs bp = gather(pairs, cfg.batch_pairs, batch_rng);
    LossResult loss = clbf_loss(cert, policy, bs, bu, bp, weights, task, true);
    add_saturation_penalty(policy, bs, cfg.policy_saturation_penalty, loss.grad_policy);
    running += loss.value;
    const bool ok_c = opt_cert.step(cert.net().params(), loss.grad_certificate);
    const bool ok_p = opt_policy.step(policy.net().params(), loss.grad_policy);
    if (!ok_c || !ok_p) {
      std::ostringstream os;
      os << "train_certificate: non-finite gradient at step " << k << " (loss " << loss.value << ")";
      throw TrainingDivergence(os.str());
    }
    if (k % cfg.validation_interval == 0) {
      res.loss_history.push_back(running / cfg.validation_interval);
      running = 0.0;
      const ValidationResult val =
          validate_and_mine(cert, policy, task, regions, cfg.validation_samples, val_rng, nullptr);
      append_columns(safe_mined, val.counter_safe);
      append_columns(unsafe_mined, val.counter_unsafe);
      res.mined += val.counter_safe.cols() + val.counter_unsafe.cols();
    }
  }

  res.safe_samples = safe_pool.cols() + safe_mined.cols();
  res.unsafe_samples = unsafe_pool.cols() + unsafe_mined.cols();
  res.bounds = estimate_violation_bounds(cert, policy, pairs, task, cfg.validation_samples, final_rng);
  res.final_stats =
      validate_and_mine(cert, policy, task, regions, cfg.final_validation_samples, final_rng, &pairs).stats;
  res.certificate = std::move(cert);
  res.policy = std::move(policy);
  return res;
}

}  // namespace ilmpc
