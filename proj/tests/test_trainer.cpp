#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ilmpc/errors.hpp"
#include "ilmpc/trainer.hpp"

using namespace ilmpc;

namespace {

Vec v3(double a, double b, double c) {
  Vec x(3);
  x << a, b, c;
  return x;
}

// V == value everywhere (unanchored, bias only)
Certificate constant_certificate(double value) {
  Mlp net({3, 4, 1});
  net.bias(1)[0] = std::sqrt(value);
  return Certificate(net, 7.0, InputScaling::identity(3));
}

Policy zero_policy(const TaskSpec& task) {
  return Policy(Mlp({3, 16, 16, 2}), task.input_box(), InputScaling::identity(3));
}

TaskSpec open_task() {
  TaskParams p = make_dubins_benchmark().params();
  p.obstacles.clear();
  return TaskSpec(p);
}

TrajectoryDataset corner_dataset(const TaskSpec& task) {
  TrajectoryDataset d;
  const Box& b = task.domain_box();
  d.add_support_points({v3(b.lower[0], b.lower[1], 0), v3(b.upper[0], b.lower[1], 0),
                        v3(b.upper[0], b.upper[1], 0), v3(b.lower[0], b.upper[1], 0)},
                       task);
  return d;
}

Trajectory straight_run(const TaskSpec& task, State x, double v, int steps) {
  Trajectory t;
  for (int k = 0; k < steps; ++k) {
    Vec u(2);
    u << v, 0.0;
    t.states.push_back(x);
    t.inputs.push_back(u);
    x = step(task, x, u);
  }
  return t;
}

double vec_rel_err(const Vec& a, const Vec& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return scale > 0.0 ? (a - b).cwiseAbs().maxCoeff() / scale : 0.0;
}

// Drops samples with a hinge argument within `gap` of its kink.
Mat away_from_kinks(const Certificate& cert, const Policy& pol, const TaskSpec& task, const Mat& X,
                    const LossWeights& w, bool safe, double gap) {
  Mat out(X.rows(), 0);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const State x = X.col(j);
    const double V = cert.value(x);
    bool keep;
    if (safe) {
      const Input u = pol.action(x);
      const double Vn = cert.value(step(task, x, u));
      keep = std::abs(V - w.level) > gap && std::abs(Vn - V) > gap &&
             std::abs(w.discount * Vn - V + stage_cost(task, x, u)) > gap;
    } else {
      keep = std::abs(w.level - V) > gap;
    }
    if (keep) {
      out.conservativeResize(Eigen::NoChange, out.cols() + 1);
      out.col(out.cols() - 1) = x;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("dataset bookkeeping") {
  const TaskSpec task = make_dubins_benchmark();
  TrajectoryDataset d;
  const Trajectory t = straight_run(task, v3(2, 3, 0), 1.0, 5);
  d.add_trajectory(0, t, task);
  CHECK(d.num_trajectory_states() == 5);
  const DataPairs p = d.pairs();
  CHECK(p.size() == 4);
  CHECK((p.next.col(0) - t.states[1]).norm() == 0.0);
  const auto tails = discounted_tails(task, t);
  CHECK(tails.back() == doctest::Approx(stage_cost(task, t.states.back(), t.inputs.back())));
  CHECK(tails[3] == doctest::Approx(stage_cost(task, t.states[3], t.inputs[3]) + 0.8 * tails[4]));
  CHECK(p.tail[0] == tails[0]);

  Trajectory bad = t;
  bad.states[2][0] += 0.1;
  CHECK_THROWS_AS(d.add_trajectory(1, bad, task), ContractViolation);
  Trajectory unsafe = straight_run(task, v3(-1.5, 0, 0), 2.0, 10);
  CHECK_THROWS_AS(d.add_trajectory(1, unsafe, task), SafetyViolation);
  CHECK_THROWS_AS(d.add_support_points({v3(0, 0, 0)}, task), SafetyViolation);
}

TEST_CASE("loss of a zero certificate is the level") {
  const TaskSpec task = make_dubins_benchmark();
  const Certificate zero(Mlp({3, 8, 1}), 7.0, InputScaling::identity(3));
  const Policy pol = zero_policy(task);
  Rng rng(1);
  const Mat unsafe = sample_domain(task, 50, rng);
  const LossWeights w;
  const LossResult r = clbf_loss(zero, pol, Mat(3, 0), unsafe, DataPairs{}, w, task);
  CHECK(r.value == doctest::Approx(7.0));
  CHECK(r.terms.unsafe_level == doctest::Approx(7.0));

  // with safe samples only the value-decrease hinge adds the mean stage cost
  const Mat safe = sample_domain(task, 40, rng);
  double mean_l = 0.0;
  for (int j = 0; j < 40; ++j) mean_l += stage_cost(task, safe.col(j), pol.action(safe.col(j))) / 40;
  const LossResult r2 = clbf_loss(zero, pol, safe, unsafe, DataPairs{}, w, task);
  CHECK(r2.value == doctest::Approx(7.0 + mean_l));
}

TEST_CASE("loss reduces to the goal term when every hinge is slack") {
  const TaskSpec task = make_dubins_benchmark();
  const Certificate c = constant_certificate(1.0);
  const Policy pol = zero_policy(task);
  Rng rng(2);
  Mat safe(3, 30);
  for (int j = 0; j < 30; ++j) safe.col(j) = v3(rng.uniform(3, 7), rng.uniform(-2, 2), rng.uniform(-1, 1));
  const LossResult r = clbf_loss(c, pol, safe, Mat(3, 0), DataPairs{}, LossWeights{}, task);
  CHECK(r.value == doctest::Approx(1.0));
  CHECK(r.terms.goal == doctest::Approx(1.0));
}

TEST_CASE("loss is nonnegative") {
  const TaskSpec task = make_dubins_benchmark();
  Rng rng(3);
  const State goal = task.goal();
  for (int k = 0; k < 10; ++k) {
    const Certificate c = Certificate::random(3, {32, 32}, 2, 7.0, InputScaling::from_box(task.domain_box()),
                                              k % 2 ? &goal : nullptr, rng);
    const Policy p = Policy::random(3, {16, 16}, task.input_box(), InputScaling::from_box(task.domain_box()), rng);
    TrajectoryDataset d;
    d.add_trajectory(0, straight_run(task, v3(2, 3, 0), 1.5, 20), task);
    const LossResult r = clbf_loss(c, p, sample_domain(task, 64, rng), sample_domain(task, 64, rng), d.pairs(),
                                   LossWeights{}, task, false);
    CHECK(r.value >= 0.0);
  }
}

TEST_CASE("loss gradients match central differences") {
  const TaskSpec task = make_dubins_benchmark();
  const InputScaling scaling = InputScaling::from_box(task.domain_box());
  const State goal = task.goal();
  Rng rng(4);
  LossWeights w;
  w.margin_level = 0.05;
  w.margin_decrease = 1e-3;
  w.margin_value = 1e-3;
  w.tail_fit = 2.0;
  w.shrink = 0.3;
  TrajectoryDataset d;
  d.add_trajectory(0, straight_run(task, v3(2, 3, 0.2), 1.5, 30), task);
  const DataPairs pairs = d.pairs();
  for (int k = 0; k < 10; ++k) {
    Certificate c = Certificate::random(3, {32, 32}, 1 + k % 3, 7.0, scaling, k % 2 ? &goal : nullptr, rng);
    Policy p = Policy::random(3, {16, 16}, task.input_box(), scaling, rng);
    // scale V into the range where every hinge is active somewhere
    c.net().weight(c.net().num_layers() - 1) *= 3.0;
    const Mat safe = away_from_kinks(c, p, task, sample_domain(task, 60, rng), w, true, 1e-3);
    const Mat unsafe = away_from_kinks(c, p, task, sample_domain(task, 60, rng), w, false, 1e-3);
    const LossResult r = clbf_loss(c, p, safe, unsafe, pairs, w, task, true);

    const double h = 1e-6;
    Vec fd_c(c.net().num_params()), fd_p(p.net().num_params());
    for (Eigen::Index i = 0; i < fd_c.size(); ++i) {
      const double keep = c.net().params()[i];
      c.net().params()[i] = keep + h;
      const double up = clbf_loss(c, p, safe, unsafe, pairs, w, task, false).value;
      c.net().params()[i] = keep - h;
      const double dn = clbf_loss(c, p, safe, unsafe, pairs, w, task, false).value;
      c.net().params()[i] = keep;
      fd_c[i] = (up - dn) / (2 * h);
    }
    for (Eigen::Index i = 0; i < fd_p.size(); ++i) {
      const double keep = p.net().params()[i];
      p.net().params()[i] = keep + h;
      const double up = clbf_loss(c, p, safe, unsafe, pairs, w, task, false).value;
      p.net().params()[i] = keep - h;
      const double dn = clbf_loss(c, p, safe, unsafe, pairs, w, task, false).value;
      p.net().params()[i] = keep;
      fd_p[i] = (up - dn) / (2 * h);
    }
    CHECK(vec_rel_err(r.grad_certificate, fd_c) <= 1e-5);
    CHECK(vec_rel_err(r.grad_policy, fd_p) <= 1e-5);
  }
}

TEST_CASE("regions from a band far from the obstacle") {
  const TaskSpec task = make_dubins_benchmark();
  TrajectoryDataset d;
  d.add_trajectory(0, straight_run(task, v3(-6, 4, 0), 1.0, 60), task);
  std::vector<State> band;
  for (double z = -6; z <= 0; z += 0.5) band.push_back(v3(z, 5, 0));
  d.add_support_points(band, task);
  Rng rng(5);
  RegionCounts counts;
  counts.safe = 100;
  counts.unsafe = 100;
  const SampleRegions r = construct_regions(d, task, 2.0, counts, rng);
  REQUIRE(r.safe.cols() == 100);
  REQUIRE(r.unsafe.cols() == 100);
  for (int j = 0; j < 100; ++j) {
    CHECK_FALSE(in_unsafe(task, r.safe.col(j)));
    CHECK(r.is_safe(task, r.safe.col(j)));
    CHECK_FALSE(r.is_safe(task, r.unsafe.col(j)));
  }
}

TEST_CASE("regions around the obstacle exclude the disc") {
  const TaskSpec task = make_dubins_benchmark();
  TrajectoryDataset d;
  std::vector<State> loop;
  for (double s = -2; s <= 2; s += 0.25) {
    loop.push_back(v3(s, -2, 0));
    loop.push_back(v3(s, 2, 0));
    loop.push_back(v3(-2, s, 0));
    loop.push_back(v3(2, s, 0));
  }
  d.add_support_points(loop, task);
  Rng rng(6);
  RegionCounts counts;
  counts.safe = 2000;
  counts.unsafe = 500;
  const SampleRegions r = construct_regions(d, task, 1e9, counts, rng);
  CHECK(r.shape->contains({0, 0}));
  CHECK_FALSE(r.is_safe(task, v3(0, 0, 0)));
  for (int j = 0; j < r.safe.cols(); ++j) CHECK(std::hypot(r.safe(0, j), r.safe(1, j)) > 1.0);
  int in_disc = 0;
  for (int j = 0; j < r.unsafe.cols(); ++j) in_disc += std::hypot(r.unsafe(0, j), r.unsafe(1, j)) <= 1.0;
  CHECK(in_disc >= 125);
}

TEST_CASE("mining") {
  const TaskSpec task = make_dubins_benchmark();
  TrajectoryDataset d;
  d.add_trajectory(0, straight_run(task, v3(-6, 4, 0), 1.0, 60), task);
  d.add_support_points({v3(-6, 6, 0), v3(0, 6, 0)}, task);
  Rng rng(7);
  RegionCounts counts;
  counts.safe = 50;
  counts.unsafe = 50;
  const SampleRegions r = construct_regions(d, task, 1e9, counts, rng);

  SUBCASE("zero certificate violates the level on every unsafe sample") {
    const Certificate zero(Mlp({3, 8, 1}), 7.0, InputScaling::identity(3));
    const ValidationResult v = validate_and_mine(zero, zero_policy(task), task, r, 2000, rng);
    CHECK(v.stats.violations[kUnsafeLevel] == v.stats.checked[kUnsafeLevel]);
    CHECK(v.stats.checked[kUnsafeLevel] > 0);
    CHECK(v.counter_unsafe.cols() == v.stats.checked[kUnsafeLevel]);
  }
  SUBCASE("every counterexample is routed to exactly one side") {
    const State goal = task.goal();
    const Certificate c = Certificate::random(3, {32, 32}, 1, 7.0, InputScaling::from_box(task.domain_box()),
                                              &goal, rng);
    const ValidationResult v = validate_and_mine(c, zero_policy(task), task, r, 3000, rng);
    for (int j = 0; j < v.counter_safe.cols(); ++j) CHECK(r.is_safe(task, v.counter_safe.col(j)));
    for (int j = 0; j < v.counter_unsafe.cols(); ++j) CHECK_FALSE(r.is_safe(task, v.counter_unsafe.col(j)));
    CHECK(v.counter_safe.cols() + v.counter_unsafe.cols() == v.stats.samples_violating);
  }
}

TEST_CASE("a certificate meeting every condition mines nothing") {
  const TaskSpec task = open_task();
  const TrajectoryDataset d = corner_dataset(task);
  Rng rng(8);
  RegionCounts counts;
  counts.safe = 20;
  counts.unsafe = 0;
  const SampleRegions r = construct_regions(d, task, 1e9, counts, rng);
  const ValidationResult v = validate_and_mine(constant_certificate(2.0), zero_policy(task), task, r, 5000, rng);
  CHECK(v.stats.samples_violating == 0);
  CHECK(v.counter_safe.cols() == 0);
  CHECK(v.counter_unsafe.cols() == 0);
}

TEST_CASE("violation bounds") {
  const TaskSpec task = make_dubins_benchmark();
  const Policy pol = zero_policy(task);
  Rng rng(9);
  const ViolationBounds none = estimate_violation_bounds(constant_certificate(2.0), pol, DataPairs{}, task, 1000, rng);
  CHECK(none.delta1_max == 0.0);
  CHECK(none.delta2 == 0.0);
  CHECK(none.empty_dataset);

  // constant V = b: residual l(x) - 0.2 b, checked against direct evaluation
  const double b = 0.5;
  Rng a(10), a2(10);
  const ViolationBounds vb = estimate_violation_bounds(constant_certificate(b), pol, DataPairs{}, task, 500, a);
  const Mat X = sample_domain(task, 500, a2);
  double expect = 0.0;
  for (int j = 0; j < 500; ++j) expect = std::max(expect, stage_cost(task, X.col(j), Vec::Zero(2)) - 0.2 * b);
  CHECK(vb.delta1_max == doctest::Approx(expect).epsilon(1e-12));

  // recorded pairs under constant V: -(0.8 b - b + l) = 0.2 b - l
  TrajectoryDataset d;
  const Trajectory t = straight_run(task, v3(2, 3, 0), 1.0, 10);
  d.add_trajectory(0, t, task);
  const ViolationBounds vp = estimate_violation_bounds(constant_certificate(b), pol, d.pairs(), task, 10, rng);
  double lmin = 1e9;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) lmin = std::min(lmin, stage_cost(task, t.states[k], t.inputs[k]));
  CHECK(vp.delta2 == doctest::Approx(0.2 * b - lmin));

  Rng s1(11), s2(11);
  const State goal = task.goal();
  Rng init(12);
  const Certificate c = Certificate::random(3, {32, 32}, 2, 7.0, InputScaling::from_box(task.domain_box()), &goal, init);
  const ViolationBounds r1 = estimate_violation_bounds(c, pol, d.pairs(), task, 2000, s1);
  const ViolationBounds r2 = estimate_violation_bounds(c, pol, d.pairs(), task, 2000, s2);
  CHECK(r1.delta1_max == r2.delta1_max);
  CHECK(r1.delta2 == r2.delta2);
}

TEST_CASE("containment") {
  const TaskSpec task = make_dubins_benchmark();
  Rng rng(13);
  const State goal = task.goal();
  const Certificate c = Certificate::random(3, {32, 32}, 2, 7.0, InputScaling::from_box(task.domain_box()), &goal, rng);
  const Mat X = sample_domain(task, 4000, rng);
  CHECK(check_containment(c, c, 7.0, X).fraction() == 0.0);

  Certificate twice = c;
  const int last = twice.net().num_layers() - 1;
  twice.net().weight(last) *= std::sqrt(2.0);
  twice.net().bias(last) *= std::sqrt(2.0);
  const Vec vp = c.values(X);
  const double level = 0.9 * vp.maxCoeff();
  Mat band(3, 0);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (vp[j] > level / 2 && vp[j] <= level) {
      band.conservativeResize(Eigen::NoChange, band.cols() + 1);
      band.col(band.cols() - 1) = X.col(j);
    }
  REQUIRE(band.cols() > 0);
  CHECK(check_containment(c, twice, level, band).fraction() == doctest::Approx(1.0));
}

TEST_CASE("training rejects tiny datasets") {
  const TaskSpec task = make_dubins_benchmark();
  TrajectoryDataset d;
  d.add_support_points({v3(3, 3, 0), v3(4, 3, 0)}, task);
  CHECK_THROWS_AS(train_certificate(d, task, TrainerConfig{}, LossWeights{}), DegenerateRegion);
}

TEST_CASE("short training run is reproducible and warm starts") {
  const TaskSpec task = make_dubins_benchmark();
  TrajectoryDataset d;
  d.add_trajectory(0, straight_run(task, v3(2, 2, 0), 1.0, 40), task);
  std::vector<State> band;
  for (double z = 2; z <= 6; z += 0.5) band.push_back(v3(z, 3, 0));
  d.add_support_points(band, task);
  TrainerConfig cfg;
  cfg.iterations = 300;
  cfg.validation_interval = 50;
  cfg.validation_samples = 500;
  cfg.final_validation_samples = 500;
  cfg.counts.safe = 300;
  cfg.counts.unsafe = 300;
  cfg.batch_safe = cfg.batch_unsafe = cfg.batch_pairs = 32;
  const TrainResult a = train_certificate(d, task, cfg, LossWeights{});
  const TrainResult b = train_certificate(d, task, cfg, LossWeights{});
  CHECK((a.certificate.net().params().array() == b.certificate.net().params().array()).all());
  CHECK(a.bounds.delta1_max == b.bounds.delta1_max);
  CHECK(a.certificate.value(task.goal()) == 0.0);
  CHECK(a.loss_history.size() == 6);

  // warm start begins where the previous run ended
  TrainerConfig warm = cfg;
  warm.iterations = 100;
  warm.validation_interval = 10;
  const TrainResult c = train_certificate(d, task, warm, LossWeights{}, &a.certificate, &a.policy);
  CHECK(c.loss_history.front() < a.loss_history.front());
}
