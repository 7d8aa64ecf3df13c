#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "ilmpc/baseline.hpp"
#include "ilmpc/errors.hpp"
#include "ilmpc/io.hpp"

using namespace ilmpc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunRecord {
  std::string name;
  fs::path dir;
  std::uint64_t seed = 0;
  std::optional<std::string> error;  // what(), when the run threw
  std::string error_kind;
  std::optional<double> seconds;
};

std::string fmt(double v, int p = 4) {
  std::ostringstream os;
  os << std::setprecision(p) << v;
  return os.str();
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double vec_rel_err(const Vec& a, const Vec& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return scale > 0.0 ? (a - b).cwiseAbs().maxCoeff() / scale : 0.0;
}

bool run_complete(const fs::path& dir, int iterations) {
  if (!fs::exists(dir / "summary.csv")) return false;
  return read_summary_csv((dir / "summary.csv").string()).size() == static_cast<std::size_t>(iterations + 1);
}

RunRecord proposed_run(const RunConfig& base, const fs::path& work, const std::string& name, std::uint64_t seed,
                       bool reuse) {
  RunRecord r;
  r.name = name;
  r.dir = work / name;
  r.seed = seed;
  if (reuse && run_complete(r.dir, base.iterations)) {
    if (fs::exists(r.dir / "elapsed_seconds.txt")) r.seconds = std::stod(read_all(r.dir / "elapsed_seconds.txt"));
    std::cout << "reusing " << r.dir.string() << "\n" << std::flush;
    return r;
  }
  fs::remove_all(r.dir);
  RunConfig c = base;
  c.seed = seed;
  c.output_dir = r.dir.string();
  std::cout << "running " << name << " (seed " << seed << ")\n" << std::flush;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    run_all(c);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(r.dir / "elapsed_seconds.txt") << format_double(*r.seconds) << "\n";
  } catch (const SafetyViolation& e) {
    r.error = e.what();
    r.error_kind = "safety_violation";
  } catch (const std::exception& e) {
    r.error = e.what();
    r.error_kind = "error";
  }
  if (r.error) std::cout << name << " failed: " << r.error->substr(0, 300) << "\n" << std::flush;
  return r;
}

// Mean per-step solve time of the baseline with every stored state as a
// terminal candidate. The first iteration has the smallest safe set, so it is
// the cheapest one the baseline ever solves.
std::optional<double> baseline_all_mean_ms(const RunConfig& base, const fs::path& work, bool reuse,
                                           std::string& note) {
  const fs::path dir = work / "baseline_all";
  const fs::path log = dir / "baseline_iteration_1.csv";
  if (!(reuse && fs::exists(log))) {
    fs::remove_all(dir);
    RunConfig c = base;
    c.output_dir = dir.string();
    c.baseline.candidates = 0;
    std::cout << "running baseline with every stored state as a candidate\n" << std::flush;
    try {
      baseline_run(c, initial_trajectory(c), 1);
    } catch (const std::exception& e) {
      note = std::string("baseline failed: ") + e.what();
      return std::nullopt;
    }
  }
  std::vector<StepLog> steps;
  try {
    steps = read_iteration_log(log.string());
  } catch (const std::exception& e) {
    note = e.what();
    return std::nullopt;
  }
  if (steps.empty()) return note = "empty baseline log", std::nullopt;
  double total = 0.0;
  for (const auto& s : steps) total += s.wall_time_ms;
  note = std::to_string(steps.size()) + " baseline steps, " + std::to_string(steps.front().candidates) +
         " candidates per step";
  return total / static_cast<double>(steps.size());
}

std::map<int, std::vector<State>> states_by_iteration(const fs::path& dir) {
  std::map<int, std::vector<State>> out;
  const TrajectoryDataset d = load_dataset((dir / "dataset.jsonl").string());
  for (const auto& r : d.trajectories())
    for (const auto& x : r.states) out[r.iteration].push_back(x);
  return out;
}

// ---- criteria --------------------------------------------------------------

Outcome cost_improvement(const RunRecord& run, int iterations) {
  Outcome o{1, "cost improvement"};
  if (run.error) return o.detail = "run failed: " + run.error_kind, o;
  const auto rows = read_summary_csv((run.dir / "summary.csv").string());
  const double ratio = rows.back().cumulative_cost / rows.front().cumulative_cost;
  const double disc_ratio = rows.back().cost / rows.front().cost;
  bool slack = true;
  std::ostringstream os;
  for (std::size_t j = 1; j < rows.size(); ++j) {
    slack = slack && rows[j].slack_ok == 1;
    os << " J" << j << "=" << fmt(rows[j].cost, 6) << "<=" << fmt(rows[j - 1].cost + rows[j].slack, 6);
  }
  const bool budget = !run.seconds || *run.seconds <= 7200.0;
  o.pass = ratio <= 0.65 && slack && budget && static_cast<int>(rows.size()) == iterations + 1;
  o.detail = "cost " + fmt(rows.front().cumulative_cost) + " -> " + fmt(rows.back().cumulative_cost) + " (ratio " +
             fmt(ratio, 3) + ", limit 0.65); discounted " + fmt(rows.front().cost) + " -> " +
             fmt(rows.back().cost) + " (ratio " + fmt(disc_ratio, 3) + "); slack inequalities " +
             (slack ? "hold" : "violated") + ":" + os.str() + "; wall time " +
             (run.seconds ? fmt(*run.seconds, 4) + " s" : std::string("not measured (reused)"));
  return o;
}

Outcome safety(const std::vector<RunRecord>& runs, const TaskSpec& task) {
  Outcome o{2, "safety"};
  o.pass = true;
  std::ostringstream os;
  for (const auto& r : runs) {
    if (r.error) {
      o.pass = false;
      os << r.name << ": run failed (" << r.error_kind << "); ";
      continue;
    }
    std::size_t n = 0, inside = 0;
    for (const auto& [j, xs] : states_by_iteration(r.dir))
      for (const auto& x : xs) {
        ++n;
        if (in_obstacle(task, x)) ++inside;
      }
    if (inside > 0) o.pass = false;
    os << r.name << ": " << inside << " of " << n << " states inside the obstacle; ";
  }
  o.detail = os.str();
  return o;
}

Outcome convergence(const std::vector<RunRecord>& runs) {
  Outcome o{3, "convergence"};
  o.pass = true;
  std::ostringstream os;
  for (const auto& r : runs) {
    if (r.error) {
      o.pass = false;
      os << r.name << ": run failed; ";
      continue;
    }
    const auto rows = read_summary_csv((r.dir / "summary.csv").string());
    os << r.name << ":";
    for (std::size_t j = 1; j < rows.size(); ++j) {
      os << " " << fmt(rows[j].final_error, 3);
      if (!(rows[j].final_error <= 1e-2)) o.pass = false;
    }
    os << "; ";
  }
  o.detail = "final errors per iteration (limit 0.01) " + os.str();
  return o;
}

Outcome speed_gap(const RunRecord& run, std::optional<double> baseline_ms, const std::string& note) {
  Outcome o{4, "online speed gap"};
  if (run.error) return o.detail = "run failed", o;
  if (!baseline_ms) return o.detail = note, o;
  const auto rows = read_timing_csv((run.dir / "timing.csv").string());
  double total = 0.0;
  int steps = 0;
  double worst_mean = 0.0;
  const auto summary = read_summary_csv((run.dir / "summary.csv").string());
  for (std::size_t j = 1; j < rows.size(); ++j) {
    total += rows[j].total_ms.value_or(0.0);
    steps += summary[j].steps;
    worst_mean = std::max(worst_mean, rows[j].mean_ms.value_or(0.0));
  }
  const double mean = total / std::max(1, steps);
  o.pass = mean <= *baseline_ms / 10.0 && mean <= 100.0;
  o.detail = "proposed " + fmt(mean) + " ms/step (worst iteration " + fmt(worst_mean) + "), baseline " +
             fmt(*baseline_ms) + " ms/step (" + note + "), ratio " + fmt(*baseline_ms / mean, 3);
  return o;
}

Outcome ocp_oracle(const RunRecord& run, const RunConfig& cfg) {
  Outcome o{5, "OCP oracle equivalence"};
  if (run.error || !fs::exists(run.dir / "cert_1.params")) return o.detail = "no trained certificate", o;
  const Certificate cert = load_certificate((run.dir / "cert_1.params").string());
  const TaskSpec task = cfg.task->with_horizon(2);
  const TerminalSpec term = TerminalSpec::from_certificate(cert, task.level());
  const Box& box = task.domain_box();
  const Box& ubox = task.input_box();
  Rng rng(2024);
  double worst = -std::numeric_limits<double>::infinity();
  int checked = 0;
  while (checked < 20) {
    State x(3);
    x << rng.uniform(box.lower[0], box.upper[0]), rng.uniform(box.lower[1], box.upper[1]),
        rng.uniform(-M_PI, M_PI);
    if (in_unsafe(task, x) || cert.value(x) > task.level()) continue;
    double grid = std::numeric_limits<double>::infinity();
    std::vector<Input> u(2, Input::Zero(2));
    for (int a = 0; a < 81; ++a)
      for (int b = 0; b < 81; ++b) {
        const int idx[4] = {a / 9, a % 9, b / 9, b % 9};
        for (int k = 0; k < 2; ++k)
          for (int d = 0; d < 2; ++d)
            u[k][d] = ubox.lower[d] + (ubox.upper[d] - ubox.lower[d]) * idx[2 * k + d] / 8.0;
        const OcpSolution e = evaluate_plan(task, term, x, 0, u, cfg.solver);
        if (residuals_acceptable(e.residuals, term, cfg.solver)) grid = std::min(grid, e.objective);
      }
    WarmStart still;
    still.inputs.assign(2, Input::Zero(2));
    const OcpSolution s = solve(OcpProblem{&task, &cert, x, 0, 2}, still, cfg.solver);
    if (!residuals_acceptable(s.residuals, term, cfg.solver)) worst = std::numeric_limits<double>::infinity();
    worst = std::max(worst, s.objective - grid);
    ++checked;
  }
  o.pass = worst <= 1e-4;
  o.detail = "20 states, worst (solver - grid best) = " + fmt(worst, 3) + " (limit 1e-4)";
  return o;
}

double mlp_suite(Rng& rng) {
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Mlp net = Mlp::random({3, 32, 32, 1 + k % 3}, rng);
    Mat X(3, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-2, 2);
    Mat up(net.output_size(), 2);
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.uniform(-1, 1);
    MlpTape tape;
    net.forward(X, &tape);
    Vec pg = Vec::Zero(net.num_params());
    const Mat gx = net.backward(tape, up, &pg);
    auto total = [&](const Mat& in) { return (up.array() * net.forward(in, nullptr).array()).sum(); };
    const double h = 1e-6;
    Vec fd(net.num_params());
    for (Eigen::Index p = 0; p < fd.size(); ++p) {
      const double keep = net.params()[p];
      net.params()[p] = keep + h;
      const double a = total(X);
      net.params()[p] = keep - h;
      const double b = total(X);
      net.params()[p] = keep;
      fd[p] = (a - b) / (2 * h);
    }
    Mat fx(3, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) {
      Mat Xp = X, Xm = X;
      Xp.data()[i] += h;
      Xm.data()[i] -= h;
      fx.data()[i] = (total(Xp) - total(Xm)) / (2 * h);
    }
    worst = std::max({worst, vec_rel_err(pg, fd), vec_rel_err(gx.reshaped(), fx.reshaped())});
  }
  return worst;
}

// Keeps samples whose hinge arguments are all at least `gap` from their kinks.
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
      keep = std::abs(V - w.level + w.margin_level) > gap && std::abs(Vn - V + w.margin_decrease) > gap &&
             std::abs(w.discount * Vn - V + stage_cost(task, x, u) + w.margin_value) > gap;
    } else {
      keep = std::abs(w.level - V + w.margin_level) > gap;
    }
    if (keep) {
      out.conservativeResize(Eigen::NoChange, out.cols() + 1);
      out.col(out.cols() - 1) = x;
    }
  }
  return out;
}

double loss_suite(Rng& rng, const RunConfig& cfg) {
  const TaskSpec& task = *cfg.task;
  const LossWeights& w = cfg.weights;
  const State goal = task.goal();
  const InputScaling scaling = cfg.trainer.scale_inputs ? InputScaling::from_box(task.domain_box())
                                                        : InputScaling::identity(task.state_dim());
  TrajectoryDataset d;
  d.add_trajectory(0, initial_trajectory(cfg), task);
  const DataPairs pairs = d.pairs();
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    Certificate c = Certificate::random(3, cfg.trainer.certificate_hidden, cfg.trainer.certificate_output,
                                        task.level(), scaling, done % 2 ? &goal : nullptr, rng);
    Policy p = Policy::random(3, cfg.trainer.policy_hidden, task.input_box(), scaling, rng);
    c.net().weight(c.net().num_layers() - 1) *= rng.uniform(0.5, 4.0);
    bool pairs_ok = true;
    for (Eigen::Index j = 0; j < pairs.size() && pairs_ok; ++j) {
      const double h = -w.discount * c.value(pairs.next.col(j)) + c.value(pairs.x.col(j)) -
                       stage_cost(task, pairs.x.col(j), pairs.u.col(j)) + w.margin_value;
      pairs_ok = std::abs(h) > 1e-4;
    }
    if (!pairs_ok) continue;
    const Mat safe = away_from_kinks(c, p, task, sample_domain(task, 40, rng), w, true, 1e-4);
    const Mat unsafe = away_from_kinks(c, p, task, sample_domain(task, 40, rng), w, false, 1e-4);
    const LossResult r = clbf_loss(c, p, safe, unsafe, pairs, w, task, true);
    const double h = 1e-6;
    auto fd = [&](Mlp& net) {
      Vec g(net.num_params());
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double keep = net.params()[i];
        net.params()[i] = keep + h;
        const double a = clbf_loss(c, p, safe, unsafe, pairs, w, task, false).value;
        net.params()[i] = keep - h;
        const double b = clbf_loss(c, p, safe, unsafe, pairs, w, task, false).value;
        net.params()[i] = keep;
        g[i] = (a - b) / (2 * h);
      }
      return g;
    };
    const Vec fc = fd(c.net());
    const Vec fp = fd(p.net());
    worst = std::max({worst, vec_rel_err(r.grad_certificate, fc), vec_rel_err(r.grad_policy, fp)});
    ++done;
  }
  return worst;
}

double rollout_suite(Rng& rng, const RunConfig& cfg) {
  const TaskSpec& task = *cfg.task;
  const State goal = task.goal();
  const Box& box = task.domain_box();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Certificate c = Certificate::random(3, cfg.trainer.certificate_hidden, cfg.trainer.certificate_output,
                                              task.level(), InputScaling::from_box(box), &goal, rng);
    State x0(3);
    x0 << rng.uniform(box.lower[0], box.upper[0]), rng.uniform(box.lower[1], box.upper[1]), rng.uniform(-3, 3);
    const int N = task.horizon();
    std::vector<Input> u(N, Input::Zero(2));
    for (auto& v : u)
      for (int d = 0; d < 2; ++d) v[d] = rng.uniform(task.input_box().lower[d], task.input_box().upper[d]);
    const int t = static_cast<int>(rng.index(20));
    const RolloutResult r = rollout(task, c, x0, u, t, true);
    Vec g(2 * N), fd(2 * N);
    const double h = 1e-6;
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < 2; ++d) {
        g[2 * i + d] = r.gradient[i][d];
        const double keep = u[i][d];
        u[i][d] = keep + h;
        const double a = rollout(task, c, x0, u, t, true, false).objective;
        u[i][d] = keep - h;
        const double b = rollout(task, c, x0, u, t, true, false).objective;
        u[i][d] = keep;
        fd[2 * i + d] = (a - b) / (2 * h);
      }
    worst = std::max(worst, vec_rel_err(g, fd));
  }
  return worst;
}

Outcome gradient_suites(const RunConfig& cfg) {
  Outcome o{6, "gradient suites"};
  Rng rng(77);
  const double a = mlp_suite(rng);
  const double b = loss_suite(rng, cfg);
  const double c = rollout_suite(rng, cfg);
  o.pass = a <= 1e-5 && b <= 1e-5 && c <= 1e-5;
  o.detail = "worst relative error over 100 instances: mlp " + fmt(a, 3) + ", clbf_loss " + fmt(b, 3) +
             ", rollout " + fmt(c, 3) + " (limit 1e-5)";
  return o;
}

Outcome certificate_conditions(const RunRecord& run) {
  Outcome o{7, "certificate condition suite"};
  if (run.error) return o.detail = "run failed", o;
  const auto rows = read_summary_csv((run.dir / "summary.csv").string());
  o.pass = true;
  std::ostringstream os;
  // the last iteration trains no certificate
  for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
    os << " V" << j << ": rate " << fmt(rows[j].violation_rate, 3) << ", V(goal) " << fmt(rows[j].goal_value, 3)
       << ";";
    if (!(rows[j].violation_rate <= 0.01) || !(rows[j].goal_value <= 1e-3)) o.pass = false;
  }
  o.detail = "10000 uniform samples per certificate (limits 0.01, 1e-3):" + os.str();
  return o;
}

Outcome containment(const std::vector<RunRecord>& runs) {
  Outcome o{8, "containment"};
  o.pass = true;
  std::ostringstream os;
  for (const auto& r : runs) {
    if (r.error) {
      o.pass = false;
      os << r.name << ": run failed; ";
      continue;
    }
    os << r.name << ":";
    for (const auto& row : read_summary_csv((r.dir / "summary.csv").string()))
      if (row.containment) {
        os << " " << fmt(*row.containment, 3);
        if (*row.containment > 0.01) o.pass = false;
      }
    os << "; ";
  }
  o.detail = "fraction with V(j-1) <= c < V(j), 10000 samples per pair (limit 0.01) " + os.str();
  return o;
}

Outcome alpha_shapes() {
  Outcome o{9, "alpha shape correctness"};
  Rng rng(99);
  long mismatches = 0, monotone_breaks = 0;
  for (int set = 0; set < 50; ++set) {
    std::vector<Point2> p;
    const int n = 20 + static_cast<int>(rng.index(60));
    for (int i = 0; i < n; ++i) p.push_back({rng.uniform(-8, 8), rng.uniform(-8, 8)});
    const AlphaShape hull = AlphaShape::build(p, std::numeric_limits<double>::infinity());
    // convex hull by gift wrapping over the input points
    std::vector<Point2> h;
    int start = 0;
    for (int i = 1; i < n; ++i)
      if (p[i].x < p[start].x || (p[i].x == p[start].x && p[i].y < p[start].y)) start = i;
    int cur = start;
    do {
      h.push_back(p[cur]);
      int next = (cur + 1) % n;
      for (int i = 0; i < n; ++i) {
        const double cr = (p[next].x - p[cur].x) * (p[i].y - p[cur].y) - (p[next].y - p[cur].y) * (p[i].x - p[cur].x);
        if (cr < 0) next = i;
      }
      cur = next;
    } while (cur != start && h.size() <= static_cast<std::size_t>(n));
    std::vector<double> alphas{0.5, 1.0, 2.0, 4.0, 8.0, std::numeric_limits<double>::infinity()};
    std::vector<AlphaShape> shapes;
    for (double a : alphas) {
      try {
        shapes.push_back(AlphaShape::build(p, a));
      } catch (const DegenerateRegion&) {
        shapes.clear();
        break;
      }
    }
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j) {
        const Point2 q{-8.5 + 17.0 * i / 99.0, -8.5 + 17.0 * j / 99.0};
        bool inside = true;
        for (std::size_t e = 0; e < h.size(); ++e) {
          const Point2& a = h[e];
          const Point2& b = h[(e + 1) % h.size()];
          if ((b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x) < 0) inside = false;
        }
        if (hull.contains(q) != inside) ++mismatches;
        for (std::size_t k = 1; k < shapes.size(); ++k)
          if (shapes[k - 1].contains(q) && !shapes[k].contains(q)) ++monotone_breaks;
      }
  }
  o.pass = mismatches == 0 && monotone_breaks == 0;
  o.detail = "50 sets on a 100x100 grid: " + std::to_string(mismatches) + " hull mismatches, " +
             std::to_string(monotone_breaks) + " monotonicity breaks";
  return o;
}

Outcome region_growth(const RunRecord& run, const RunConfig& cfg) {
  Outcome o{10, "certified-region growth"};
  if (run.error) return o.detail = "run failed", o;
  std::vector<std::size_t> counts;
  std::size_t cells = 0;
  for (int j = 0;; ++j) {
    const fs::path f = run.dir / heatmap_file_name(j, cfg.heatmap.theta);
    if (!fs::exists(f)) break;
    const auto h = read_heatmap_csv(f.string());
    cells = h.size();
    std::size_t below = 0;
    for (const auto& c : h) below += c.below;
    counts.push_back(below);
  }
  if (counts.size() < 2) return o.detail = "fewer than two heatmaps", o;
  const double slack = 0.01 * static_cast<double>(cells);
  o.pass = true;
  std::ostringstream os;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    os << " " << counts[j];
    if (j > 0 && static_cast<double>(counts[j]) + slack < static_cast<double>(counts[j - 1])) o.pass = false;
  }
  o.detail = "cells with V <= c out of " + std::to_string(cells) + " at theta " + fmt(cfg.heatmap.theta) + ":" +
             os.str() + " (slack " + fmt(slack) + " cells)";
  return o;
}

Outcome determinism(const RunRecord& a, const RunRecord& b) {
  Outcome o{11, "determinism"};
  if (a.error || b.error) return o.detail = "run failed", o;
  const std::string sa = read_all(a.dir / "summary.csv");
  const std::string sb = read_all(b.dir / "summary.csv");
  o.pass = !sa.empty() && sa == sb;
  o.detail = a.name + "/summary.csv and " + b.name + "/summary.csv are " + (o.pass ? "identical" : "different");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks on the benchmark"};
  std::string config_path, work = "acceptance_runs";
  bool reuse = false;
  app.add_option("--config", config_path, "Run configuration")->required();
  app.add_option("--work", work, "Directory for run outputs");
  app.add_flag("--reuse", reuse, "Analyse complete runs already in the work directory");
  CLI11_PARSE(app, argc, argv);

  const RunConfig cfg = load_run_config(config_path);
  const fs::path dir(work);
  fs::create_directories(dir);

  const RunRecord s1 = proposed_run(cfg, dir, "seed1", 1, reuse);
  const RunRecord s1b = proposed_run(cfg, dir, "seed1_repeat", 1, reuse);
  const RunRecord s2 = proposed_run(cfg, dir, "seed2", 2, reuse);
  const RunRecord s3 = proposed_run(cfg, dir, "seed3", 3, reuse);
  const std::vector<RunRecord> seeds{s1, s2, s3};
  std::string base_note;
  const auto base_ms = baseline_all_mean_ms(cfg, dir, reuse, base_note);

  std::vector<Outcome> out;
  out.push_back(cost_improvement(s1, cfg.iterations));
  out.push_back(safety(seeds, *cfg.task));
  out.push_back(convergence(seeds));
  out.push_back(speed_gap(s1, base_ms, base_note));
  out.push_back(ocp_oracle(s1, cfg));
  out.push_back(gradient_suites(cfg));
  out.push_back(certificate_conditions(s1));
  out.push_back(containment(seeds));
  out.push_back(alpha_shapes());
  out.push_back(region_growth(s1, cfg));
  out.push_back(determinism(s1, s1b));

  std::ostringstream report;
  int passed = 0;
  for (const auto& o : out) {
    report << "criterion " << std::setw(2) << o.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.name << ": "
           << o.detail << "\n";
    passed += o.pass;
  }
  report << passed << " of " << out.size() << " criteria passed\n";
  std::cout << report.str();
  std::ofstream(dir / "acceptance_report.txt") << report.str();
  return passed == static_cast<int>(out.size()) ? 0 : 1;
}
