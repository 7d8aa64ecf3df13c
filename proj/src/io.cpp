#include "ilmpc/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ilmpc/errors.hpp"

namespace ilmpc {

using json = nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec json_vec(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(field, "expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

// Typed access to one config section, remembering which keys were read so
// that unknown keys can be reported.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  double number(const std::string& key, double def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(field(key), "expected a number");
    return v->get<double>();
  }

  int integer(const std::string& key, int def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
    return v->get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      throw ConfigError(field(key), "expected a nonnegative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
    const json* v = find(key);
    if (!v) return def;
    const Vec x = json_vec(*v, field(key));
    return {x.data(), x.data() + x.size()};
  }

  std::vector<int> integers(const std::string& key, const std::vector<int>& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(field(key), "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) throw ConfigError(field(key), "expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  Section sub(const std::string& key) { return Section(find(key), field(key)); }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

void apply_override(json& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(text, "override must look like key=value");
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty key component");
    if (!node->is_object()) throw ConfigError(key, "cannot override inside a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::shared_ptr<const TaskSpec> parse_task(Section s) {
  DubinsBenchmarkOptions o;
  o.time_step = s.number("time_step", o.time_step);
  o.cost_weight = s.number("cost_weight", o.cost_weight);
  o.domain_half_extent = s.number("domain_half_extent", o.domain_half_extent);
  o.v_max = s.number("v_max", o.v_max);
  o.omega_max = s.number("omega_max", o.omega_max);
  o.discount = s.number("discount", o.discount);
  o.horizon = s.integer("horizon", o.horizon);
  o.level = s.number("level", o.level);
  o.max_steps = s.integer("max_steps", o.max_steps);
  o.goal_tolerance = s.number("goal_tolerance", o.goal_tolerance);
  require(o.time_step > 0.0, s.field("time_step"), "must be positive");
  require(o.cost_weight > 0.0, s.field("cost_weight"), "must be positive");
  require(o.domain_half_extent > 0.0, s.field("domain_half_extent"), "must be positive");
  require(o.v_max > 0.0, s.field("v_max"), "must be positive");
  require(o.omega_max > 0.0, s.field("omega_max"), "must be positive");
  require(o.discount > 0.0 && o.discount < 1.0, s.field("discount"), "must lie in (0, 1)");
  require(o.horizon >= 1, s.field("horizon"), "must be >= 1");
  require(o.level > 0.0, s.field("level"), "must be positive");
  require(o.max_steps >= 1, s.field("max_steps"), "must be >= 1");
  require(o.goal_tolerance > 0.0, s.field("goal_tolerance"), "must be positive");

  TaskParams p = make_dubins_benchmark(o).params();
  if (const json* obs = s.find("obstacles")) {
    require(obs->is_array(), s.field("obstacles"), "expected an array");
    p.obstacles.clear();
    for (std::size_t i = 0; i < obs->size(); ++i) {
      Section d(&(*obs)[i], s.field("obstacles") + "[" + std::to_string(i) + "]");
      Disc disc;
      disc.z = d.number("z", 0.0);
      disc.y = d.number("y", 0.0);
      disc.radius = d.number("radius", 1.0);
      require(disc.radius > 0.0, d.field("radius"), "must be positive");
      d.finish();
      p.obstacles.push_back(disc);
    }
  }
  const auto start = s.numbers("start", {p.start.data(), p.start.data() + p.start.size()});
  const auto goal = s.numbers("goal", {p.goal.data(), p.goal.data() + p.goal.size()});
  require(start.size() == 3, s.field("start"), "needs three entries");
  require(goal.size() == 3, s.field("goal"), "needs three entries");
  p.start = Eigen::Map<const Vec>(start.data(), 3);
  p.goal = Eigen::Map<const Vec>(goal.data(), 3);
  p.stage_cost = std::make_shared<QuadraticGoalCost>(p.goal, o.cost_weight);
  s.finish();
  try {
    return std::make_shared<const TaskSpec>(std::move(p));
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    throw ConfigError(s.field(e.field()), what.substr(e.field().size() + 2));
  }
}

}  // namespace

// ---- configuration -----------------------------------------------------------

std::string default_config_text() {
  const RunConfig d;
  const TrainerConfig t;
  const SolverSettings so;
  const DubinsBenchmarkOptions task;
  json j;
  j["task"] = {{"time_step", task.time_step},
               {"cost_weight", task.cost_weight},
               {"obstacles", json::array({{{"z", 0.0}, {"y", 0.0}, {"radius", 1.0}}})},
               {"domain_half_extent", task.domain_half_extent},
               {"v_max", task.v_max},
               {"omega_max", task.omega_max},
               {"discount", task.discount},
               {"horizon", task.horizon},
               {"level", task.level},
               {"max_steps", task.max_steps},
               {"goal_tolerance", task.goal_tolerance},
               {"start", {-6.0, 0.0, 0.0}},
               {"goal", {6.0, 0.0, 0.0}}};
  j["run"] = {{"iterations", d.iterations},
              {"seed", d.seed},
              {"output_dir", "runs/benchmark"},
              {"containment_samples", d.containment_samples},
              {"bootstrap_outside_tolerance", d.bootstrap_outside_tolerance},
              {"initial_certificate", ""},
              {"initial_policy", ""}};
  j["trainer"] = {{"iterations", t.iterations},
                  {"k_val", t.validation_interval},
                  {"n_test", t.validation_samples},
                  {"final_validation_samples", t.final_validation_samples},
                  {"batch_safe", t.batch_safe},
                  {"batch_unsafe", t.batch_unsafe},
                  {"batch_pairs", t.batch_pairs},
                  {"safe_samples", t.counts.safe},
                  {"unsafe_samples", t.counts.unsafe},
                  {"obstacle_fraction", t.counts.obstacle_fraction},
                  {"heading_jitter", t.counts.heading_jitter},
                  {"alpha", t.alpha},
                  {"alpha_scale", t.alpha_scale},
                  {"certificate_hidden", t.certificate_hidden},
                  {"certificate_output", t.certificate_output},
                  {"policy_hidden", t.policy_hidden},
                  {"anchor_goal", t.anchor_goal},
                  {"scale_inputs", t.scale_inputs},
                  {"policy_saturation_penalty", t.policy_saturation_penalty},
                  {"mined_fraction", t.mined_fraction},
                  {"data_in_safe_batch", t.data_in_safe_batch},
                  {"optimizer",
                   {{"method", "adam"},
                    {"learning_rate", t.optimizer.learning_rate},
                    {"beta1", t.optimizer.beta1},
                    {"beta2", t.optimizer.beta2},
                    {"epsilon", t.optimizer.epsilon}}}};
  const LossWeights lw;
  j["loss"] = {{"a1", lw.a1}, {"a2", lw.a2}, {"a3", lw.a3}, {"a4", lw.a4}, {"a5", lw.a5},
               {"margin_level", lw.margin_level}, {"margin_decrease", lw.margin_decrease},
               {"margin_value", lw.margin_value}, {"tail_fit", lw.tail_fit}, {"shrink", lw.shrink}};
  j["solver"] = {{"kkt_tolerance", so.kkt_tolerance},
                 {"constraint_tolerance", so.constraint_tolerance},
                 {"max_outer", so.max_outer},
                 {"max_inner", so.max_inner},
                 {"penalty_init", so.penalty_init},
                 {"penalty_growth", so.penalty_growth},
                 {"memory", so.memory},
                 {"armijo", so.armijo},
                 {"normalize_discount", so.normalize_discount},
                 {"terminal_state_constraints", so.terminal_state_constraints},
                 {"obstacle_margin", so.obstacle_margin},
                 {"step_budget_ms", so.step_budget_ms},
                 {"multistart", so.multistart}};
  j["baseline"] = {{"candidates", d.baseline.candidates},
                   {"terminal_tolerance", d.baseline.terminal_tolerance}};
  j["initial_data"] = {{"trajectory_file", ""},
                       {"speed", d.initial.maneuver.speed},
                       {"turn_rate", d.initial.maneuver.turn_rate},
                       {"arc_steps", d.initial.maneuver.arc_steps},
                       {"climb_steps", d.initial.maneuver.climb_steps},
                       {"behind_offsets", d.initial.behind_offsets}};
  j["heatmap"] = {{"theta", d.heatmap.theta}, {"resolution", d.heatmap.resolution}};
  return j.dump(2) + "\n";
}

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config", "expected an object");
  for (const auto& o : overrides) apply_override(root, o);

  Section top(&root, "");
  RunConfig c;
  c.task = parse_task(top.sub("task"));
  const double gamma = c.task->discount();

  {
    Section s = top.sub("run");
    c.iterations = s.integer("iterations", c.iterations);
    c.seed = s.unsigned_integer("seed", c.seed);
    c.output_dir = s.string("output_dir", c.output_dir);
    c.containment_samples = s.integer("containment_samples", c.containment_samples);
    c.bootstrap_outside_tolerance = s.number("bootstrap_outside_tolerance", c.bootstrap_outside_tolerance);
    c.initial_certificate = s.string("initial_certificate", "");
    c.initial_policy = s.string("initial_policy", "");
    require(c.iterations >= 1, s.field("iterations"), "must be >= 1");
    require(c.containment_samples >= 1, s.field("containment_samples"), "must be >= 1");
    require(c.bootstrap_outside_tolerance >= 0.0 && c.bootstrap_outside_tolerance <= 1.0,
            s.field("bootstrap_outside_tolerance"), "must lie in [0, 1]");
    s.finish();
  }
  {
    Section s = top.sub("trainer");
    TrainerConfig& t = c.trainer;
    t.iterations = s.integer("iterations", t.iterations);
    t.validation_interval = s.integer("k_val", t.validation_interval);
    t.validation_samples = s.integer("n_test", t.validation_samples);
    t.final_validation_samples = s.integer("final_validation_samples", t.final_validation_samples);
    t.batch_safe = s.integer("batch_safe", t.batch_safe);
    t.batch_unsafe = s.integer("batch_unsafe", t.batch_unsafe);
    t.batch_pairs = s.integer("batch_pairs", t.batch_pairs);
    t.counts.safe = s.integer("safe_samples", t.counts.safe);
    t.counts.unsafe = s.integer("unsafe_samples", t.counts.unsafe);
    t.counts.obstacle_fraction = s.number("obstacle_fraction", t.counts.obstacle_fraction);
    t.counts.heading_jitter = s.number("heading_jitter", t.counts.heading_jitter);
    t.alpha = s.number("alpha", t.alpha);
    t.alpha_scale = s.number("alpha_scale", t.alpha_scale);
    t.certificate_hidden = s.integers("certificate_hidden", t.certificate_hidden);
    t.certificate_output = s.integer("certificate_output", t.certificate_output);
    t.policy_hidden = s.integers("policy_hidden", t.policy_hidden);
    t.anchor_goal = s.boolean("anchor_goal", t.anchor_goal);
    t.scale_inputs = s.boolean("scale_inputs", t.scale_inputs);
    t.policy_saturation_penalty = s.number("policy_saturation_penalty", t.policy_saturation_penalty);
    require(t.policy_saturation_penalty >= 0.0, s.field("policy_saturation_penalty"), "must be nonnegative");
    t.mined_fraction = s.number("mined_fraction", t.mined_fraction);
    require(t.mined_fraction <= 1.0, s.field("mined_fraction"), "must be <= 1");
    t.data_in_safe_batch = s.boolean("data_in_safe_batch", t.data_in_safe_batch);
    require(t.iterations >= 0, s.field("iterations"), "must be >= 0");
    require(t.validation_interval >= 1, s.field("k_val"), "must be >= 1");
    require(t.validation_samples >= 1, s.field("n_test"), "must be >= 1");
    require(t.final_validation_samples >= 1, s.field("final_validation_samples"), "must be >= 1");
    require(t.batch_safe >= 1, s.field("batch_safe"), "must be >= 1");
    require(t.batch_unsafe >= 1, s.field("batch_unsafe"), "must be >= 1");
    require(t.batch_pairs >= 1, s.field("batch_pairs"), "must be >= 1");
    require(t.counts.safe >= 1, s.field("safe_samples"), "must be >= 1");
    require(t.counts.unsafe >= 1, s.field("unsafe_samples"), "must be >= 1");
    require(t.counts.obstacle_fraction >= 0.0 && t.counts.obstacle_fraction <= 1.0,
            s.field("obstacle_fraction"), "must lie in [0, 1]");
    require(t.counts.heading_jitter >= 0.0, s.field("heading_jitter"), "must be nonnegative");
    require(t.alpha >= 0.0, s.field("alpha"), "must be nonnegative (0 selects automatically)");
    require(t.alpha_scale > 0.0, s.field("alpha_scale"), "must be positive");
    for (int h : t.certificate_hidden) require(h >= 1, s.field("certificate_hidden"), "sizes must be >= 1");
    for (int h : t.policy_hidden) require(h >= 1, s.field("policy_hidden"), "sizes must be >= 1");
    require(t.certificate_output >= 1, s.field("certificate_output"), "must be >= 1");
    Section o = s.sub("optimizer");
    const std::string method = o.string("method", "adam");
    require(method == "adam" || method == "sgd", o.field("method"), "must be \"adam\" or \"sgd\"");
    t.optimizer.method = method == "adam" ? OptimizerMethod::Adam : OptimizerMethod::Sgd;
    t.optimizer.learning_rate = o.number("learning_rate", t.optimizer.learning_rate);
    t.optimizer.beta1 = o.number("beta1", t.optimizer.beta1);
    t.optimizer.beta2 = o.number("beta2", t.optimizer.beta2);
    t.optimizer.epsilon = o.number("epsilon", t.optimizer.epsilon);
    require(t.optimizer.learning_rate > 0.0, o.field("learning_rate"), "must be positive");
    require(t.optimizer.beta1 >= 0.0 && t.optimizer.beta1 < 1.0, o.field("beta1"), "must lie in [0, 1)");
    require(t.optimizer.beta2 >= 0.0 && t.optimizer.beta2 < 1.0, o.field("beta2"), "must lie in [0, 1)");
    require(t.optimizer.epsilon > 0.0, o.field("epsilon"), "must be positive");
    o.finish();
    s.finish();
  }
  {
    Section s = top.sub("loss");
    LossWeights& w = c.weights;
    w.a1 = s.number("a1", w.a1);
    w.a2 = s.number("a2", w.a2);
    w.a3 = s.number("a3", w.a3);
    w.a4 = s.number("a4", w.a4);
    w.a5 = s.number("a5", w.a5);
    for (const char* k : {"a1", "a2", "a3", "a4", "a5"})
      require(s.number(k, 1.0) > 0.0, s.field(k), "must be positive");
    w.margin_level = s.number("margin_level", w.margin_level);
    w.margin_decrease = s.number("margin_decrease", w.margin_decrease);
    w.margin_value = s.number("margin_value", w.margin_value);
    w.tail_fit = s.number("tail_fit", w.tail_fit);
    require(w.tail_fit >= 0.0, s.field("tail_fit"), "must be nonnegative");
    w.shrink = s.number("shrink", w.shrink);
    require(w.shrink >= 0.0, s.field("shrink"), "must be nonnegative");
    for (const char* k : {"margin_level", "margin_decrease", "margin_value"})
      require(s.number(k, 0.0) >= 0.0, s.field(k), "must be nonnegative");
    w.level = c.task->level();
    w.discount = gamma;
    s.finish();
  }
  auto parse_solver = [](Section& s, SolverSettings& so) {
    so.kkt_tolerance = s.number("kkt_tolerance", so.kkt_tolerance);
    so.constraint_tolerance = s.number("constraint_tolerance", so.constraint_tolerance);
    so.max_outer = s.integer("max_outer", so.max_outer);
    so.max_inner = s.integer("max_inner", so.max_inner);
    so.penalty_init = s.number("penalty_init", so.penalty_init);
    so.penalty_growth = s.number("penalty_growth", so.penalty_growth);
    so.memory = s.integer("memory", so.memory);
    so.armijo = s.number("armijo", so.armijo);
    so.normalize_discount = s.boolean("normalize_discount", so.normalize_discount);
    so.terminal_state_constraints = s.boolean("terminal_state_constraints", so.terminal_state_constraints);
    so.obstacle_margin = s.number("obstacle_margin", so.obstacle_margin);
    so.step_budget_ms = s.number("step_budget_ms", so.step_budget_ms);
    so.multistart = s.boolean("multistart", so.multistart);
    require(so.kkt_tolerance > 0.0, s.field("kkt_tolerance"), "must be positive");
    require(so.constraint_tolerance > 0.0, s.field("constraint_tolerance"), "must be positive");
    require(so.max_outer >= 1, s.field("max_outer"), "must be >= 1");
    require(so.max_inner >= 1, s.field("max_inner"), "must be >= 1");
    require(so.penalty_init > 0.0, s.field("penalty_init"), "must be positive");
    require(so.penalty_growth >= 1.0, s.field("penalty_growth"), "must be >= 1");
    require(so.memory >= 1, s.field("memory"), "must be >= 1");
    require(so.armijo > 0.0 && so.armijo < 1.0, s.field("armijo"), "must lie in (0, 1)");
    require(so.obstacle_margin >= 0.0, s.field("obstacle_margin"), "must be nonnegative");
    require(so.step_budget_ms > 0.0, s.field("step_budget_ms"), "must be positive");
  };
  {
    Section s = top.sub("solver");
    parse_solver(s, c.solver);
    s.finish();
  }
  {
    Section s = top.sub("baseline");
    c.baseline.solver = c.solver;
    c.baseline.candidates = s.integer("candidates", c.baseline.candidates);
    c.baseline.terminal_tolerance = s.number("terminal_tolerance", c.baseline.terminal_tolerance);
    require(c.baseline.candidates >= 0, s.field("candidates"), "must be >= 0 (0 enumerates all)");
    require(c.baseline.terminal_tolerance > 0.0, s.field("terminal_tolerance"), "must be positive");
    s.finish();
  }
  {
    Section s = top.sub("initial_data");
    InitialDataConfig& i = c.initial;
    i.trajectory_file = s.string("trajectory_file", i.trajectory_file);
    i.maneuver.speed = s.number("speed", i.maneuver.speed);
    i.maneuver.turn_rate = s.number("turn_rate", i.maneuver.turn_rate);
    i.maneuver.arc_steps = s.integer("arc_steps", i.maneuver.arc_steps);
    i.maneuver.climb_steps = s.integer("climb_steps", i.maneuver.climb_steps);
    i.behind_offsets = s.numbers("behind_offsets", i.behind_offsets);
    require(i.maneuver.speed > 0.0 && i.maneuver.speed <= c.task->input_box().upper[0], s.field("speed"),
            "must lie in (0, v_max]");
    require(std::abs(i.maneuver.turn_rate) <= c.task->input_box().upper[1], s.field("turn_rate"),
            "exceeds omega_max");
    require(i.maneuver.arc_steps >= 1, s.field("arc_steps"), "must be >= 1");
    require(i.maneuver.climb_steps >= 0, s.field("climb_steps"), "must be >= 0");
    for (double off : i.behind_offsets) require(off > 0.0, s.field("behind_offsets"), "offsets must be positive");
    s.finish();
  }
  {
    Section s = top.sub("heatmap");
    c.heatmap.theta = s.number("theta", c.heatmap.theta);
    c.heatmap.resolution = s.integer("resolution", c.heatmap.resolution);
    require(c.heatmap.resolution >= 1, s.field("resolution"), "must be >= 1");
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  const std::string text = read_file(path);
  const RunConfig file = parse_run_config(text);
  RunConfig c = parse_run_config(text, overrides);
  // input files named in the config itself are relative to the config's directory
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto anchor = [&](std::string& p, const std::string& from_file) {
    if (!p.empty() && p == from_file && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  anchor(c.initial.trajectory_file, file.initial.trajectory_file);
  anchor(c.initial_certificate, file.initial_certificate);
  anchor(c.initial_policy, file.initial_policy);
  return c;
}

// ---- network parameters ------------------------------------------------------

namespace {

json mlp_json(const Mlp& net) {
  json layers = json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto W = net.weight(l);
    json rows = json::array();
    for (Eigen::Index i = 0; i < W.rows(); ++i) rows.push_back(vec_json(W.row(i).transpose()));
    layers.push_back({{"weights", rows}, {"biases", vec_json(net.bias(l))}});
  }
  return {{"layer_sizes", net.layer_sizes()}, {"layers", layers}};
}

Mlp json_mlp(const json& j, const std::string& path) {
  if (!j.contains("layer_sizes") || !j.contains("layers")) throw ConfigError(path, "missing network layers");
  Mlp net(j["layer_sizes"].get<std::vector<int>>());
  const json& layers = j["layers"];
  if (static_cast<int>(layers.size()) != net.num_layers()) throw ConfigError(path, "layer count mismatch");
  for (int l = 0; l < net.num_layers(); ++l) {
    auto W = net.weight(l);
    const json& rows = layers[l]["weights"];
    if (static_cast<Eigen::Index>(rows.size()) != W.rows()) throw ConfigError(path, "weight shape mismatch");
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      const Vec r = json_vec(rows[i], path);
      if (r.size() != W.cols()) throw ConfigError(path, "weight shape mismatch");
      W.row(i) = r.transpose();
    }
    const Vec b = json_vec(layers[l]["biases"], path);
    if (b.size() != net.bias(l).size()) throw ConfigError(path, "bias shape mismatch");
    net.bias(l) = b;
  }
  return net;
}

json scaling_json(const InputScaling& s) { return {{"center", vec_json(s.center)}, {"scale", vec_json(s.scale)}}; }

InputScaling json_scaling(const json& j, const std::string& path) {
  return {json_vec(j.at("center"), path), json_vec(j.at("scale"), path)};
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("not valid JSON: ") + e.what());
  }
}

}  // namespace

void save_certificate(const std::string& path, const Certificate& cert, const TaskSpec& task) {
  json j = mlp_json(cert.net());
  j["kind"] = "certificate";
  j["level"] = cert.level();
  j["anchor"] = cert.anchored() ? vec_json(cert.anchor()) : json(nullptr);
  j["scaling"] = scaling_json(cert.scaling());
  j["domain"] = {{"lower", vec_json(task.domain_box().lower)}, {"upper", vec_json(task.domain_box().upper)}};
  open_out(path) << j.dump(1) << "\n";
}

Certificate load_certificate(const std::string& path) {
  const json j = parse_json_file(path);
  try {
    if (j.value("kind", "") != "certificate") throw ConfigError(path, "not a certificate file");
    Mlp net = json_mlp(j, path);
    InputScaling s = json_scaling(j.at("scaling"), path);
    const double level = j.at("level").get<double>();
    if (j.contains("anchor") && !j["anchor"].is_null())
      return Certificate(std::move(net), level, std::move(s), json_vec(j["anchor"], path));
    return Certificate(std::move(net), level, std::move(s));
  } catch (const json::exception& e) {
    throw ConfigError(path, e.what());
  }
}

void save_policy(const std::string& path, const Policy& policy) {
  json j = mlp_json(policy.net());
  j["kind"] = "policy";
  j["scaling"] = scaling_json(policy.scaling());
  j["input_box"] = {{"lower", vec_json(policy.input_box().lower)}, {"upper", vec_json(policy.input_box().upper)}};
  open_out(path) << j.dump(1) << "\n";
}

Policy load_policy(const std::string& path) {
  const json j = parse_json_file(path);
  try {
    if (j.value("kind", "") != "policy") throw ConfigError(path, "not a policy file");
    Mlp net = json_mlp(j, path);
    Box box{json_vec(j.at("input_box").at("lower"), path), json_vec(j.at("input_box").at("upper"), path)};
    return Policy(std::move(net), std::move(box), json_scaling(j.at("scaling"), path));
  } catch (const json::exception& e) {
    throw ConfigError(path, e.what());
  }
}

// ---- trajectories ------------------------------------------------------------

void save_dataset(const std::string& path, const TrajectoryDataset& data) {
  auto out = open_out(path);
  for (const auto& r : data.trajectories())
    for (std::size_t t = 0; t < r.states.size(); ++t) {
      json j = {{"iteration", r.iteration},
                {"t", t},
                {"x", vec_json(r.states[t])},
                {"u", vec_json(r.inputs[t])},
                {"cost_to_go", r.cost_to_go.empty() ? 0.0 : r.cost_to_go[t]}};
      out << j.dump() << "\n";
    }
  for (const auto& p : data.support_points())
    out << json({{"iteration", 0}, {"t", -1}, {"x", vec_json(p)}, {"u", json::array()}, {"cost_to_go", 0.0}})
               .dump()
        << "\n";
}

namespace {

struct StepRecord {
  int iteration;
  long t;
  Vec x, u;
  double cost_to_go;
};

std::vector<StepRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::vector<StepRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      out.push_back({j.at("iteration").get<int>(), j.at("t").get<long>(), json_vec(j.at("x"), where),
                     json_vec(j.at("u"), where), j.value("cost_to_go", 0.0)});
    } catch (const json::exception& e) {
      throw ConfigError(where, e.what());
    }
  }
  return out;
}

}  // namespace

TrajectoryDataset load_dataset(const std::string& path) {
  TrajectoryDataset data;
  std::map<int, TrajectoryRecord> recs;
  std::vector<State> support;
  for (auto& r : read_records(path)) {
    if (r.t < 0) {
      support.push_back(r.x);
      continue;
    }
    auto& rec = recs[r.iteration];
    rec.iteration = r.iteration;
    if (r.t != static_cast<long>(rec.states.size()))
      throw ConfigError(path, "steps of iteration " + std::to_string(r.iteration) + " are out of order");
    rec.states.push_back(r.x);
    rec.inputs.push_back(r.u);
    rec.cost_to_go.push_back(r.cost_to_go);
  }
  for (auto& [j, rec] : recs) data.add_record(std::move(rec));
  data.restore_support_points(std::move(support));
  return data;
}

void save_trajectory(const std::string& path, const TaskSpec& task, const Trajectory& traj, int iteration) {
  const auto tails = discounted_tails(task, traj);
  auto out = open_out(path);
  for (std::size_t t = 0; t < traj.size(); ++t)
    out << json({{"iteration", iteration},
                 {"t", t},
                 {"x", vec_json(traj.states[t])},
                 {"u", vec_json(traj.inputs[t])},
                 {"cost_to_go", tails[t]}})
               .dump()
        << "\n";
}

Trajectory load_trajectory(const std::string& path) {
  Trajectory traj;
  const auto recs = read_records(path);
  if (recs.empty()) throw ConfigError(path, "no trajectory records");
  const int first = recs.front().iteration;
  for (const auto& r : recs) {
    if (r.t < 0 || r.iteration != first) continue;
    if (r.t != static_cast<long>(traj.size())) throw ConfigError(path, "steps are out of order");
    traj.states.push_back(r.x);
    traj.inputs.push_back(r.u);
  }
  return traj;
}

// ---- CSV ---------------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("CSV: bad number '" + s + "'");
  return v;
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != columns) throw Error(path + ": expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(f));
  }
  return rows;
}

SolveStatus parse_status(const std::string& s) {
  if (s == "converged") return SolveStatus::Converged;
  if (s == "max_iter") return SolveStatus::MaxIter;
  if (s == "infeasible_fallback") return SolveStatus::InfeasibleFallback;
  throw Error("CSV: unknown status '" + s + "'");
}

}  // namespace

void write_iteration_log(const std::string& path, const std::vector<StepLog>& steps) {
  auto out = open_out(path);
  out << "t,status,objective,iterations,kkt,res_dynamics,res_obstacle_margin,res_domain,res_terminal,"
         "res_input,delta1,decrease,decrease_flag,candidates,wall_time_ms\n";
  for (const auto& s : steps)
    out << s.t << ',' << status_name(s.status) << ',' << format_double(s.objective) << ',' << s.iterations
        << ',' << format_double(s.kkt) << ',' << format_double(s.residuals.dynamics) << ','
        << format_double(s.residuals.obstacle_margin) << ',' << format_double(s.residuals.domain) << ','
        << format_double(s.residuals.terminal) << ',' << format_double(s.residuals.input) << ','
        << format_double(s.delta1) << ',' << format_double(s.decrease) << ',' << (s.decrease_flag ? 1 : 0)
        << ',' << s.candidates << ',' << format_double(s.wall_time_ms) << '\n';
}

std::vector<StepLog> read_iteration_log(const std::string& path) {
  std::vector<StepLog> out;
  for (const auto& f : read_csv(path, 15)) {
    StepLog s;
    s.t = std::stoi(f[0]);
    s.status = parse_status(f[1]);
    s.objective = parse_double(f[2]);
    s.iterations = std::stoi(f[3]);
    s.kkt = parse_double(f[4]);
    s.residuals.dynamics = parse_double(f[5]);
    s.residuals.obstacle_margin = parse_double(f[6]);
    s.residuals.domain = parse_double(f[7]);
    s.residuals.terminal = parse_double(f[8]);
    s.residuals.input = parse_double(f[9]);
    s.delta1 = parse_double(f[10]);
    s.decrease = parse_double(f[11]);
    s.decrease_flag = f[12] == "1";
    s.candidates = std::stoi(f[13]);
    s.wall_time_ms = parse_double(f[14]);
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "iteration,method,cost,cumulative_cost,steps,final_error,delta1_max,delta2,slack,slack_ok,"
         "violation_rate,goal_value,containment,fallbacks\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.method << ',' << format_double(r.cost) << ','
        << format_double(r.cumulative_cost) << ',' << r.steps << ',' << format_double(r.final_error) << ','
        << format_double(r.delta1_max) << ',' << format_double(r.delta2) << ',' << format_double(r.slack)
        << ',' << r.slack_ok << ',' << format_double(r.violation_rate) << ',' << format_double(r.goal_value)
        << ',' << opt(r.containment) << ',' << r.fallbacks << '\n';
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::vector<SummaryRow> out;
  for (const auto& f : read_csv(path, 14)) {
    SummaryRow r;
    r.iteration = std::stoi(f[0]);
    r.method = f[1];
    r.cost = parse_double(f[2]);
    r.cumulative_cost = parse_double(f[3]);
    r.steps = std::stoi(f[4]);
    r.final_error = parse_double(f[5]);
    r.delta1_max = parse_double(f[6]);
    r.delta2 = parse_double(f[7]);
    r.slack = parse_double(f[8]);
    r.slack_ok = std::stoi(f[9]);
    r.violation_rate = parse_double(f[10]);
    r.goal_value = parse_double(f[11]);
    r.containment = parse_opt(f[12]);
    r.fallbacks = std::stoi(f[13]);
    out.push_back(r);
  }
  return out;
}

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows) {
  auto out = open_out(path);
  out << "iteration,method,mean_ms,total_ms,max_ms,training_seconds\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.method << ',' << opt(r.mean_ms) << ',' << opt(r.total_ms) << ','
        << opt(r.max_ms) << ',' << format_double(r.training_seconds) << '\n';
}

std::vector<TimingRow> read_timing_csv(const std::string& path) {
  std::vector<TimingRow> out;
  for (const auto& f : read_csv(path, 6)) {
    TimingRow r;
    r.iteration = std::stoi(f[0]);
    r.method = f[1];
    r.mean_ms = parse_opt(f[2]);
    r.total_ms = parse_opt(f[3]);
    r.max_ms = parse_opt(f[4]);
    r.training_seconds = parse_double(f[5]);
    out.push_back(r);
  }
  return out;
}

void write_heatmap_csv(const std::string& path, const std::vector<HeatmapCell>& cells) {
  auto out = open_out(path);
  out << "z,y,V,below_c\n";
  for (const auto& c : cells)
    out << format_double(c.z) << ',' << format_double(c.y) << ',' << format_double(c.value) << ','
        << (c.below ? 1 : 0) << '\n';
}

std::vector<HeatmapCell> read_heatmap_csv(const std::string& path) {
  std::vector<HeatmapCell> out;
  for (const auto& f : read_csv(path, 4))
    out.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2]), f[3] == "1"});
  return out;
}

void write_alpha_csv(const std::string& path, const std::vector<std::vector<Point2>>& loops) {
  auto out = open_out(path);
  out << "loop,vertex,z,y\n";
  for (std::size_t l = 0; l < loops.size(); ++l)
    for (std::size_t v = 0; v < loops[l].size(); ++v)
      out << l << ',' << v << ',' << format_double(loops[l][v].x) << ',' << format_double(loops[l][v].y)
          << '\n';
}

// ---- run directory -------------------------------------------------------------

Artifacts::Artifacts(std::string d) : dir(std::move(d)) {
  if (enabled()) std::filesystem::create_directories(dir);
}

std::string Artifacts::path(const std::string& name) const {
  return (std::filesystem::path(dir) / name).string();
}

std::string heatmap_file_name(int j, double theta) {
  std::ostringstream os;
  os << "heatmap_" << j << "_theta" << std::fixed << std::setprecision(4) << theta << ".csv";
  return os.str();
}

void Artifacts::networks(int j, const Certificate& cert, const Policy& policy, const TaskSpec& task) const {
  if (!enabled()) return;
  save_certificate(path("cert_" + std::to_string(j) + ".params"), cert, task);
  save_policy(path("policy_" + std::to_string(j) + ".params"), policy);
}

void Artifacts::dataset(const TrajectoryDataset& data) const {
  if (enabled()) save_dataset(path("dataset.jsonl"), data);
}

void Artifacts::iteration(const IterationReport& r) const {
  if (!enabled()) return;
  const std::string prefix = r.method == "baseline" ? "baseline_iteration_" : "iteration_";
  write_iteration_log(path(prefix + std::to_string(r.iteration) + ".csv"), r.steps);
}

void Artifacts::heatmap(int j, const Certificate& cert, const TaskSpec& task, const HeatmapConfig& cfg) const {
  if (!enabled()) return;
  write_heatmap_csv(path(heatmap_file_name(j, cfg.theta)), export_heatmap(cert, task, cfg.theta, cfg.resolution));
}

void Artifacts::alpha(int j, const AlphaShape& shape) const {
  if (enabled()) write_alpha_csv(path("alpha_" + std::to_string(j) + ".csv"), shape.boundary_loops());
}

void Artifacts::summary(const std::vector<IterationReport>& reports,
                        const std::vector<IterationReport>& baseline) const {
  if (!enabled()) return;
  const PerformanceTable t = performance_summary(reports, baseline);
  write_summary_csv(path("summary.csv"), t.summary);
  write_timing_csv(path("timing.csv"), t.timing);
  open_out(path("summary.txt")) << t.text;
}

}  // namespace ilmpc
