#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ilmpc/random.hpp"
#include "ilmpc/task.hpp"

namespace ilmpc {

/// Intermediate activations kept by a batched forward pass. Columns are samples.
struct MlpTape {
  std::vector<Mat> activations;  // [0] = input, [L] = output
};

/// Fully connected network, tanh on hidden layers and identity on the output.
/// All parameters live in one contiguous vector so that optimizers and
/// serializers can treat them as a flat block; layer l owns a column-major
/// (out x in) weight followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network with the given layer sizes (input first).
  explicit Mlp(std::vector<int> layer_sizes);

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static Mlp random(std::vector<int> layer_sizes, Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index num_params() const { return params_.size(); }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<Mat> weight(int layer);
  Eigen::Map<const Vec> bias(int layer) const;
  Eigen::Map<Vec> bias(int layer);

  Vec forward(const Vec& x) const;
  /// Batched forward, one sample per column. Fills `tape` when given.
  Mat forward(const Mat& X, MlpTape* tape) const;

  /// Reverse pass for sum_j upstream(:, j) . output(:, j). Parameter
  /// gradients are accumulated into `param_grad` when non-null; the input
  /// gradient is returned (in x batch).
  Mat backward(const MlpTape& tape, const Mat& upstream, Vec* param_grad) const;

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  Vec params_;
};

/// Fixed affine input normalization x -> (x - center) / scale applied before a
/// network; equivalent to a reparametrized first layer.
struct InputScaling {
  Vec center;
  Vec scale;

  static InputScaling identity(int dim);
  static InputScaling from_box(const Box& box);
  Mat apply(const Mat& X) const;
  Vec apply(const Vec& x) const;
};

struct CertificateTape {
  MlpTape net;
  MlpTape anchor;
  Mat w;         // centered outputs (d_w x batch)
};

/// Certificate V(x) = w(x)^T w(x), nonnegative by construction. When
/// anchored, the network output is shifted so that w(x_F) = 0, i.e. the
/// effective output bias is b - w_raw(x_F); this pins V(x_F) = 0 and
/// grad V(x_F) = 0.
class Certificate {
 public:
  Certificate() = default;
  Certificate(Mlp w_net, double level, InputScaling scaling);
  Certificate(Mlp w_net, double level, InputScaling scaling, State anchor);

  static Certificate random(int state_dim, std::vector<int> hidden, int output_dim, double level,
                            InputScaling scaling, const State* anchor, Rng& rng);

  double level() const { return level_; }
  int state_dim() const { return net_.input_size(); }
  int output_dim() const { return net_.output_size(); }
  bool anchored() const { return anchored_; }
  const State& anchor() const { return anchor_; }
  const InputScaling& scaling() const { return scaling_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  /// Centered network output w(x).
  Vec w(const State& x) const;
  double value(const State& x) const;
  double value(const State& x, Vec& grad_x) const;
  Vec values(const Mat& X) const;

  /// Batched evaluation keeping what `backpropagate` needs.
  Vec evaluate(const Mat& X, CertificateTape& tape) const;
  /// Accumulates sum_j dV(j) * dV_j/dparams into `param_grad` (if non-null)
  /// and returns dV_j/dx_j scaled by dV(j), one column per sample.
  Mat backpropagate(const CertificateTape& tape, const Vec& dV, Vec* param_grad) const;

 private:
  Mlp net_;
  double level_ = 1.0;
  InputScaling scaling_;
  bool anchored_ = false;
  State anchor_;
};

struct PolicyTape {
  MlpTape net;
  Mat squashed;  // tanh(net(x))
};

/// Policy u = mid + half * tanh(net(x)), strictly inside the input box.
class Policy {
 public:
  Policy() = default;
  Policy(Mlp net, Box input_box, InputScaling scaling);

  static Policy random(int state_dim, std::vector<int> hidden, const Box& input_box,
                       InputScaling scaling, Rng& rng);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const Box& input_box() const { return box_; }
  const InputScaling& scaling() const { return scaling_; }

  Input action(const State& x) const;
  Mat actions(const Mat& X, PolicyTape* tape) const;
  /// Accumulates parameter gradients of sum_j dU(:, j) . u_j; returns input gradients.
  Mat backpropagate(const PolicyTape& tape, const Mat& dU, Vec* param_grad) const;

 private:
  Mlp net_;
  Box box_;
  InputScaling scaling_;
};

/// Squash a raw network output onto a box: mid + half * tanh(raw).
Input squash_to_box(const Vec& raw, const Box& box);

enum class OptimizerMethod { Sgd, Adam };

struct OptimizerSettings {
  OptimizerMethod method = OptimizerMethod::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order optimizer state for one flat parameter block.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerSettings settings, Eigen::Index num_params);

  /// Applies one update in place. A non-finite gradient leaves the
  /// parameters and moments untouched and returns false.
  bool step(Vec& params, const Vec& grad);

  const OptimizerSettings& settings() const { return settings_; }
  std::int64_t steps() const { return step_; }
  std::int64_t rejected_steps() const { return rejected_; }
  const Vec& first_moment() const { return m_; }
  const Vec& second_moment() const { return v_; }

 private:
  OptimizerSettings settings_;
  Vec m_;
  Vec v_;
  std::int64_t step_ = 0;
  std::int64_t rejected_ = 0;
};

}  // namespace ilmpc
