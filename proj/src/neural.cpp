#include "ilmpc/neural.hpp"

#include <cmath>
#include <sstream>

#include "ilmpc/errors.hpp"

namespace ilmpc {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw ContractViolation("Mlp: need at least input and output sizes");
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw ContractViolation("Mlp: layer sizes must be >= 1");
    weight_offset_.push_back(offset);
    offset += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    bias_offset_.push_back(offset);
    offset += sizes_[l + 1];
  }
  params_ = Vec::Zero(offset);
}

Mlp Mlp::random(std::vector<int> layer_sizes, Rng& rng) {
  Mlp net(std::move(layer_sizes));
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    auto W = net.weight(l);
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  }
  return net;
}

Eigen::Map<const Mat> Mlp::weight(int l) const {
  return {params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Mat> Mlp::weight(int l) {
  return {params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const Vec> Mlp::bias(int l) const {
  return {params_.data() + bias_offset_[l], sizes_[l + 1]};
}
Eigen::Map<Vec> Mlp::bias(int l) { return {params_.data() + bias_offset_[l], sizes_[l + 1]}; }

Vec Mlp::forward(const Vec& x) const {
  if (x.size() != input_size()) {
    std::ostringstream os;
    os << "Mlp::forward: input length " << x.size() << ", expected " << input_size();
    throw ContractViolation(os.str());
  }
  Vec a = x;
  for (int l = 0; l < num_layers(); ++l) {
    Vec z = weight(l) * a + bias(l);
    if (l + 1 < num_layers())
      a = z.array().tanh().matrix();
    else
      a = std::move(z);
  }
  return a;
}

Mat Mlp::forward(const Mat& X, MlpTape* tape) const {
  if (X.rows() != input_size()) {
    std::ostringstream os;
    os << "Mlp::forward: input has " << X.rows() << " rows, expected " << input_size();
    throw ContractViolation(os.str());
  }
  if (tape) {
    tape->activations.resize(num_layers() + 1);
    tape->activations[0] = X;
  }
  Mat a = X;
  for (int l = 0; l < num_layers(); ++l) {
    Mat z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < num_layers())
      a = z.array().tanh().matrix();
    else
      a = std::move(z);
    if (tape) tape->activations[l + 1] = a;
  }
  return a;
}

Mat Mlp::backward(const MlpTape& tape, const Mat& upstream, Vec* param_grad) const {
  const int L = num_layers();
  if (static_cast<int>(tape.activations.size()) != L + 1)
    throw ContractViolation("Mlp::backward: tape does not belong to this network");
  if (upstream.rows() != output_size() || upstream.cols() != tape.activations[0].cols())
    throw ContractViolation("Mlp::backward: upstream shape mismatch");
  if (param_grad && param_grad->size() != num_params())
    throw ContractViolation("Mlp::backward: gradient buffer has wrong size");

  Mat g = upstream;
  for (int l = L - 1; l >= 0; --l) {
    if (l != L - 1) {
      const Mat& a = tape.activations[l + 1];
      g.array() *= (1.0 - a.array().square());
    }
    if (param_grad) {
      Eigen::Map<Mat> dW(param_grad->data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
      Eigen::Map<Vec> db(param_grad->data() + bias_offset_[l], sizes_[l + 1]);
      dW.noalias() += g * tape.activations[l].transpose();
      db += g.rowwise().sum();
    }
    g = weight(l).transpose() * g;
  }
  return g;
}

InputScaling InputScaling::identity(int dim) {
  return {Vec::Zero(dim), Vec::Ones(dim)};
}

InputScaling InputScaling::from_box(const Box& box) {
  InputScaling s{box.center(), box.half_width()};
  for (Eigen::Index i = 0; i < s.scale.size(); ++i)
    if (!(s.scale[i] > 0.0)) s.scale[i] = 1.0;
  return s;
}

Mat InputScaling::apply(const Mat& X) const {
  return (X.colwise() - center).array().colwise() / scale.array();
}

Vec InputScaling::apply(const Vec& x) const {
  return ((x - center).array() / scale.array()).matrix();
}

Certificate::Certificate(Mlp w_net, double level, InputScaling scaling)
    : net_(std::move(w_net)), level_(level), scaling_(std::move(scaling)) {
  if (scaling_.center.size() != net_.input_size())
    throw ContractViolation("Certificate: scaling dimension mismatch");
}

Certificate::Certificate(Mlp w_net, double level, InputScaling scaling, State anchor)
    : Certificate(std::move(w_net), level, std::move(scaling)) {
  if (anchor.size() != net_.input_size())
    throw ContractViolation("Certificate: anchor dimension mismatch");
  anchored_ = true;
  anchor_ = std::move(anchor);
}

Certificate Certificate::random(int state_dim, std::vector<int> hidden, int output_dim,
                                double level, InputScaling scaling, const State* anchor,
                                Rng& rng) {
  std::vector<int> sizes{state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);
  Mlp net = Mlp::random(sizes, rng);
  if (anchor) return Certificate(std::move(net), level, std::move(scaling), *anchor);
  return Certificate(std::move(net), level, std::move(scaling));
}

Vec Certificate::w(const State& x) const {
  Vec out = net_.forward(scaling_.apply(x));
  if (anchored_) out -= net_.forward(scaling_.apply(anchor_));
  return out;
}

double Certificate::value(const State& x) const { return w(x).squaredNorm(); }

double Certificate::value(const State& x, Vec& grad_x) const {
  CertificateTape tape;
  Mat X = x;
  const Vec v = evaluate(X, tape);
  grad_x = backpropagate(tape, Vec::Ones(1), nullptr).col(0);
  return v[0];
}

Vec Certificate::values(const Mat& X) const {
  Mat W = net_.forward(scaling_.apply(X), nullptr);
  if (anchored_) W.colwise() -= net_.forward(scaling_.apply(anchor_));
  return W.colwise().squaredNorm().transpose();
}

Vec Certificate::evaluate(const Mat& X, CertificateTape& tape) const {
  tape.w = net_.forward(scaling_.apply(X), &tape.net);
  if (anchored_) {
    const Mat a = scaling_.apply(Mat(anchor_));
    const Mat wf = net_.forward(a, &tape.anchor);
    tape.w.colwise() -= wf.col(0);
  }
  return tape.w.colwise().squaredNorm().transpose();
}

Mat Certificate::backpropagate(const CertificateTape& tape, const Vec& dV, Vec* param_grad) const {
  if (dV.size() != tape.w.cols()) throw ContractViolation("Certificate::backpropagate: size mismatch");
  Mat up = 2.0 * tape.w * dV.asDiagonal();
  Mat gin = net_.backward(tape.net, up, param_grad);
  if (anchored_ && param_grad) {
    const Mat up_anchor = -up.rowwise().sum();
    net_.backward(tape.anchor, up_anchor, param_grad);
  }
  return gin.array().colwise() / scaling_.scale.array();
}

Policy::Policy(Mlp net, Box input_box, InputScaling scaling)
    : net_(std::move(net)), box_(std::move(input_box)), scaling_(std::move(scaling)) {
  if (net_.output_size() != box_.dim()) throw ContractViolation("Policy: output/box dimension mismatch");
  if (scaling_.center.size() != net_.input_size())
    throw ContractViolation("Policy: scaling dimension mismatch");
}

Policy Policy::random(int state_dim, std::vector<int> hidden, const Box& input_box,
                      InputScaling scaling, Rng& rng) {
  std::vector<int> sizes{state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(input_box.dim());
  return Policy(Mlp::random(sizes, rng), input_box, std::move(scaling));
}

Input squash_to_box(const Vec& raw, const Box& box) {
  return box.center() + (box.half_width().array() * raw.array().tanh()).matrix();
}

Input Policy::action(const State& x) const { return squash_to_box(net_.forward(scaling_.apply(x)), box_); }

Mat Policy::actions(const Mat& X, PolicyTape* tape) const {
  Mat raw = net_.forward(scaling_.apply(X), tape ? &tape->net : nullptr);
  Mat t = raw.array().tanh().matrix();
  Mat u = (t.array().colwise() * box_.half_width().array()).matrix();
  u.colwise() += box_.center();
  if (tape) tape->squashed = std::move(t);
  return u;
}

Mat Policy::backpropagate(const PolicyTape& tape, const Mat& dU, Vec* param_grad) const {
  Mat draw = (dU.array().colwise() * box_.half_width().array()) * (1.0 - tape.squashed.array().square());
  Mat gin = net_.backward(tape.net, draw, param_grad);
  return gin.array().colwise() / scaling_.scale.array();
}

Optimizer::Optimizer(OptimizerSettings settings, Eigen::Index num_params)
    : settings_(settings), m_(Vec::Zero(num_params)), v_(Vec::Zero(num_params)) {}

bool Optimizer::step(Vec& params, const Vec& grad) {
  if (params.size() != grad.size() || params.size() != m_.size())
    throw ContractViolation("Optimizer::step: shape mismatch");
  if (!grad.allFinite()) {
    ++rejected_;
    return false;
  }
  ++step_;
  const double lr = settings_.learning_rate;
  if (settings_.method == OptimizerMethod::Sgd) {
    params -= lr * grad;
    return true;
  }
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + settings_.epsilon);
  return true;
}

}  // namespace ilmpc
