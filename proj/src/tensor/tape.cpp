#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pai/tensor.hpp"

namespace pai {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape s) {
  const std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

double Tensor::item() const {
  if (data.size() != 1) throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(data.size()) + " elements");
  return data[0];
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var: not attached to a tape");
  return tape_->value(*this);
}

std::span<const double> Var::grad() const {
  if (!tape_) throw std::logic_error("Var: not attached to a tape");
  return tape_->grad(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->node_requires_grad(id_); }

namespace {

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite value");
  }
}

}  // namespace

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument(std::string(op) + ": variable is detached from this tape");
  }
}

Var Tape::add_leaf(Tensor t, bool requires_grad) {
  if (t.data.empty() || shape_numel(t.shape) != t.data.size()) {
    throw std::invalid_argument("Tape: leaf tensor shape " + shape_str(t.shape) + " does not match data");
  }
  check_finite(t, "Tape leaf");
  Node node;
  node.requires_grad = requires_grad;
  node.leaf = true;
  if (requires_grad && t.grad && t.grad->size() == t.data.size()) node.grad = *t.grad;
  t.requires_grad = requires_grad;
  t.grad.reset();
  node.value = std::move(t);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor t) { return add_leaf(std::move(t), false); }

Var Tape::parameter(Tensor t) { return add_leaf(std::move(t), true); }

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  check_finite(value, "Tape op output");
  Node node;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw std::logic_error("Tape::record: unknown input node");
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  value.requires_grad = node.requires_grad;
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "Tape::value");
  return nodes_[v.id_].value;
}

std::span<const double> Tape::grad(Var v) const {
  check_owned(v, "Tape::grad");
  const Node& n = nodes_[v.id_];
  if (!n.requires_grad) throw std::invalid_argument("Tape::grad: variable does not require grad");
  if (n.grad.empty()) {
    // No backward has touched this node yet; report zeros of the right size.
    const_cast<Node&>(n).grad.assign(n.value.numel(), 0.0);
  }
  return n.grad;
}

Tensor Tape::leaf(Var v) const {
  check_owned(v, "Tape::leaf");
  Tensor t = nodes_[v.id_].value;
  if (t.requires_grad) {
    auto g = grad(v);
    t.grad = std::vector<double>(g.begin(), g.end());
  }
  return t;
}

std::vector<double>& Tape::node_grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  const Node& out = nodes_[loss.id_];
  if (out.value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(out.value.shape));
  }
  if (!out.requires_grad) {
    throw std::invalid_argument("backward: loss is detached from every parameter on the tape");
  }
  for (std::size_t id = 0; id <= loss.id_; ++id) {
    Node& n = nodes_[id];
    if (!n.leaf && n.requires_grad) n.grad.assign(n.value.numel(), 0.0);
  }
  node_grad(loss.id_)[0] += 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.leaf || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

// --- gradients & HVP -------------------------------------------------------

ValueAndGrad value_and_grad(const LossBuilder& loss, std::span<const double> theta) {
  Tape tape;
  Var t = tape.parameter(Tensor({theta.size()}, std::vector<double>(theta.begin(), theta.end())));
  Var l = loss(tape, t);
  tape.backward(l);
  auto g = tape.grad(t);
  return {l.value().item(), std::vector<double>(g.begin(), g.end())};
}

GradientFn gradient_fn(LossBuilder loss) {
  return [loss = std::move(loss)](std::span<const double> theta) { return value_and_grad(loss, theta).grad; };
}

double default_hvp_step(std::span<const double> theta) {
  double inf_norm = 0.0;
  for (double v : theta) inf_norm = std::max(inf_norm, std::abs(v));
  return 1e-4 * (1.0 + inf_norm);
}

std::vector<double> hessian_vector_product(const GradientFn& grad, std::span<const double> theta,
                                           std::span<const double> v, double h) {
  if (v.size() != theta.size()) {
    throw std::invalid_argument("hessian_vector_product: v has " + std::to_string(v.size()) +
                                " entries, theta has " + std::to_string(theta.size()));
  }
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("hessian_vector_product: step must be > 0");
  std::vector<double> plus(theta.begin(), theta.end());
  std::vector<double> minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += h * v[i];
    minus[i] -= h * v[i];
  }
  const std::vector<double> gp = grad(plus);
  const std::vector<double> gm = grad(minus);
  if (gp.size() != theta.size() || gm.size() != theta.size()) {
    throw std::invalid_argument("hessian_vector_product: gradient has wrong length");
  }
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (gp[i] - gm[i]) / (2.0 * h);
    if (!std::isfinite(out[i])) throw std::domain_error("hessian_vector_product: non-finite intermediate");
  }
  return out;
}

std::vector<double> hessian_vector_product(const LossBuilder& loss, std::span<const double> theta,
                                           std::span<const double> v, double h) {
  return hessian_vector_product(gradient_fn(loss), theta, v, h);
}

}  // namespace pai
