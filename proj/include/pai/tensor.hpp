#pragma once

// Dense float64 tensors and a reverse-mode autodiff tape.
//
// A Tape owns every value produced while building an expression. Var is a
// lightweight handle (tape pointer plus node id). Tapes share no state, so
// independent tapes can be used from different threads.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pai {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;  // row-major
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s);
  static Tensor scalar(double v);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  double item() const;
};

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::span<const double> grad() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

class Tape {
 public:
  // Backward rule: receives the tape and the id of the node whose grad is being propagated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var parameter(Tensor t);

  // Populates grads of every requires_grad node reachable from `loss`. Leaf grads
  // accumulate across calls until zero_grad(); intermediate grads are reset.
  void backward(Var loss);
  void zero_grad();

  const Tensor& value(Var v) const;
  std::span<const double> grad(Var v) const;
  // Leaf value with its grad buffer attached.
  Tensor leaf(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Op construction. `inputs` are node ids; backward may be empty when no input
  // requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  std::vector<double>& node_grad(std::size_t id);
  bool node_requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& node_inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
  };

  void check_owned(Var v, const char* op) const;
  Var add_leaf(Tensor t, bool requires_grad);

  std::vector<Node> nodes_;
  friend class Var;
};

// --- forward ops; each records itself on the tape of its inputs ---

// (m,k) x (k,n) -> (m,n)
Var matmul(Var a, Var b);
// x (n,in) times w (out,in) transposed -> (n,out); the dense-layer product.
Var linear(Var x, Var w);
// x (n,c) or (n,c,h,w) plus per-channel bias b (c)
Var add_bias(Var x, Var b);
// x (n,c,h,w), w (o,c,kh,kw) -> (n,o,h',w') with zero padding
Var conv2d(Var x, Var w, Conv2dParams params);
Var relu(Var x);
// (n, ...) -> (n, prod(...))
Var flatten(Var x);
Var mul(Var a, Var b);
Var add(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);
// Mean over the batch of -log softmax(logits)[label]; logits (n,classes).
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

// --- gradients and Hessian-vector products over a flat parameter vector ---

// Builds a scalar loss on `tape` from the parameter var `theta` (shape {m}).
using LossBuilder = std::function<Var(Tape& tape, Var theta)>;
// Maps parameters to the gradient of some loss.
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

struct ValueAndGrad {
  double value;
  std::vector<double> grad;
};

ValueAndGrad value_and_grad(const LossBuilder& loss, std::span<const double> theta);
GradientFn gradient_fn(LossBuilder loss);

// 1e-4 * (1 + max|theta_i|)
double default_hvp_step(std::span<const double> theta);

// Central difference of gradients: (g(theta + h v) - g(theta - h v)) / (2h).
std::vector<double> hessian_vector_product(const GradientFn& grad, std::span<const double> theta,
                                           std::span<const double> v, double h);
std::vector<double> hessian_vector_product(const LossBuilder& loss, std::span<const double> theta,
                                           std::span<const double> v, double h);

}  // namespace pai
