#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hybridnet/tensor.hpp"

namespace hybridnet {

/// A learnable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name, Tensor value);
};

void zero_grads(std::span<Parameter> params);
void zero_grads(std::span<Parameter* const> params);

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

/// Handle to a value recorded in the differentiation graph. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& dims() const { return value().dims(); }
  bool requires_grad() const;
  bool defined() const { return static_cast<bool>(node_); }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Var constant(Tensor value);
  friend Var param(Parameter& p);
  friend Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);
  friend void backward(const Var& loss);
  friend class BackwardContext;
};

/// Passed to an op's backward function: exposes the output gradient and lazily
/// allocated (zero-initialized) accumulators for each input that needs one.
class BackwardContext {
 public:
  std::span<const double> output_grad() const;
  const Tensor& output_value() const;
  std::size_t num_inputs() const;
  const Tensor& input_value(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  std::span<double> input_grad(std::size_t i);

 private:
  explicit BackwardContext(detail::Node& node) : node_(node) {}
  detail::Node& node_;
  friend void backward(const Var& loss);
};

Var constant(Tensor value);

// Leaf that copies the parameter's current value; backward adds into p.grad.
// `p` must outlive the graph.
Var param(Parameter& p);

// Records a new graph node. `fn` is invoked during backward only when at least
// one input requires a gradient.
Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);

/// Reverse-mode sweep from a scalar. Adds d(loss)/d(value) into the grad of
/// every reachable Parameter; repeated calls accumulate.
void backward(const Var& loss);

}  // namespace hybridnet
