#include "hybridnet/autodiff.hpp"

#include <algorithm>
#include <unordered_set>

#include "hybridnet/errors.hpp"

namespace hybridnet {

namespace detail {

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;
  Parameter* parameter = nullptr;
  bool requires_grad = false;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.numel(), 0.0);
    return grad;
  }
};

}  // namespace detail

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.dims()) {}

void zero_grads(std::span<Parameter> params) {
  for (auto& p : params) std::fill(p.grad.mutable_data().begin(), p.grad.mutable_data().end(), 0.0);
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) std::fill(p->grad.mutable_data().begin(), p->grad.mutable_data().end(), 0.0);
}

const Tensor& Var::value() const {
  if (!node_) throw ContractError("use of an undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> BackwardContext::output_grad() const { return node_.grad; }
const Tensor& BackwardContext::output_value() const { return node_.value; }
std::size_t BackwardContext::num_inputs() const { return node_.inputs.size(); }
const Tensor& BackwardContext::input_value(std::size_t i) const { return node_.inputs.at(i)->value; }
bool BackwardContext::needs_grad(std::size_t i) const { return node_.inputs.at(i)->requires_grad; }

std::span<double> BackwardContext::input_grad(std::size_t i) {
  auto& input = *node_.inputs.at(i);
  if (!input.requires_grad) return {};
  return input.grad_buffer();
}

Var constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var param(Parameter& p) {
  auto node = std::make_shared<detail::Node>();
  node->value = p.value;
  node->parameter = &p;
  node->requires_grad = true;
  return Var(std::move(node));
}

Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->inputs.reserve(inputs.size());
  for (auto& v : inputs) {
    if (!v.node_) throw ContractError("record(): undefined input Var");
    node->requires_grad = node->requires_grad || v.node_->requires_grad;
    node->inputs.push_back(std::move(v.node_));
  }
  if (node->requires_grad) node->backward_fn = std::move(fn);
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.node_) throw ContractError("backward() on undefined Var");
  if (loss.node_->value.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got dims " + shape_to_string(loss.dims()));
  }
  if (!loss.node_->requires_grad) return;

  // Iterative post-order DFS; `order` ends up topologically sorted (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) node->grad.clear();
  loss.node_->grad_buffer()[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->grad.empty()) continue;
    if (node->parameter != nullptr) {
      auto dst = node->parameter->grad.mutable_data();
      if (dst.size() != node->grad.size()) {
        throw ContractError("parameter '" + node->parameter->name + "' changed shape while recorded");
      }
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node->grad[i];
    } else if (node->backward_fn) {
      BackwardContext ctx(*node);
      node->backward_fn(ctx);
    }
  }
  for (auto* node : order) {
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

}  // namespace hybridnet
