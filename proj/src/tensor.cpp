#include "ecnn/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "ecnn/errors.hpp"

namespace ecnn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  for (auto e : shape)
    if (e == 0) throw InvalidShape("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw InvalidShape("shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) throw InvalidShape("axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
  return node_->shape[i];
}

double Tensor::item() const {
  if (numel() != 1) throw InvalidShape("item() needs a single-element tensor, got " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() const { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> grad_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_);
    node->grad_fn = std::move(grad_fn);
  }
  return Tensor(std::move(node));
}

std::vector<double>& grad_buffer(detail::Node& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

void Tensor::backward() const {
  if (!node_->requires_grad)
    throw InvalidState("backward() on a tensor that is not produced by tracked operations");
  if (numel() != 1) throw InvalidShape("backward() needs a single-element loss, got " + shape_str(shape()));

  // Iterative post-order DFS; `order` ends up topologically sorted.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass; leaves accumulate.
  for (auto* n : order)
    if (n->grad_fn) n->grad.assign(n->data.size(), 0.0);
  grad_buffer(*node_)[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->grad_fn) (*it)->grad_fn(**it);
}

}  // namespace ecnn
