#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> grad_fn;
};

}  // namespace detail

/// Dense row-major float64 array with optional reverse-mode gradient.
///
/// A Tensor is a shared handle: copies alias the same storage, just like the
/// parameter handles of most training frameworks. Operations in ops.hpp build
/// a graph whenever any operand requires a gradient; `backward()` walks that
/// graph in reverse topological order.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Mutable view of the values. Only meaningful for leaves (parameters,
  /// inputs); mutating an interior node does not re-run the graph.
  std::span<double> mutable_data() const { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  /// Zero-fills the gradient buffer if one exists.
  void zero_grad() const;
  /// True for tensors not produced by a tracked operation.
  bool is_leaf() const { return !node_->grad_fn; }

  /// Reverse-mode accumulation from this single-element tensor.
  /// Leaf gradients accumulate additively across calls.
  void backward() const;

  /// Fresh copy of the values with no graph history and no grad tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Graph construction, used by operation implementations.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> grad_fn);
  detail::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Grad buffer of `node`, allocated (zero-filled) on first use.
std::vector<double>& grad_buffer(detail::Node& node);

}  // namespace ecnn
