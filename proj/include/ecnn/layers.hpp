#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ecnn/ops.hpp"
#include "ecnn/random.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Building block of a model graph. A layer owns its parameters (trainable
/// tensors) and buffers (normalization statistics) plus named child layers.
class Layer {
 public:
  Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) const = 0;
  virtual std::string_view kind() const = 0;

  /// Depth-first, registration order. Names are dot-joined paths.
  void collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix = "") const;
  void collect_buffers(std::vector<NamedTensor>& out, const std::string& prefix = "") const;
  /// Visits this layer and every descendant with its path.
  void walk(const std::function<void(const std::string&, const Layer&)>& fn, const std::string& path = "") const;

 protected:
  Tensor& add_parameter(std::string name, Tensor t);
  void add_buffer(std::string name, Tensor t);
  Layer& add_child(std::string name, std::unique_ptr<Layer> child);
  const Layer& child(std::size_t i) const { return *children_[i].second; }
  std::size_t num_children() const { return children_.size(); }

 private:
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Layer>>> children_;
};

/// Uniform(-b, b) with b = 1 / sqrt(fan_in).
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, SplitMix64& rng);

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, bool bias, SplitMix64& rng);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "conv2d"; }

 private:
  Tensor weight_;
  std::optional<Tensor> bias_;
  std::size_t stride_, padding_;
};

/// Depthwise kernel then 1x1 pointwise kernel, no bias.
class SeparableConv2d final : public Layer {
 public:
  SeparableConv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                  SplitMix64& rng);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "separable_conv2d"; }

 private:
  Tensor depthwise_, pointwise_;
  std::size_t stride_, padding_;
};

class ChannelNorm final : public Layer {
 public:
  explicit ChannelNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "channel_norm"; }

 private:
  Tensor gamma_, beta_;
  // Running statistics are written through by train-mode forward calls.
  mutable NormState state_;
};

class Act final : public Layer {
 public:
  explicit Act(Activation kind) : kind_(kind) {}
  Tensor forward(const Tensor& x, Mode) const override { return activation(x, kind_); }
  std::string_view kind() const override { return kind_ == Activation::relu ? "relu" : "swish"; }

 private:
  Activation kind_;
};

class AvgPool final : public Layer {
 public:
  explicit AvgPool(std::size_t window) : window_(window) {}
  Tensor forward(const Tensor& x, Mode) const override { return avg_pool2d(x, window_); }
  std::string_view kind() const override { return "avg_pool"; }

 private:
  std::size_t window_;
};

class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode) const override { return global_avg_pool(x); }
  std::string_view kind() const override { return "global_avg_pool"; }
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in_features, std::size_t out_features, SplitMix64& rng);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "linear"; }

 private:
  Tensor weight_, bias_;
};

class Sequential final : public Layer {
 public:
  Sequential& then(std::string name, std::unique_ptr<Layer> layer);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "sequential"; }
};

/// body(x) + shortcut(x); the shortcut is the identity when absent.
class Residual final : public Layer {
 public:
  Residual(std::unique_ptr<Layer> body, std::unique_ptr<Layer> shortcut);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "residual"; }

 private:
  bool has_shortcut_;
};

/// Each inner layer sees the concatenation of the block input and every
/// earlier layer output, and contributes `growth` channels.
class DenseBlock final : public Layer {
 public:
  DenseBlock(std::size_t in_channels, std::size_t growth, std::size_t num_layers, std::size_t kernel,
             SplitMix64& rng);
  Tensor forward(const Tensor& x, Mode mode) const override;
  std::string_view kind() const override { return "dense_block"; }
  std::size_t out_channels() const { return out_channels_; }

 private:
  std::size_t out_channels_;
};

}  // namespace ecnn
