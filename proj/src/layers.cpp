#include "ecnn/layers.hpp"

#include <cmath>

#include "ecnn/errors.hpp"

namespace ecnn {

void Layer::collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const {
  for (const auto& p : params_) out.push_back({prefix + p.name, p.tensor});
  for (const auto& [name, c] : children_) c->collect_parameters(out, prefix + name + ".");
}

void Layer::collect_buffers(std::vector<NamedTensor>& out, const std::string& prefix) const {
  for (const auto& b : buffers_) out.push_back({prefix + b.name, b.tensor});
  for (const auto& [name, c] : children_) c->collect_buffers(out, prefix + name + ".");
}

void Layer::walk(const std::function<void(const std::string&, const Layer&)>& fn, const std::string& path) const {
  fn(path, *this);
  for (const auto& [name, c] : children_) c->walk(fn, path.empty() ? name : path + "." + name);
}

Tensor& Layer::add_parameter(std::string name, Tensor t) {
  params_.push_back({std::move(name), std::move(t)});
  return params_.back().tensor;
}

void Layer::add_buffer(std::string name, Tensor t) { buffers_.push_back({std::move(name), std::move(t)}); }

Layer& Layer::add_child(std::string name, std::unique_ptr<Layer> child) {
  children_.emplace_back(std::move(name), std::move(child));
  return *children_.back().second;
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(values), true);
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t padding, bool bias, SplitMix64& rng)
    : stride_(stride), padding_(padding) {
  weight_ = add_parameter("weight", fan_in_uniform({out_channels, in_channels, kernel, kernel},
                                                   in_channels * kernel * kernel, rng));
  if (bias) bias_ = add_parameter("bias", Tensor::zeros({out_channels}, true));
}

Tensor Conv2d::forward(const Tensor& x, Mode) const { return conv2d(x, weight_, bias_, stride_, padding_); }

SeparableConv2d::SeparableConv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                 std::size_t stride, SplitMix64& rng)
    : stride_(stride), padding_(kernel / 2) {
  depthwise_ = add_parameter("depthwise", fan_in_uniform({in_channels, 1, kernel, kernel}, kernel * kernel, rng));
  pointwise_ = add_parameter("pointwise", fan_in_uniform({out_channels, in_channels, 1, 1}, in_channels, rng));
}

Tensor SeparableConv2d::forward(const Tensor& x, Mode) const {
  return depthwise_separable_conv(x, depthwise_, pointwise_, stride_, padding_);
}

ChannelNorm::ChannelNorm(std::size_t channels, double momentum, double eps) : state_(channels, momentum, eps) {
  gamma_ = add_parameter("gamma", Tensor::full({channels}, 1.0, true));
  beta_ = add_parameter("beta", Tensor::zeros({channels}, true));
  add_buffer("running_mean", state_.running_mean);
  add_buffer("running_var", state_.running_var);
}

Tensor ChannelNorm::forward(const Tensor& x, Mode mode) const { return channel_norm(x, gamma_, beta_, state_, mode); }

// He-uniform: the head starts with logits large enough to learn at small learning rates.
Linear::Linear(std::size_t in_features, std::size_t out_features, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_features));
  std::vector<double> w(out_features * in_features);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  weight_ = add_parameter("weight", Tensor({out_features, in_features}, std::move(w), true));
  bias_ = add_parameter("bias", Tensor::zeros({out_features}, true));
}

Tensor Linear::forward(const Tensor& x, Mode) const { return linear(x, weight_, bias_); }

Sequential& Sequential::then(std::string name, std::unique_ptr<Layer> layer) {
  add_child(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) const {
  Tensor y = x;
  for (std::size_t i = 0; i < num_children(); ++i) y = child(i).forward(y, mode);
  return y;
}

Residual::Residual(std::unique_ptr<Layer> body, std::unique_ptr<Layer> shortcut) : has_shortcut_(shortcut != nullptr) {
  add_child("body", std::move(body));
  if (shortcut) add_child("shortcut", std::move(shortcut));
}

Tensor Residual::forward(const Tensor& x, Mode mode) const {
  const Tensor main = child(0).forward(x, mode);
  return residual_add(main, has_shortcut_ ? child(1).forward(x, mode) : x);
}

DenseBlock::DenseBlock(std::size_t in_channels, std::size_t growth, std::size_t num_layers, std::size_t kernel,
                       SplitMix64& rng)
    : out_channels_(in_channels + num_layers * growth) {
  std::size_t channels = in_channels;
  for (std::size_t j = 0; j < num_layers; ++j) {
    auto layer = std::make_unique<Sequential>();
    layer->then("norm", std::make_unique<ChannelNorm>(channels))
        .then("act", std::make_unique<Act>(Activation::relu))
        .then("conv", std::make_unique<Conv2d>(channels, growth, kernel, 1, kernel / 2, false, rng));
    add_child("layer" + std::to_string(j + 1), std::move(layer));
    channels += growth;
  }
}

Tensor DenseBlock::forward(const Tensor& x, Mode mode) const {
  std::vector<Tensor> features{x};
  for (std::size_t j = 0; j < num_children(); ++j) {
    Tensor input = features.size() == 1 ? features.front() : concat_channels(features);
    features.push_back(child(j).forward(input, mode));
  }
  return features.size() == 1 ? features.front() : concat_channels(features);
}

}  // namespace ecnn
