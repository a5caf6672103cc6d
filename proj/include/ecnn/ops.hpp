#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "ecnn/tensor.hpp"

namespace ecnn {

enum class Mode { train, eval };
enum class Activation { relu, swish };

/// Running statistics of one channel_norm site. The tensors never track
/// gradients; they are mutated in place by train-mode calls.
struct NormState {
  explicit NormState(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor running_mean;
  Tensor running_var;
  double momentum;
  double eps;
};

/// 2-D cross-correlation with zero padding.
/// input [N,Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding);

/// Per-channel spatial convolution; kernel [C,1,kH,kW].
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
                        std::size_t padding);

/// Depthwise conv followed by a 1x1 pointwise conv [Cout,C,1,1]. Neither stage has a bias.
Tensor depthwise_separable_conv(const Tensor& input, const Tensor& depthwise, const Tensor& pointwise,
                                std::size_t stride, std::size_t padding);

Tensor relu(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor activation(const Tensor& x, Activation kind);

/// Per-channel normalization of [N,C,H,W]. Train mode uses batch statistics
/// (biased variance) and folds them into `state`; eval mode uses the running
/// statistics.
Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormState& state,
                    Mode mode);

/// [N,C,H,W] -> [N,C], spatial mean.
Tensor global_avg_pool(const Tensor& x);

/// Non-overlapping average pooling with a window x window kernel and equal stride.
Tensor avg_pool2d(const Tensor& x, std::size_t window);

/// x [N,D], weight [K,D], bias [K] -> [N,K].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor concat_channels(std::span<const Tensor> parts);

/// Elementwise sum of equally shaped tensors.
Tensor residual_add(const Tensor& x, const Tensor& y);

/// Elementwise product of equally shaped tensors.
Tensor mul(const Tensor& x, const Tensor& y);

/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);

/// Row-wise softmax of [N,K].
Tensor softmax(const Tensor& logits);

/// Mean negative log-likelihood of `labels` under softmax(logits); shape [1].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace ecnn
