#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ecnn/arch_spec.hpp"
#include "ecnn/layers.hpp"

namespace ecnn {

/// A built network: layer graph, its parameters and buffers, and metadata.
class Model {
 public:
  Model(ArchSpec spec, std::unique_ptr<Layer> net);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// Logits [N, num_classes]. `batch` must be [N, input_channels, R, R].
  Tensor forward(const Tensor& batch, Mode mode = Mode::eval) const;

  const ArchSpec& spec() const { return spec_; }
  std::string family() const { return family_name(spec_); }
  std::size_t resolution() const { return resolution_; }
  std::size_t input_channels() const { return input_channels_; }
  std::size_t num_classes() const { return num_classes_; }

  std::span<const NamedTensor> parameters() const { return params_; }
  std::span<const NamedTensor> buffers() const { return buffers_; }
  const Layer& net() const { return *net_; }

  void zero_grad() const;

 private:
  ArchSpec spec_;
  std::unique_ptr<Layer> net_;
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
  std::size_t resolution_;
  std::size_t input_channels_;
  std::size_t num_classes_;
};

Model build_xception_like(const XceptionSpec& spec, std::uint64_t seed = 0);
Model build_densenet_like(const DenseSpec& spec, std::uint64_t seed = 0);
Model build_efficientnet_like(const EffSpec& spec, std::uint64_t seed = 0);
Model build_model(const ArchSpec& spec, std::uint64_t seed = 0);

std::size_t count_parameters(const Model& model);

/// Number of layers of the given kind() anywhere in the model graph.
std::size_t count_layers(const Model& model, std::string_view kind);

/// Spatial size after a stride-2, pad-k/2 convolution with odd kernel k.
constexpr std::size_t halve(std::size_t extent) { return (extent + 1) / 2; }

}  // namespace ecnn
