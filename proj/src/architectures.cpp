#include "ecnn/architectures.hpp"

#include <cmath>

#include "ecnn/errors.hpp"

namespace ecnn {
namespace {

std::unique_ptr<Sequential> stem(std::size_t in, std::size_t out, std::size_t kernel, Activation act,
                                 SplitMix64& rng) {
  auto s = std::make_unique<Sequential>();
  s->then("conv", std::make_unique<Conv2d>(in, out, kernel, 1, kernel / 2, false, rng))
      .then("norm", std::make_unique<ChannelNorm>(out))
      .then("act", std::make_unique<Act>(act));
  return s;
}

std::unique_ptr<Sequential> head(std::size_t channels, std::size_t classes, SplitMix64& rng) {
  auto h = std::make_unique<Sequential>();
  h->then("pool", std::make_unique<GlobalAvgPool>()).then("fc", std::make_unique<Linear>(channels, classes, rng));
  return h;
}

}  // namespace

Model::Model(ArchSpec spec, std::unique_ptr<Layer> net)
    : spec_(std::move(spec)),
      net_(std::move(net)),
      resolution_(ecnn::input_resolution(spec_)),
      input_channels_(ecnn::input_channels(spec_)),
      num_classes_(ecnn::num_classes(spec_)) {
  net_->collect_parameters(params_);
  net_->collect_buffers(buffers_);
}

Tensor Model::forward(const Tensor& batch, Mode mode) const {
  const Shape expected{batch.rank() == 4 ? batch.dim(0) : 1, input_channels_, resolution_, resolution_};
  if (batch.rank() != 4 || batch.shape() != expected)
    throw InvalidShape(family() + " model expects input " + shape_str(expected) + " (N x C x R x R), got " +
                       shape_str(batch.shape()));
  return net_->forward(batch, mode);
}

void Model::zero_grad() const {
  for (const auto& p : params_) p.tensor.zero_grad();
}

Model build_xception_like(const XceptionSpec& spec, std::uint64_t seed) {
  validate(spec);
  SplitMix64 rng(seed);
  auto net = std::make_unique<Sequential>();
  const std::size_t k = spec.kernel_size;
  net->then("stem", stem(spec.input_channels, spec.stem_channels, k, Activation::relu, rng));

  std::size_t channels = spec.stem_channels;
  std::size_t extent = spec.input_resolution;
  for (std::size_t m = 0; m < spec.num_modules; ++m) {
    const std::size_t out = spec.channels_per_module[m];
    // Widening modules also halve the resolution, as in the entry/exit flows.
    const std::size_t stride = (out != channels && extent >= 2) ? 2 : 1;
    // Even extents downsample by pooling after full-resolution convs; odd ones stride the first conv.
    const bool pool = stride == 2 && extent % 2 == 0;

    auto body = std::make_unique<Sequential>();
    body->then("act1", std::make_unique<Act>(Activation::relu))
        .then("sep1", std::make_unique<SeparableConv2d>(channels, out, k, pool ? 1 : stride, rng))
        .then("norm1", std::make_unique<ChannelNorm>(out))
        .then("act2", std::make_unique<Act>(Activation::relu))
        .then("sep2", std::make_unique<SeparableConv2d>(out, out, k, 1, rng))
        .then("norm2", std::make_unique<ChannelNorm>(out));
    if (pool) body->then("pool", std::make_unique<AvgPool>(2));

    const std::string name = "module" + std::to_string(m + 1);
    const bool shortcut = m != 0 && m + 1 != spec.num_modules;
    if (shortcut) {
      std::unique_ptr<Sequential> projection;
      if (out != channels || stride != 1) {
        projection = std::make_unique<Sequential>();
        projection->then("conv", std::make_unique<Conv2d>(channels, out, 1, stride, 0, false, rng))
            .then("norm", std::make_unique<ChannelNorm>(out));
      }
      net->then(name, std::make_unique<Residual>(std::move(body), std::move(projection)));
    } else {
      net->then(name, std::move(body));
    }
    channels = out;
    if (stride == 2) extent = halve(extent);
  }
  net->then("head", head(channels, spec.num_classes, rng));
  return Model(spec, std::move(net));
}

Model build_densenet_like(const DenseSpec& spec, std::uint64_t seed) {
  validate(spec);
  SplitMix64 rng(seed);
  auto net = std::make_unique<Sequential>();
  const std::size_t k = spec.kernel_size;
  net->then("stem", std::make_unique<Conv2d>(spec.input_channels, spec.initial_channels, k, 1, k / 2, false, rng));

  std::size_t channels = spec.initial_channels;
  std::size_t extent = spec.input_resolution;
  for (std::size_t b = 0; b < spec.block_layout.size(); ++b) {
    auto block = std::make_unique<DenseBlock>(channels, spec.growth_rate, spec.block_layout[b], k, rng);
    channels = block->out_channels();
    net->then("block" + std::to_string(b + 1), std::move(block));
    if (b + 1 == spec.block_layout.size()) break;

    if (extent % 2 != 0)
      throw InvalidSpec("densenet spec: transition " + std::to_string(b + 1) + " receives odd spatial size " +
                        std::to_string(extent) + " that cannot be halved");
    const auto reduced = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(spec.compression * static_cast<double>(channels) + 1e-9)));
    auto transition = std::make_unique<Sequential>();
    transition->then("norm", std::make_unique<ChannelNorm>(channels))
        .then("act", std::make_unique<Act>(Activation::relu))
        .then("conv", std::make_unique<Conv2d>(channels, reduced, 1, 1, 0, false, rng))
        .then("pool", std::make_unique<AvgPool>(2));
    net->then("transition" + std::to_string(b + 1), std::move(transition));
    channels = reduced;
    extent /= 2;
  }
  auto final_norm = std::make_unique<Sequential>();
  final_norm->then("norm", std::make_unique<ChannelNorm>(channels))
      .then("act", std::make_unique<Act>(Activation::relu));
  net->then("final", std::move(final_norm));
  net->then("head", head(channels, spec.num_classes, rng));
  return Model(spec, std::move(net));
}

Model build_efficientnet_like(const EffSpec& spec, std::uint64_t seed) {
  validate(spec);
  SplitMix64 rng(seed);
  auto net = std::make_unique<Sequential>();
  const std::size_t k = spec.kernel_size;
  std::size_t channels = spec.scaled_stem_channels();
  net->then("stem", stem(spec.input_channels, channels, k, Activation::swish, rng));

  const auto repeats = spec.scaled_repeats();
  const auto widths = spec.scaled_widths();
  std::size_t extent = spec.scaled_resolution();
  for (std::size_t s = 0; s < repeats.size(); ++s) {
    auto stage = std::make_unique<Sequential>();
    for (std::size_t r = 0; r < repeats[s]; ++r) {
      const std::size_t stride = (r == 0 && s > 0 && extent >= 2) ? 2 : 1;
      const bool pool = stride == 2 && extent % 2 == 0;
      auto block = std::make_unique<Sequential>();
      block->then("sep", std::make_unique<SeparableConv2d>(channels, widths[s], k, pool ? 1 : stride, rng))
          .then("norm", std::make_unique<ChannelNorm>(widths[s]))
          .then("act", std::make_unique<Act>(Activation::swish));
      if (pool) block->then("pool", std::make_unique<AvgPool>(2));
      const std::string name = "block" + std::to_string(r + 1);
      if (stride == 1 && channels == widths[s])
        stage->then(name, std::make_unique<Residual>(std::move(block), nullptr));
      else
        stage->then(name, std::move(block));
      channels = widths[s];
      if (stride == 2) extent = halve(extent);
    }
    net->then("stage" + std::to_string(s + 1), std::move(stage));
  }
  net->then("head", head(channels, spec.num_classes, rng));
  return Model(spec, std::move(net));
}

Model build_model(const ArchSpec& spec, std::uint64_t seed) {
  return std::visit(
      [seed](const auto& s) -> Model {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, XceptionSpec>) return build_xception_like(s, seed);
        else if constexpr (std::is_same_v<T, DenseSpec>) return build_densenet_like(s, seed);
        else return build_efficientnet_like(s, seed);
      },
      spec);
}

std::size_t count_parameters(const Model& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters()) total += p.tensor.numel();
  return total;
}

std::size_t count_layers(const Model& model, std::string_view kind) {
  std::size_t n = 0;
  model.net().walk([&](const std::string&, const Layer& layer) { n += layer.kind() == kind; });
  return n;
}

}  // namespace ecnn
