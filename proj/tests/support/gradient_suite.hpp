// Finite-difference sweep over every differentiable primitive. Each case
// draws a random small shape (all dims <= 5) and checks the gradients of a
// randomly weighted sum of the op's output with respect to all inputs.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ecnn/ops.hpp"
#include "support/oracles.hpp"

namespace oracle {

struct OpGradientResult {
  std::string op;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst_relative = 0;
  double worst_absolute = 0;
};

namespace detail {

inline std::size_t pick(ecnn::SplitMix64& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Keeps inputs away from the ReLU kink so central differences stay on one side.
inline ecnn::Tensor away_from_zero(const ecnn::Shape& shape, ecnn::SplitMix64& rng) {
  ecnn::Tensor t = random_tensor(shape, rng, -1, 1, true);
  for (double& v : t.mutable_data())
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - std::abs(v) : 0.05 + v;
  return t;
}

inline ecnn::Tensor weighted_sum(const ecnn::Tensor& y, const ecnn::Tensor& weights) {
  return ecnn::sum(ecnn::mul(y, weights));
}

}  // namespace detail

/// Runs `cases` random instances of every primitive.
inline std::vector<OpGradientResult> run_gradient_suite(std::size_t cases, std::uint64_t seed) {
  using namespace ecnn;
  using detail::pick;
  SplitMix64 rng(seed);
  std::vector<OpGradientResult> results;

  auto run = [&](const std::string& name, const std::function<void(OpGradientResult&)>& one_case) {
    OpGradientResult r{name};
    for (std::size_t c = 0; c < cases; ++c) one_case(r);
    results.push_back(r);
  };
  auto record = [&](OpGradientResult& r, const std::function<Tensor()>& loss, const std::vector<Tensor>& wrt) {
    const GradCheck g = check_gradients(loss, wrt);
    ++r.cases;
    r.failures += !g.passed();
    r.worst_relative = std::max(r.worst_relative, g.worst_relative);
    r.worst_absolute = std::max(r.worst_absolute, g.worst_absolute);
  };
  auto out_weights = [&](const Tensor& probe) { return random_tensor(probe.shape(), rng, -1, 1); };

  run("conv2d", [&](OpGradientResult& r) {
    const std::size_t k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
    const std::size_t h = pick(rng, k, 5), w = pick(rng, k, 5), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const Tensor x = random_tensor({pick(rng, 1, 2), cin, h, w}, rng, -1, 1, true);
    const Tensor kern = random_tensor({cout, cin, k, k}, rng, -1, 1, true);
    const Tensor b = random_tensor({cout}, rng, -1, 1, true);
    const Tensor wts = out_weights(conv2d(x, kern, b, stride, pad));
    record(r, [&] { return detail::weighted_sum(conv2d(x, kern, b, stride, pad), wts); }, {x, kern, b});
  });

  run("depthwise_conv2d", [&](OpGradientResult& r) {
    const std::size_t k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, 1), c = pick(rng, 1, 4);
    const Tensor x = random_tensor({pick(rng, 1, 2), c, pick(rng, k, 5), pick(rng, k, 5)}, rng, -1, 1, true);
    const Tensor kern = random_tensor({c, 1, k, k}, rng, -1, 1, true);
    const Tensor wts = out_weights(depthwise_conv2d(x, kern, stride, pad));
    record(r, [&] { return detail::weighted_sum(depthwise_conv2d(x, kern, stride, pad), wts); }, {x, kern});
  });

  run("depthwise_separable_conv", [&](OpGradientResult& r) {
    const std::size_t k = 2 * pick(rng, 0, 1) + 1, stride = pick(rng, 1, 2), c = pick(rng, 1, 3), co = pick(rng, 1, 3);
    const Tensor x = random_tensor({pick(rng, 1, 2), c, pick(rng, k, 5), pick(rng, k, 5)}, rng, -1, 1, true);
    const Tensor dw = random_tensor({c, 1, k, k}, rng, -1, 1, true);
    const Tensor pw = random_tensor({co, c, 1, 1}, rng, -1, 1, true);
    const Tensor wts = out_weights(depthwise_separable_conv(x, dw, pw, stride, k / 2));
    record(r, [&] { return detail::weighted_sum(depthwise_separable_conv(x, dw, pw, stride, k / 2), wts); },
           {x, dw, pw});
  });

  run("channel_norm_train", [&](OpGradientResult& r) {
    const std::size_t c = pick(rng, 1, 3);
    const Shape shape{pick(rng, 1, 3), c, pick(rng, 1, 4), pick(rng, 2, 4)};
    const Tensor x = random_tensor(shape, rng, -2, 2, true);
    const Tensor gamma = random_tensor({c}, rng, 0.5, 1.5, true);
    const Tensor beta = random_tensor({c}, rng, -1, 1, true);
    NormState state(c);
    const Tensor wts = out_weights(x);
    record(r, [&] { return detail::weighted_sum(channel_norm(x, gamma, beta, state, Mode::train), wts); },
           {x, gamma, beta});
  });

  run("channel_norm_eval", [&](OpGradientResult& r) {
    const std::size_t c = pick(rng, 1, 3);
    const Shape shape{pick(rng, 1, 3), c, pick(rng, 1, 4), pick(rng, 1, 4)};
    const Tensor x = random_tensor(shape, rng, -2, 2, true);
    const Tensor gamma = random_tensor({c}, rng, 0.5, 1.5, true);
    const Tensor beta = random_tensor({c}, rng, -1, 1, true);
    NormState state(c);
    for (double& v : state.running_mean.mutable_data()) v = rng.uniform(-1, 1);
    for (double& v : state.running_var.mutable_data()) v = rng.uniform(0.5, 2);
    const Tensor wts = out_weights(x);
    record(r, [&] { return detail::weighted_sum(channel_norm(x, gamma, beta, state, Mode::eval), wts); },
           {x, gamma, beta});
  });

  for (const auto kind : {Activation::relu, Activation::swish}) {
    run(kind == Activation::relu ? "relu" : "swish", [&](OpGradientResult& r) {
      const Shape shape{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
      const Tensor x = kind == Activation::relu ? detail::away_from_zero(shape, rng)
                                                : random_tensor(shape, rng, -3, 3, true);
      const Tensor wts = out_weights(x);
      record(r, [&] { return detail::weighted_sum(activation(x, kind), wts); }, {x});
    });
  }

  run("global_avg_pool", [&](OpGradientResult& r) {
    const Tensor x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5)}, rng, -1, 1,
                                   true);
    const Tensor wts = out_weights(global_avg_pool(x));
    record(r, [&] { return detail::weighted_sum(global_avg_pool(x), wts); }, {x});
  });

  run("avg_pool2d", [&](OpGradientResult& r) {
    const std::size_t win = pick(rng, 1, 2);
    const Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), win * pick(rng, 1, 2), win * pick(rng, 1, 2)},
                                   rng, -1, 1, true);
    const Tensor wts = out_weights(avg_pool2d(x, win));
    record(r, [&] { return detail::weighted_sum(avg_pool2d(x, win), wts); }, {x});
  });

  run("linear", [&](OpGradientResult& r) {
    const std::size_t n = pick(rng, 1, 4), d = pick(rng, 1, 5), k = pick(rng, 1, 5);
    const Tensor x = random_tensor({n, d}, rng, -1, 1, true);
    const Tensor wt = random_tensor({k, d}, rng, -1, 1, true);
    const Tensor b = random_tensor({k}, rng, -1, 1, true);
    const Tensor wts = random_tensor({n, k}, rng, -1, 1);
    record(r, [&] { return detail::weighted_sum(linear(x, wt, b), wts); }, {x, wt, b});
  });

  run("concat_channels", [&](OpGradientResult& r) {
    const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    const Tensor a = random_tensor({n, pick(rng, 1, 3), h, w}, rng, -1, 1, true);
    const Tensor b = random_tensor({n, pick(rng, 1, 3), h, w}, rng, -1, 1, true);
    const std::vector<Tensor> parts{a, b};
    const Tensor wts = out_weights(concat_channels(parts));
    record(r, [&] { return detail::weighted_sum(concat_channels(parts), wts); }, {a, b});
  });

  run("residual_add", [&](OpGradientResult& r) {
    const Shape shape{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
    const Tensor a = random_tensor(shape, rng, -1, 1, true), b = random_tensor(shape, rng, -1, 1, true);
    const Tensor wts = out_weights(a);
    record(r, [&] { return detail::weighted_sum(residual_add(a, b), wts); }, {a, b});
  });

  run("softmax", [&](OpGradientResult& r) {
    const Tensor x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 5)}, rng, -3, 3, true);
    const Tensor wts = out_weights(x);
    record(r, [&] { return detail::weighted_sum(softmax(x), wts); }, {x});
  });

  run("cross_entropy", [&](OpGradientResult& r) {
    const std::size_t n = pick(rng, 1, 5), k = pick(rng, 1, 5);
    const Tensor x = random_tensor({n, k}, rng, -3, 3, true);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(k);
    record(r, [&] { return cross_entropy(x, labels); }, {x});
  });

  return results;
}

}  // namespace oracle
