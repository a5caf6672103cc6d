#include "ecnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ecnn/errors.hpp"

namespace ecnn {
namespace {

using Index = std::ptrdiff_t;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank)
    throw InvalidShape(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                       ", got " + shape_str(t.shape()));
}

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t oh, ow;
  std::size_t stride, pad, groups;
  std::size_t cin_per_group, cout_per_group;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, std::size_t stride,
                           std::size_t padding, std::size_t groups, const char* op) {
  require_rank(input, 4, op, "input");
  require_rank(kernel, 4, op, "kernel");
  if (stride == 0) throw InvalidArgument(std::string(op) + ": stride must be positive");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.cin_per_group = kernel.dim(1);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  g.groups = groups;
  if (g.cin_per_group * groups != g.cin || g.cout % groups != 0)
    throw InvalidShape(std::string(op) + ": kernel " + shape_str(kernel.shape()) +
                       " does not match input " + shape_str(input.shape()));
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding)
    throw InvalidShape(std::string(op) + ": kernel " + shape_str(kernel.shape()) +
                       " larger than padded input " + shape_str(input.shape()));
  g.cout_per_group = g.cout / groups;
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Output indices o in [lo, hi) for which o*stride + k - pad lands inside [0, extent).
std::pair<Index, Index> valid_range(std::size_t k, std::size_t extent, std::size_t out_extent,
                                    std::size_t stride, std::size_t pad) {
  const Index s = static_cast<Index>(stride);
  const Index offset = static_cast<Index>(k) - static_cast<Index>(pad);
  Index lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  const Index last = static_cast<Index>(extent) - 1 - offset;
  Index hi = last < 0 ? 0 : last / s + 1;
  hi = std::min(hi, static_cast<Index>(out_extent));
  lo = std::min(lo, hi);
  return {lo, hi};
}

// y[i] += a * x[i]; the buffers never overlap.
inline void axpy(double a, const double* __restrict x, double* __restrict y, Index n) {
  for (Index i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four interleaved partial sums, combined in a fixed order.
inline double dot(const double* a, const double* b, Index n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  Index i = 0;
  for (; i + 4 <= n; i += 4)
    for (int l = 0; l < 4; ++l) acc[l] += a[i + l] * b[i + l];
  for (; i < n; ++i) acc[0] += a[i] * b[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

Tensor conv_grouped(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
                    std::size_t stride, std::size_t padding, std::size_t groups, const char* op) {
  const ConvGeometry g = conv_geometry(input, kernel, stride, padding, groups, op);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout))
    throw InvalidShape(std::string(op) + ": bias " + shape_str(bias->shape()) + " does not match kernel " +
                       shape_str(kernel.shape()));

  const std::size_t plane_in = g.h * g.w;
  const std::size_t plane_out = g.oh * g.ow;
  const Index s = static_cast<Index>(g.stride);
  const Index p = static_cast<Index>(g.pad);

  // Visits every (input element, weight, output element) triple of the
  // cross-correlation in a fixed order; forward and backward share it.
  auto for_each_tap = [g, s, p, plane_in, plane_out](auto&& fn) {
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t co = 0; co < g.cout; ++co) {
        const std::size_t group = co / g.cout_per_group;
        const std::size_t out_base = (n * g.cout + co) * plane_out;
        for (std::size_t cig = 0; cig < g.cin_per_group; ++cig) {
          const std::size_t ci = group * g.cin_per_group + cig;
          const std::size_t in_base = (n * g.cin + ci) * plane_in;
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const auto [oh_lo, oh_hi] = valid_range(ki, g.h, g.oh, g.stride, g.pad);
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const auto [ow_lo, ow_hi] = valid_range(kj, g.w, g.ow, g.stride, g.pad);
              const std::size_t widx = ((co * g.cin_per_group + cig) * g.kh + ki) * g.kw + kj;
              for (Index oh = oh_lo; oh < oh_hi; ++oh) {
                const Index ih = oh * s + static_cast<Index>(ki) - p;
                const std::size_t in_row = in_base + static_cast<std::size_t>(ih) * g.w;
                const std::size_t out_row = out_base + static_cast<std::size_t>(oh) * g.ow;
                fn(widx, in_row, out_row, ow_lo, ow_hi, static_cast<Index>(kj) - p);
              }
            }
          }
        }
      }
  };

  std::vector<double> out(g.n * g.cout * plane_out, 0.0);
  if (bias) {
    const auto b = bias->data();
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t co = 0; co < g.cout; ++co)
        std::fill_n(out.begin() + static_cast<Index>((n * g.cout + co) * plane_out), plane_out, b[co]);
  }
  {
    const double* x = input.data().data();
    const double* k = kernel.data().data();
    double* y = out.data();
    for_each_tap([&](std::size_t widx, std::size_t in_row, std::size_t out_row, Index lo, Index hi, Index off) {
      const double wv = k[widx];
      const double* xr = x + in_row;
      double* yr = y + out_row;
      if (s == 1)
        axpy(wv, xr + off + lo, yr + lo, hi - lo);
      else
        for (Index o = lo; o < hi; ++o) yr[o] += wv * xr[o * s + off];
    });
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return Tensor::make_result(
      {g.n, g.cout, g.oh, g.ow}, std::move(out), std::move(inputs),
      [g, s, plane_out, has_bias, for_each_tap](detail::Node& self) {
        auto& in_node = *self.parents[0];
        auto& k_node = *self.parents[1];
        const double* dy = self.grad.data();
        if (in_node.requires_grad) {
          double* dx = grad_buffer(in_node).data();
          const double* k = k_node.data.data();
          for_each_tap([&](std::size_t widx, std::size_t in_row, std::size_t out_row, Index lo, Index hi, Index off) {
            const double wv = k[widx];
            double* dxr = dx + in_row;
            const double* dyr = dy + out_row;
            if (s == 1)
              axpy(wv, dyr + lo, dxr + off + lo, hi - lo);
            else
              for (Index o = lo; o < hi; ++o) dxr[o * s + off] += wv * dyr[o];
          });
        }
        if (k_node.requires_grad) {
          double* dk = grad_buffer(k_node).data();
          const double* x = in_node.data.data();
          for_each_tap([&](std::size_t widx, std::size_t in_row, std::size_t out_row, Index lo, Index hi, Index off) {
            const double* xr = x + in_row;
            const double* dyr = dy + out_row;
            if (s == 1) {
              dk[widx] += dot(xr + off + lo, dyr + lo, hi - lo);
            } else {
              double acc = 0.0;
              for (Index o = lo; o < hi; ++o) acc += xr[o * s + off] * dyr[o];
              dk[widx] += acc;
            }
          });
        }
        if (has_bias && self.parents[2]->requires_grad) {
          double* db = grad_buffer(*self.parents[2]).data();
          for (std::size_t n = 0; n < g.n; ++n)
            for (std::size_t co = 0; co < g.cout; ++co) {
              const double* plane = dy + (n * g.cout + co) * plane_out;
              double acc = 0.0;
              for (std::size_t i = 0; i < plane_out; ++i) acc += plane[i];
              db[co] += acc;
            }
        }
      });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xs = x.data();
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), fwd);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [deriv](detail::Node& self) {
    auto& in = *self.parents[0];
    auto& dx = grad_buffer(in);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * deriv(in.data[i]);
  });
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void require_same_shape(const Tensor& x, const Tensor& y, const char* op) {
  if (x.shape() != y.shape())
    throw InvalidShape(std::string(op) + ": shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()) +
                       " differ");
}

}  // namespace

NormState::NormState(std::size_t channels, double momentum_, double eps_)
    : running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0)),
      momentum(momentum_),
      eps(eps_) {
  if (!(eps > 0.0)) throw InvalidArgument("channel_norm: eps must be positive");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw InvalidArgument("channel_norm: momentum must lie in [0,1]");
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding) {
  return conv_grouped(input, kernel, bias, stride, padding, 1, "conv2d");
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "depthwise_conv2d", "input");
  require_rank(kernel, 4, "depthwise_conv2d", "kernel");
  if (kernel.dim(0) != input.dim(1) || kernel.dim(1) != 1)
    throw InvalidShape("depthwise_conv2d: kernel " + shape_str(kernel.shape()) + " does not match input " +
                       shape_str(input.shape()));
  return conv_grouped(input, kernel, std::nullopt, stride, padding, input.dim(1), "depthwise_conv2d");
}

Tensor depthwise_separable_conv(const Tensor& input, const Tensor& depthwise, const Tensor& pointwise,
                                std::size_t stride, std::size_t padding) {
  require_rank(pointwise, 4, "depthwise_separable_conv", "pointwise kernel");
  if (pointwise.dim(2) != 1 || pointwise.dim(3) != 1 || pointwise.dim(1) != depthwise.dim(0))
    throw InvalidShape("depthwise_separable_conv: pointwise kernel " + shape_str(pointwise.shape()) +
                       " does not match depthwise kernel " + shape_str(depthwise.shape()));
  return conv2d(depthwise_conv2d(input, depthwise, stride, padding), pointwise, std::nullopt, 1, 0);
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor swish(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigmoid(v); },
      [](double v) {
        const double s = sigmoid(v);
        return s + v * s * (1.0 - s);
      });
}

Tensor activation(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return relu(x);
    case Activation::swish:
      return swish(x);
  }
  throw InvalidArgument("unknown activation");
}

Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormState& state, Mode mode) {
  require_rank(x, 4, "channel_norm", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.numel() != c || state.running_var.numel() != c)
    throw InvalidShape("channel_norm: parameters " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                       " do not match input " + shape_str(x.shape()));
  const std::size_t count = n * plane;
  if (count == 0) throw InvalidArgument("channel_norm: N*H*W must be positive");

  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();
  std::vector<double> mean(c), inv_std(c);
  if (mode == Mode::train) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    const double m = state.momentum;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < plane; ++j) acc += xs[(i * c + ch) * plane + j];
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < plane; ++j) {
          const double d = xs[(i * c + ch) * plane + j] - mu;
          sq += d * d;
        }
      const double var = sq / static_cast<double>(count);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      rm[ch] = (1.0 - m) * rm[ch] + m * mu;
      rv[ch] = (1.0 - m) * rv[ch] + m * var;
    }
  } else {
    const auto rm = state.running_mean.data();
    const auto rv = state.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = 1.0 / std::sqrt(rv[ch] + state.eps);
    }
  }

  std::vector<double> xhat(xs.size()), out(xs.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < plane; ++j) {
        const std::size_t idx = (i * c + ch) * plane + j;
        xhat[idx] = (xs[idx] - mean[ch]) * inv_std[ch];
        out[idx] = gs[ch] * xhat[idx] + bs[ch];
      }

  const bool batch_stats = mode == Mode::train;
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, c, plane, count, batch_stats, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const double* dy = self.grad.data();
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < plane; ++j) {
              const std::size_t idx = (i * c + ch) * plane + j;
              sum_dy[ch] += dy[idx];
              sum_dy_xhat[ch] += dy[idx] * xhat[idx];
            }
        if (gn.requires_grad) {
          auto& dg = grad_buffer(gn);
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
        }
        if (bn.requires_grad) {
          auto& db = grad_buffer(bn);
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
        }
        if (xn.requires_grad) {
          auto& dx = grad_buffer(xn);
          const double m = static_cast<double>(count);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double scale = gn.data[ch] * inv_std[ch];
              for (std::size_t j = 0; j < plane; ++j) {
                const std::size_t idx = (i * c + ch) * plane + j;
                if (batch_stats)
                  dx[idx] += scale / m * (m * dy[idx] - sum_dy[ch] - xhat[idx] * sum_dy_xhat[ch]);
                else
                  dx[idx] += scale * dy[idx];
              }
            }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t nc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  const auto xs = x.data();
  std::vector<double> out(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < plane; ++j) acc += xs[i * plane + j];
    out[i] = acc / static_cast<double>(plane);
  }
  return Tensor::make_result({x.dim(0), x.dim(1)}, std::move(out), {x}, [nc, plane](detail::Node& self) {
    auto& dx = grad_buffer(*self.parents[0]);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t j = 0; j < plane; ++j) dx[i * plane + j] += self.grad[i] * inv;
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  require_rank(x, 4, "avg_pool2d", "input");
  if (window == 0) throw InvalidArgument("avg_pool2d: window must be positive");
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h % window != 0 || w % window != 0)
    throw InvalidShape("avg_pool2d: spatial size of " + shape_str(x.shape()) + " is not divisible by " +
                       std::to_string(window));
  const std::size_t nc = x.dim(0) * x.dim(1), oh = h / window, ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  const auto xs = x.data();
  std::vector<double> out(nc * oh * ow, 0.0);
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < window; ++a)
          for (std::size_t b = 0; b < window; ++b) acc += xs[(p * h + i * window + a) * w + j * window + b];
        out[(p * oh + i) * ow + j] = acc * inv;
      }
  return Tensor::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                             [nc, h, w, oh, ow, window, inv](detail::Node& self) {
                               auto& dx = grad_buffer(*self.parents[0]);
                               for (std::size_t p = 0; p < nc; ++p)
                                 for (std::size_t i = 0; i < oh; ++i)
                                   for (std::size_t j = 0; j < ow; ++j) {
                                     const double g = self.grad[(p * oh + i) * ow + j] * inv;
                                     for (std::size_t a = 0; a < window; ++a)
                                       for (std::size_t b = 0; b < window; ++b)
                                         dx[(p * h + i * window + a) * w + j * window + b] += g;
                                   }
                             });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t n = x.dim(0), d = x.dim(1), k = weight.dim(0);
  if (weight.dim(1) != d || bias.rank() != 1 || bias.dim(0) != k)
    throw InvalidShape("linear: input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()) +
                       " and bias " + shape_str(bias.shape()) + " are incompatible");
  const auto xs = x.data(), ws = weight.data(), bs = bias.data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r) {
      double acc = bs[r];
      for (std::size_t j = 0; j < d; ++j) acc += ws[r * d + j] * xs[i * d + j];
      out[i * k + r] = acc;
    }
  return Tensor::make_result({n, k}, std::move(out), {x, weight, bias}, [n, d, k](detail::Node& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const auto& dy = self.grad;
    if (xn.requires_grad) {
      auto& dx = grad_buffer(xn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += wn.data[r * d + j] * dy[i * k + r];
    }
    if (wn.requires_grad) {
      auto& dw = grad_buffer(wn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t j = 0; j < d; ++j) dw[r * d + j] += xn.data[i * d + j] * dy[i * k + r];
    }
    if (bn.requires_grad) {
      auto& db = grad_buffer(bn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < k; ++r) db[r] += dy[i * k + r];
    }
  });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no tensors to concatenate");
  const Tensor& first = parts.front();
  require_rank(first, 4, "concat_channels", "part");
  const std::size_t n = first.dim(0), plane = first.dim(2) * first.dim(3);
  std::size_t total = 0;
  std::vector<std::size_t> channels;
  for (const auto& p : parts) {
    require_rank(p, 4, "concat_channels", "part");
    if (p.dim(0) != n || p.dim(2) != first.dim(2) || p.dim(3) != first.dim(3))
      throw InvalidShape("concat_channels: part " + shape_str(p.shape()) + " does not match " +
                         shape_str(first.shape()));
    channels.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(n * total * plane);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t block = channels[k] * plane;
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(src.begin() + static_cast<Index>(i * block), block,
                  out.begin() + static_cast<Index>((i * total + offset) * plane));
    offset += channels[k];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result({n, total, first.dim(2), first.dim(3)}, std::move(out), std::move(inputs),
                             [n, total, plane, channels](detail::Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < channels.size(); ++k) {
                                 auto& part = *self.parents[k];
                                 const std::size_t block = channels[k] * plane;
                                 if (part.requires_grad) {
                                   auto& dx = grad_buffer(part);
                                   for (std::size_t i = 0; i < n; ++i)
                                     for (std::size_t j = 0; j < block; ++j)
                                       dx[i * block + j] += self.grad[(i * total + offset) * plane + j];
                                 }
                                 offset += channels[k];
                               }
                             });
}

Tensor residual_add(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "residual_add");
  const auto xs = x.data(), ys = y.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] + ys[i];
  return Tensor::make_result(x.shape(), std::move(out), {x, y}, [](detail::Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& dx = grad_buffer(*parent);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "mul");
  const auto xs = x.data(), ys = y.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] * ys[i];
  return Tensor::make_result(x.shape(), std::move(out), {x, y}, [](detail::Node& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    // Read both operands before writing, in case x and y alias.
    std::vector<double> da(a.data.size()), db(b.data.size());
    for (std::size_t i = 0; i < da.size(); ++i) {
      da[i] = self.grad[i] * b.data[i];
      db[i] = self.grad[i] * a.data[i];
    }
    if (a.requires_grad) {
      auto& g = grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += da[i];
    }
    if (b.requires_grad) {
      auto& g = grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += db[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({1}, {acc}, {x}, [](detail::Node& self) {
    auto& dx = grad_buffer(*self.parents[0]);
    for (auto& g : dx) g += self.grad[0];
  });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const auto zs = logits.data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = zs.data() + i * k;
    const double mx = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += out[i * k + j] = std::exp(z[j] - mx);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= total;
  }
  std::vector<double> probs = out;
  return Tensor::make_result({n, k}, std::move(out), {logits}, [n, k, probs = std::move(probs)](detail::Node& self) {
    auto& dz = grad_buffer(*self.parents[0]);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += self.grad[i * k + j] * probs[i * k + j];
      for (std::size_t j = 0; j < k; ++j) dz[i * k + j] += probs[i * k + j] * (self.grad[i * k + j] - dot);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw InvalidArgument("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                          " rows");
  for (auto label : labels)
    if (label >= k)
      throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " out of range for " +
                            std::to_string(k) + " classes");
  const auto zs = logits.data();
  std::vector<double> probs(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = zs.data() + i * k;
    const double mx = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += probs[i * k + j] = std::exp(z[j] - mx);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= total;
    loss += mx + std::log(total) - z[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return Tensor::make_result(
      {1}, {loss}, {logits}, [n, k, probs = std::move(probs), targets = std::move(targets)](detail::Node& self) {
        auto& dz = grad_buffer(*self.parents[0]);
        const double scale = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j)
            dz[i * k + j] += scale * (probs[i * k + j] - (j == targets[i] ? 1.0 : 0.0));
      });
}

}  // namespace ecnn
