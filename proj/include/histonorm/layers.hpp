#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "histonorm/error.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

enum class Activation { tanh, sigmoid, leaky_relu, linear };

inline constexpr double kDefaultLeakySlope = 0.01;

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::linear: return "linear";
  }
  return "linear";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "linear") return Activation::linear;
  throw ParseError("unknown activation '" + std::string(name) + "'");
}

inline double activate(Activation a, double x, double slope) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::leaky_relu: return x >= 0.0 ? x : slope * x;
    case Activation::linear: return x;
  }
  return x;
}

// Derivative expressed through the activation's output y. For leaky_relu the
// output keeps the sign of the input since slope > 0.
inline double activate_derivative(Activation a, double y, double slope) {
  switch (a) {
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::leaky_relu: return y >= 0.0 ? 1.0 : slope;
    case Activation::linear: return 1.0;
  }
  return 1.0;
}

inline void check_slope(double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw DomainError("leaky_relu slope must lie in (0,1)");
}

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// Dense

struct DenseLayer {
  Tensor weights;  // out x in
  Tensor bias;     // out
  Activation activation = Activation::linear;
  double slope = kDefaultLeakySlope;

  std::size_t in_dim() const { return weights.extent(1); }
  std::size_t out_dim() const { return weights.extent(0); }
};

inline DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng,
                             double slope = kDefaultLeakySlope) {
  check_slope(slope);
  DenseLayer layer{Tensor({out, in}), Tensor({out}), act, slope};
  glorot_fill(layer.weights, in, out, rng);
  return layer;
}

inline DenseLayer zero_dense(std::size_t in, std::size_t out, Activation act) {
  return DenseLayer{Tensor({out, in}), Tensor({out}), act, kDefaultLeakySlope};
}

inline void validate(const DenseLayer& layer) {
  if (layer.weights.rank() != 2) throw DimensionError("dense weights must be rank 2");
  require_shape(layer.bias, {layer.out_dim()}, "dense bias");
  check_slope(layer.slope);
}

inline Tensor dense_forward(const DenseLayer& layer, const Tensor& input) {
  if (input.rank() != 2 || input.extent(1) != layer.in_dim())
    throw DimensionError("dense_forward: input " + to_string(input.shape()) + " vs in-dim " +
                         std::to_string(layer.in_dim()));
  Tensor out({input.extent(0), layer.out_dim()});
  auto o = as_matrix(out);
  o.noalias() = as_matrix(input) * as_matrix(layer.weights).transpose();
  const auto b = Eigen::Map<const Eigen::RowVectorXd>(layer.bias.data(),
                                                      static_cast<Eigen::Index>(layer.out_dim()));
  o.rowwise() += b;
  for (double& v : out.values()) v = activate(layer.activation, v, layer.slope);
  return out;
}

struct DenseGrads {
  Tensor weights;
  Tensor bias;
  Tensor input;  // empty when not requested
};

// Backward pass given the cached forward output.
inline DenseGrads dense_backward(const DenseLayer& layer, const Tensor& input, const Tensor& output,
                                 const Tensor& upstream, bool want_input_grad = true) {
  if (upstream.shape() != output.shape())
    throw DimensionError("dense_backward: upstream " + to_string(upstream.shape()) +
                         " vs output " + to_string(output.shape()));
  if (input.rank() != 2 || input.extent(0) != output.extent(0) || input.extent(1) != layer.in_dim())
    throw DimensionError("dense_backward: input shape " + to_string(input.shape()));
  Tensor delta = upstream;
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] *= activate_derivative(layer.activation, output[i], layer.slope);

  DenseGrads g{Tensor(layer.weights.shape()), Tensor(layer.bias.shape()), Tensor()};
  const auto d = as_matrix(delta);
  as_matrix(g.weights).noalias() = d.transpose() * as_matrix(input);
  Eigen::Map<Eigen::RowVectorXd>(g.bias.data(), static_cast<Eigen::Index>(layer.out_dim())) =
      d.colwise().sum();
  if (want_input_grad) {
    g.input = Tensor(input.shape());
    as_matrix(g.input).noalias() = d * as_matrix(layer.weights);
  }
  return g;
}

inline DenseGrads dense_backward(const DenseLayer& layer, const Tensor& input, const Tensor& upstream) {
  return dense_backward(layer, input, dense_forward(layer, input), upstream, true);
}

// ---------------------------------------------------------------------------
// Conv2d (cross-correlation, stride 1), NCHW layout.

struct Conv2dLayer {
  Tensor kernels;  // out_ch x in_ch x k x k
  Tensor bias;     // out_ch
  std::size_t padding = 0;
  Activation activation = Activation::linear;
  double slope = kDefaultLeakySlope;

  std::size_t out_channels() const { return kernels.extent(0); }
  std::size_t in_channels() const { return kernels.extent(1); }
  std::size_t kernel_size() const { return kernels.extent(2); }
};

inline void validate(const Conv2dLayer& layer) {
  if (layer.kernels.rank() != 4 || layer.kernels.extent(2) != layer.kernels.extent(3))
    throw DimensionError("conv kernels must be out x in x k x k");
  if (layer.kernel_size() % 2 == 0) throw DimensionError("conv kernel size must be odd");
  require_shape(layer.bias, {layer.out_channels()}, "conv bias");
  check_slope(layer.slope);
}

inline Conv2dLayer make_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                               std::size_t padding, Activation act, Rng& rng,
                               double slope = kDefaultLeakySlope) {
  Conv2dLayer layer{Tensor({out_ch, in_ch, k, k}), Tensor({out_ch}), padding, act, slope};
  validate(layer);
  glorot_fill(layer.kernels, in_ch * k * k, out_ch * k * k, rng);
  return layer;
}

inline Conv2dLayer zero_conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                               std::size_t padding, Activation act) {
  Conv2dLayer layer{Tensor({out_ch, in_ch, k, k}), Tensor({out_ch}), padding, act,
                    kDefaultLeakySlope};
  validate(layer);
  return layer;
}

inline Tensor conv2d_forward(const Conv2dLayer& layer, const Tensor& input) {
  validate(layer);
  if (input.rank() != 4 || input.extent(1) != layer.in_channels())
    throw DimensionError("conv2d_forward: input " + to_string(input.shape()) + " vs in_ch " +
                         std::to_string(layer.in_channels()));
  const std::size_t batch = input.extent(0), cin = input.extent(1), h = input.extent(2),
                    w = input.extent(3);
  const std::size_t k = layer.kernel_size(), pad = layer.padding, cout = layer.out_channels();
  if (h + 2 * pad < k || w + 2 * pad < k)
    throw DimensionError("conv2d_forward: input smaller than kernel");
  const std::size_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
  Tensor out({batch, cout, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = layer.bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += layer.kernels(o, c, ky, kx) * input(n, c, iy, ix);
              }
            }
          out(n, o, y, x) = activate(layer.activation, acc, layer.slope);
        }
  return out;
}

struct Conv2dGrads {
  Tensor kernels;
  Tensor bias;
  Tensor input;
};

inline Conv2dGrads conv2d_backward(const Conv2dLayer& layer, const Tensor& input, const Tensor& output,
                                   const Tensor& upstream) {
  if (upstream.shape() != output.shape())
    throw DimensionError("conv2d_backward: upstream " + to_string(upstream.shape()) + " vs output " +
                         to_string(output.shape()));
  const std::size_t batch = input.extent(0), cin = input.extent(1), h = input.extent(2),
                    w = input.extent(3);
  const std::size_t k = layer.kernel_size(), pad = layer.padding, cout = layer.out_channels();
  const std::size_t oh = output.extent(2), ow = output.extent(3);
  Conv2dGrads g{Tensor(layer.kernels.shape()), Tensor(layer.bias.shape()), Tensor(input.shape())};
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double delta = upstream(n, o, y, x) *
                               activate_derivative(layer.activation, output(n, o, y, x), layer.slope);
          if (delta == 0.0) continue;
          g.bias[o] += delta;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                g.kernels(o, c, ky, kx) += delta * input(n, c, iy, ix);
                g.input(n, c, iy, ix) += delta * layer.kernels(o, c, ky, kx);
              }
            }
        }
  return g;
}

inline Conv2dGrads conv2d_backward(const Conv2dLayer& layer, const Tensor& input, const Tensor& upstream) {
  return conv2d_backward(layer, input, conv2d_forward(layer, input), upstream);
}

}  // namespace histonorm
