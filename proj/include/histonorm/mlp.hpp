#pragma once

#include <vector>

#include "histonorm/layers.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

// Stack of dense layers with a cached forward pass.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }
};

// activations[0] is the input, activations[i + 1] the output of layer i.
struct MlpTrace {
  std::vector<Tensor> activations;
  const Tensor& output() const { return activations.back(); }
};

inline MlpTrace mlp_forward(const Mlp& net, const Tensor& x) {
  MlpTrace t;
  t.activations.reserve(net.layers.size() + 1);
  t.activations.push_back(x);
  for (const auto& l : net.layers) t.activations.push_back(dense_forward(l, t.activations.back()));
  return t;
}

inline Tensor mlp_apply(const Mlp& net, const Tensor& x) { return mlp_forward(net, x).activations.back(); }

struct MlpGrads {
  std::vector<Tensor> params;  // parameters() order
  Tensor input;
};

inline MlpGrads mlp_backward(const Mlp& net, const MlpTrace& t, const Tensor& output_grad) {
  const std::size_t n = net.layers.size();
  MlpGrads g;
  g.params.resize(2 * n);
  Tensor upstream = output_grad;
  for (std::size_t i = n; i-- > 0;) {
    DenseGrads lg = dense_backward(net.layers[i], t.activations[i], t.activations[i + 1], upstream, true);
    g.params[2 * i] = std::move(lg.weights);
    g.params[2 * i + 1] = std::move(lg.bias);
    upstream = std::move(lg.input);
  }
  g.input = std::move(upstream);
  return g;
}

// Element-wise accumulation of one gradient list into another.
inline void accumulate(std::vector<Tensor>& acc, const std::vector<Tensor>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) add_into(acc[i], g[i]);
}

}  // namespace histonorm
