#pragma once

#include <vector>

#include "histonorm/layers.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

struct AutoEncoderDims {
  std::size_t input = 192;
  std::size_t hidden = 100;
  std::size_t feature = 10;
};

// input -> hidden (tanh) -> feature (tanh) -> hidden (tanh) -> input (sigmoid)
struct AutoEncoder {
  DenseLayer enc_hidden;
  DenseLayer enc_out;
  DenseLayer dec_hidden;
  DenseLayer dec_out;

  std::size_t input_dim() const { return enc_hidden.in_dim(); }
  std::size_t feature_dim() const { return enc_out.out_dim(); }

  std::vector<Tensor*> parameters() {
    return {&enc_hidden.weights, &enc_hidden.bias, &enc_out.weights, &enc_out.bias,
            &dec_hidden.weights, &dec_hidden.bias, &dec_out.weights, &dec_out.bias};
  }
  std::vector<const Tensor*> parameters() const {
    return {&enc_hidden.weights, &enc_hidden.bias, &enc_out.weights, &enc_out.bias,
            &dec_hidden.weights, &dec_hidden.bias, &dec_out.weights, &dec_out.bias};
  }
  std::vector<const DenseLayer*> layers() const { return {&enc_hidden, &enc_out, &dec_hidden, &dec_out}; }

  friend bool operator==(const AutoEncoder& a, const AutoEncoder& b) {
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (!(*pa[i] == *pb[i])) return false;
    return true;
  }
};

inline AutoEncoder make_autoencoder(const AutoEncoderDims& d, Rng& rng) {
  AutoEncoder ae;
  ae.enc_hidden = make_dense(d.input, d.hidden, Activation::tanh, rng);
  ae.enc_out = make_dense(d.hidden, d.feature, Activation::tanh, rng);
  ae.dec_hidden = make_dense(d.feature, d.hidden, Activation::tanh, rng);
  ae.dec_out = make_dense(d.hidden, d.input, Activation::sigmoid, rng);
  return ae;
}

inline AutoEncoder zero_autoencoder(const AutoEncoderDims& d) {
  return {zero_dense(d.input, d.hidden, Activation::tanh), zero_dense(d.hidden, d.feature, Activation::tanh),
          zero_dense(d.feature, d.hidden, Activation::tanh), zero_dense(d.hidden, d.input, Activation::sigmoid)};
}

inline Tensor encode_rows(const AutoEncoder& ae, const Tensor& x) {
  return dense_forward(ae.enc_out, dense_forward(ae.enc_hidden, x));
}

inline Tensor decode_rows(const AutoEncoder& ae, const Tensor& z) {
  return dense_forward(ae.dec_out, dense_forward(ae.dec_hidden, z));
}

struct AutoEncoderTrace {
  Tensor input;
  Tensor hidden;
  Tensor feature;
  Tensor dec_hidden;
  Tensor output;
};

inline AutoEncoderTrace autoencoder_forward(const AutoEncoder& ae, Tensor x) {
  AutoEncoderTrace t;
  t.input = std::move(x);
  t.hidden = dense_forward(ae.enc_hidden, t.input);
  t.feature = dense_forward(ae.enc_out, t.hidden);
  t.dec_hidden = dense_forward(ae.dec_hidden, t.feature);
  t.output = dense_forward(ae.dec_out, t.dec_hidden);
  return t;
}

// Gradients in parameters() order. `feature_grad` carries any loss terms
// attached directly to the code layer; pass an empty tensor for none.
inline std::vector<Tensor> autoencoder_backward(const AutoEncoder& ae, const AutoEncoderTrace& t,
                                                const Tensor& output_grad, const Tensor& feature_grad) {
  DenseGrads g4 = dense_backward(ae.dec_out, t.dec_hidden, t.output, output_grad);
  DenseGrads g3 = dense_backward(ae.dec_hidden, t.feature, t.dec_hidden, g4.input);
  Tensor dz = std::move(g3.input);
  if (!feature_grad.empty()) add_into(dz, feature_grad);
  DenseGrads g2 = dense_backward(ae.enc_out, t.hidden, t.feature, dz);
  DenseGrads g1 = dense_backward(ae.enc_hidden, t.input, t.hidden, g2.input, false);
  std::vector<Tensor> grads;
  grads.reserve(8);
  for (DenseGrads* g : {&g1, &g2, &g3, &g4}) {
    grads.push_back(std::move(g->weights));
    grads.push_back(std::move(g->bias));
  }
  return grads;
}

}  // namespace histonorm
