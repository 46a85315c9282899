#pragma once

#include <string>
#include <vector>

#include "histonorm/classifier.hpp"
#include "histonorm/cyclegan.hpp"
#include "histonorm/gradcheck.hpp"
#include "histonorm/layers.hpp"
#include "histonorm/mcae.hpp"
#include "histonorm/rng.hpp"

namespace histonorm {

// Finite-difference checks of every analytic gradient on micro models.

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
};

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Linear functional sum(w * y) used as a scalar probe of a layer output.
inline double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

inline GradCheckResult check_params(const std::vector<Tensor*>& params, const std::vector<Tensor>& analytic,
                                    const std::function<double()>& loss, double h) {
  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i)
    r.merge(compare_gradients(analytic[i], finite_diff_grad_inplace(*params[i], loss, h)));
  return r;
}

}  // namespace detail

inline GradCheckEntry check_dense_layer(Activation act, std::uint64_t seed, double h = 1e-5) {
  Rng rng = Rng::stream(seed, std::string("gradcheck.dense.") + std::string(to_string(act)));
  DenseLayer layer = make_dense(5, 4, act, rng);
  for (double& v : layer.bias.values()) v = rng.uniform(-0.5, 0.5);
  Tensor x = detail::random_tensor({3, 5}, rng);
  const Tensor w = detail::random_tensor({3, 4}, rng);
  const auto loss = [&] { return detail::weighted_sum(dense_forward(layer, x), w); };
  DenseGrads g = dense_backward(layer, x, w);
  GradCheckResult r = detail::check_params({&layer.weights, &layer.bias}, {g.weights, g.bias}, loss, h);
  r.merge(compare_gradients(g.input, finite_diff_grad_inplace(x, loss, h)));
  return {"dense_" + std::string(to_string(act)), r};
}

inline GradCheckEntry check_conv_layer(Activation act, std::uint64_t seed, double h = 1e-5) {
  Rng rng = Rng::stream(seed, std::string("gradcheck.conv.") + std::string(to_string(act)));
  Conv2dLayer layer = make_conv2d(2, 3, 3, 1, act, rng);
  for (double& v : layer.bias.values()) v = rng.uniform(-0.5, 0.5);
  Tensor x = detail::random_tensor({2, 2, 4, 5}, rng);
  const Tensor w = detail::random_tensor({2, 3, 4, 5}, rng);
  const auto loss = [&] { return detail::weighted_sum(conv2d_forward(layer, x), w); };
  Conv2dGrads g = conv2d_backward(layer, x, w);
  GradCheckResult r = detail::check_params({&layer.kernels, &layer.bias}, {g.kernels, g.bias}, loss, h);
  r.merge(compare_gradients(g.input, finite_diff_grad_inplace(x, loss, h)));
  return {"conv2d_" + std::string(to_string(act)), r};
}

inline GradCheckEntry check_mcae_combined(std::uint64_t seed, double h = 1e-5) {
  const AutoEncoderDims dims{12, 6, 3};
  McaeModel m = make_mcae({"A", "B", "C"}, dims, seed);
  Rng rng = Rng::stream(seed, "gradcheck.mcae");
  std::vector<Tensor> patches;
  for (std::size_t d = 0; d < 3; ++d) patches.push_back(detail::random_tensor({5, dims.input}, rng));
  m.kmeans = kmeans_fit(encode_rows(m.channels.front(), patches.front()), 2, 50, rng.next_u64());
  const auto [loss0, analytic] = combined_loss_and_grad(m, patches);
  (void)loss0;
  return {"mcae_combined", detail::check_params(m.parameters(), analytic, [&] { return combined_loss(m, patches).total; }, h)};
}

inline GradCheckEntry check_autoencoder(std::uint64_t seed, double h = 1e-5) {
  Rng rng = Rng::stream(seed, "gradcheck.autoencoder");
  AutoEncoder ae = make_autoencoder({8, 5, 3}, rng);
  const Tensor x = detail::random_tensor({4, 8}, rng);
  const Tensor wo = detail::random_tensor({4, 8}, rng), wz = detail::random_tensor({4, 3}, rng);
  const auto loss = [&] {
    const AutoEncoderTrace t = autoencoder_forward(ae, x);
    return detail::weighted_sum(t.output, wo) + detail::weighted_sum(t.feature, wz);
  };
  const auto analytic = autoencoder_backward(ae, autoencoder_forward(ae, x), wo, wz);
  return {"autoencoder", detail::check_params(ae.parameters(), analytic, loss, h)};
}

// Generator gradients of the weighted objective, d = 6 micro model.
inline GradCheckEntry check_cyclegan_generators(bool saturating, std::uint64_t seed, double h = 1e-5) {
  CycleGanConfig cfg;
  cfg.generator_hidden = 5;
  cfg.discriminator_hidden = 4;
  cfg.saturating = saturating;
  cfg.seed = seed;
  CycleGanModel m = make_cyclegan(6, cfg);
  Rng rng = Rng::stream(seed, "gradcheck.cyclegan");
  const Tensor a = detail::random_tensor({4, 6}, rng, 0.05, 0.95), b = detail::random_tensor({4, 6}, rng, 0.05, 0.95);
  const GeneratorPhase gp = generator_phase(m.f, m.g, m.da, m.db, a, b, cfg);
  const auto loss = [&] { return generator_phase(m.f, m.g, m.da, m.db, a, b, cfg).objective; };
  GradCheckResult r = detail::check_params(m.f.net.parameters(), gp.grad_f, loss, h);
  r.merge(detail::check_params(m.g.net.parameters(), gp.grad_g, loss, h));
  return {saturating ? "cyclegan_full_objective" : "cyclegan_nonsaturating", r};
}

inline GradCheckEntry check_cyclegan_discriminator(std::uint64_t seed, double h = 1e-5) {
  CycleGanConfig cfg;
  cfg.discriminator_hidden = 4;
  cfg.seed = seed;
  CycleGanModel m = make_cyclegan(6, cfg);
  Rng rng = Rng::stream(seed, "gradcheck.discriminator");
  const Tensor real = detail::random_tensor({4, 6}, rng, 0.0, 1.0), fake = detail::random_tensor({4, 6}, rng, 0.0, 1.0);
  const DiscriminatorPhase dp = discriminator_phase(m.db, real, fake);
  const auto loss = [&] { return -gan_loss(score(m.db, real), score(m.db, fake)); };
  return {"cyclegan_discriminator", detail::check_params(m.db.net.parameters(), dp.grad, loss, h)};
}

inline GradCheckEntry check_classifier_head(Pooling pooling, std::uint64_t seed, double h = 1e-5) {
  ClassifierHead head = make_head(4, 5, 3, seed, pooling);
  Rng rng = Rng::stream(seed, "gradcheck.classifier");
  for (Tensor* b : {&head.conv1.bias, &head.conv2.bias})
    for (double& v : b->values()) v = rng.uniform(-0.3, 0.3);
  const Tensor feats = detail::random_tensor({3, 3, 4}, rng);
  const std::size_t label = 1;
  const HeadTrace t = head_forward(head, feats);
  const auto analytic = head_backward(head, t, cross_entropy_grad(t.logits, label));
  const auto loss = [&] { return cross_entropy(classify(head, feats), label); };
  return {pooling == Pooling::average ? "classifier_head" : "classifier_head_maxpool",
          detail::check_params(head.parameters(), analytic, loss, h)};
}

inline std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  for (Activation a : {Activation::tanh, Activation::sigmoid, Activation::leaky_relu, Activation::linear}) {
    out.push_back(check_dense_layer(a, seed));
    out.push_back(check_conv_layer(a, seed));
  }
  out.push_back(check_autoencoder(seed));
  out.push_back(check_mcae_combined(seed));
  out.push_back(check_cyclegan_generators(true, seed));
  out.push_back(check_cyclegan_generators(false, seed));
  out.push_back(check_cyclegan_discriminator(seed));
  out.push_back(check_classifier_head(Pooling::average, seed));
  out.push_back(check_classifier_head(Pooling::max, seed));
  return out;
}

}  // namespace histonorm
