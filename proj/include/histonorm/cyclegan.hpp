#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "histonorm/adam.hpp"
#include "histonorm/error.hpp"
#include "histonorm/json_io.hpp"
#include "histonorm/mlp.hpp"
#include "histonorm/rng.hpp"

namespace histonorm {

// Toy-scale CycleGAN over flattened colour patches. F maps domain A to B,
// G maps B to A; D_A and D_B score membership of their domain.
struct ToyGenerator {
  Mlp net;
};

struct ToyDiscriminator {
  Mlp net;
};

inline constexpr std::size_t kToyPatchDim = 4 * 4 * 3;

inline ToyGenerator make_toy_generator(std::size_t dim, std::size_t hidden, Rng& rng) {
  return {Mlp{{make_dense(dim, hidden, Activation::tanh, rng), make_dense(hidden, dim, Activation::sigmoid, rng)}}};
}

inline ToyDiscriminator make_toy_discriminator(std::size_t dim, std::size_t hidden, Rng& rng) {
  return {Mlp{{make_dense(dim, hidden, Activation::leaky_relu, rng, 0.2), make_dense(hidden, 1, Activation::sigmoid, rng)}}};
}

struct CycleGanConfig {
  double lambda1 = 5.0;   // identity weight
  double lambda2 = 10.0;  // cycle weight
  AdamConfig generator_adam{};
  AdamConfig discriminator_adam{};
  std::size_t epochs = 200;
  std::size_t batch = 16;
  std::size_t generator_hidden = 64;
  std::size_t discriminator_hidden = 32;
  // Generators minimise -log D(fake) unless the saturating min-max form is requested.
  bool saturating = false;
  std::uint64_t seed = 0;
};

inline void validate(const CycleGanConfig& c) {
  if (c.lambda1 < 0.0 || c.lambda2 < 0.0) throw DomainError("cyclegan: lambdas must be non-negative");
  if (c.batch == 0) throw DomainError("cyclegan: batch must be positive");
}

inline constexpr double kProbabilityClamp = 1e-9;

inline double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

inline void check_scores(std::span<const double> s) {
  if (s.empty()) throw EmptyInputError("gan_loss: empty score batch");
  for (double v : s)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("gan_loss: discriminator score outside [0,1]");
}

// mean log D(real) + mean log(1 - D(fake)), probabilities clamped before logs.
inline double gan_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  check_scores(d_real);
  check_scores(d_fake);
  double real = 0.0, fake = 0.0;
  for (double v : d_real) real += std::log(clamp_probability(v));
  for (double v : d_fake) fake += std::log(1.0 - clamp_probability(v));
  return real / static_cast<double>(d_real.size()) + fake / static_cast<double>(d_fake.size());
}

// Per-sample l1 sum, averaged over the batch.
inline double l1_loss(const Tensor& x, const Tensor& target) {
  require_shape(x, target.shape(), "l1_loss");
  if (x.empty()) throw EmptyInputError("l1_loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - target[i]);
  return s / static_cast<double>(x.extent(0));
}

inline Tensor l1_loss_grad(const Tensor& x, const Tensor& target, double weight) {
  Tensor g(x.shape());
  const double scale = weight / static_cast<double>(x.extent(0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - target[i];
    g[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
  }
  return g;
}

inline Tensor generate(const ToyGenerator& g, const Tensor& x) { return mlp_apply(g.net, x); }

inline std::vector<double> score(const ToyDiscriminator& d, const Tensor& x) {
  const Tensor s = mlp_apply(d.net, x);
  return {s.values().begin(), s.values().end()};
}

inline double identity_loss(const ToyGenerator& f, const ToyGenerator& g, const Tensor& batch_a, const Tensor& batch_b) {
  return l1_loss(generate(g, batch_a), batch_a) + l1_loss(generate(f, batch_b), batch_b);
}

inline double cycle_loss(const ToyGenerator& f, const ToyGenerator& g, const Tensor& batch_a, const Tensor& batch_b) {
  return l1_loss(generate(g, generate(f, batch_a)), batch_a) + l1_loss(generate(f, generate(g, batch_b)), batch_b);
}

struct CycleLosses {
  double identity = 0.0;
  double gan_f = 0.0;  // l_GAN(F, D_B, A, B)
  double gan_g = 0.0;  // l_GAN(G, D_A, A, B)
  double cycle = 0.0;
};

inline double full_objective(const CycleLosses& l, const CycleGanConfig& cfg) {
  return l.gan_f + l.gan_g + cfg.lambda1 * l.identity + cfg.lambda2 * l.cycle;
}

inline CycleLosses evaluate_losses(const ToyGenerator& f, const ToyGenerator& g, const ToyDiscriminator& da,
                                   const ToyDiscriminator& db, const Tensor& a, const Tensor& b) {
  CycleLosses l;
  l.identity = identity_loss(f, g, a, b);
  l.gan_f = gan_loss(score(db, b), score(db, generate(f, a)));
  l.gan_g = gan_loss(score(da, a), score(da, generate(g, b)));
  l.cycle = cycle_loss(f, g, a, b);
  return l;
}

struct GeneratorPhase {
  CycleLosses losses;
  double objective = 0.0;  // the weighted sum actually minimised
  std::vector<Tensor> grad_f;
  std::vector<Tensor> grad_g;
};

namespace detail {

// d(objective)/d(score) for the generator's adversarial term.
inline Tensor generator_score_grad(const Tensor& scores, bool saturating) {
  Tensor g(scores.shape());
  const double n = static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (s < kProbabilityClamp || s > 1.0 - kProbabilityClamp) continue;
    g[i] = saturating ? -1.0 / ((1.0 - s) * n) : -1.0 / (s * n);
  }
  return g;
}

inline double generator_adversarial(const Tensor& scores, bool saturating) {
  double s = 0.0;
  for (double v : scores.values()) s += saturating ? std::log(1.0 - clamp_probability(v)) : -std::log(clamp_probability(v));
  return s / static_cast<double>(scores.size());
}

}  // namespace detail

// Generator phase on one batch: identity pass, cross-domain pass with the
// adversarial term, cycle-back pass, then the weighted sum and its gradient.
inline GeneratorPhase generator_phase(const ToyGenerator& f, const ToyGenerator& g, const ToyDiscriminator& da,
                                      const ToyDiscriminator& db, const Tensor& a, const Tensor& b,
                                      const CycleGanConfig& cfg) {
  GeneratorPhase r;
  // 1. identity
  const MlpTrace id_a = mlp_forward(g.net, a);
  const MlpTrace id_b = mlp_forward(f.net, b);
  r.losses.identity = l1_loss(id_a.output(), a) + l1_loss(id_b.output(), b);
  // 2. cross-domain mapping and adversarial scores
  const MlpTrace fake_b = mlp_forward(f.net, a);
  const MlpTrace fake_a = mlp_forward(g.net, b);
  const MlpTrace score_fb = mlp_forward(db.net, fake_b.output());
  const MlpTrace score_fa = mlp_forward(da.net, fake_a.output());
  r.losses.gan_f = gan_loss(score(db, b), score_fb.output().values());
  r.losses.gan_g = gan_loss(score(da, a), score_fa.output().values());
  // 3. cycle back
  const MlpTrace rec_a = mlp_forward(g.net, fake_b.output());
  const MlpTrace rec_b = mlp_forward(f.net, fake_a.output());
  r.losses.cycle = l1_loss(rec_a.output(), a) + l1_loss(rec_b.output(), b);
  // 4. weighted sum
  if (cfg.saturating) {
    // The full objective itself; its real-sample terms carry no generator gradient.
    r.objective = full_objective(r.losses, cfg);
  } else {
    r.objective = detail::generator_adversarial(score_fb.output(), false) +
                  detail::generator_adversarial(score_fa.output(), false) + cfg.lambda1 * r.losses.identity +
                  cfg.lambda2 * r.losses.cycle;
  }

  accumulate(r.grad_g, mlp_backward(g.net, id_a, l1_loss_grad(id_a.output(), a, cfg.lambda1)).params);
  accumulate(r.grad_f, mlp_backward(f.net, id_b, l1_loss_grad(id_b.output(), b, cfg.lambda1)).params);

  MlpGrads through_rec_a = mlp_backward(g.net, rec_a, l1_loss_grad(rec_a.output(), a, cfg.lambda2));
  MlpGrads through_rec_b = mlp_backward(f.net, rec_b, l1_loss_grad(rec_b.output(), b, cfg.lambda2));
  accumulate(r.grad_g, through_rec_a.params);
  accumulate(r.grad_f, through_rec_b.params);

  Tensor d_fake_b = mlp_backward(db.net, score_fb, detail::generator_score_grad(score_fb.output(), cfg.saturating)).input;
  Tensor d_fake_a = mlp_backward(da.net, score_fa, detail::generator_score_grad(score_fa.output(), cfg.saturating)).input;
  add_into(d_fake_b, through_rec_a.input);
  add_into(d_fake_a, through_rec_b.input);
  accumulate(r.grad_f, mlp_backward(f.net, fake_b, d_fake_b).params);
  accumulate(r.grad_g, mlp_backward(g.net, fake_a, d_fake_a).params);
  return r;
}

struct DiscriminatorPhase {
  double gan = 0.0;  // l_GAN value before the update
  std::vector<Tensor> grad;  // gradient of -l_GAN (descent direction for ascent on l_GAN)
};

inline DiscriminatorPhase discriminator_phase(const ToyDiscriminator& d, const Tensor& real, const Tensor& fake) {
  const MlpTrace sr = mlp_forward(d.net, real);
  const MlpTrace sf = mlp_forward(d.net, fake);
  DiscriminatorPhase r;
  r.gan = gan_loss(sr.output().values(), sf.output().values());
  Tensor gr(sr.output().shape()), gf(sf.output().shape());
  const double nr = static_cast<double>(gr.size()), nf = static_cast<double>(gf.size());
  for (std::size_t i = 0; i < gr.size(); ++i) {
    const double s = sr.output()[i];
    if (s >= kProbabilityClamp && s <= 1.0 - kProbabilityClamp) gr[i] = -1.0 / (s * nr);
  }
  for (std::size_t i = 0; i < gf.size(); ++i) {
    const double s = sf.output()[i];
    if (s >= kProbabilityClamp && s <= 1.0 - kProbabilityClamp) gf[i] = 1.0 / ((1.0 - s) * nf);
  }
  accumulate(r.grad, mlp_backward(d.net, sr, gr).params);
  accumulate(r.grad, mlp_backward(d.net, sf, gf).params);
  return r;
}

struct CycleGanHistoryRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double identity = 0.0, gan_f = 0.0, gan_g = 0.0, cycle = 0.0, total_gen = 0.0, disc_a = 0.0, disc_b = 0.0;
};

struct CycleGanModel {
  ToyGenerator f, g;
  ToyDiscriminator da, db;
};

struct CycleGanResult {
  CycleGanModel model;
  std::vector<CycleGanHistoryRow> history;

  // Mean of a per-batch column over one epoch.
  double epoch_mean(std::size_t epoch, double CycleGanHistoryRow::*field) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : history)
      if (r.epoch == epoch) {
        s += r.*field;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

inline CycleGanModel make_cyclegan(std::size_t dim, const CycleGanConfig& cfg) {
  Rng rng = Rng::stream(cfg.seed, "cyclegan.init");
  CycleGanModel m;
  m.f = make_toy_generator(dim, cfg.generator_hidden, rng);
  m.g = make_toy_generator(dim, cfg.generator_hidden, rng);
  m.da = make_toy_discriminator(dim, cfg.discriminator_hidden, rng);
  m.db = make_toy_discriminator(dim, cfg.discriminator_hidden, rng);
  return m;
}

inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), x.extent(1)});
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy(x.row(idx[r]).begin(), x.row(idx[r]).end(), out.row(r).begin());
  return out;
}

// Alternating optimisation: per batch, the generator phase then one ascent
// step for each discriminator on real vs freshly generated samples.
inline CycleGanResult train_cyclegan(const Tensor& domain_a, const Tensor& domain_b, const CycleGanConfig& cfg) {
  validate(cfg);
  if (domain_a.rank() != 2 || domain_b.rank() != 2 || domain_a.extent(0) == 0 || domain_b.extent(0) == 0)
    throw EmptyInputError("train_cyclegan: both domains need at least one sample");
  if (domain_a.extent(1) != domain_b.extent(1)) throw DimensionError("train_cyclegan: domain dims differ");
  CycleGanResult res{make_cyclegan(domain_a.extent(1), cfg), {}};
  CycleGanModel& m = res.model;
  Adam opt_f(cfg.generator_adam), opt_g(cfg.generator_adam), opt_da(cfg.discriminator_adam), opt_db(cfg.discriminator_adam);
  auto pf = m.f.net.parameters(), pg = m.g.net.parameters(), pda = m.da.net.parameters(), pdb = m.db.net.parameters();
  Rng rng = Rng::stream(cfg.seed, "cyclegan.order");
  std::vector<std::size_t> ia(domain_a.extent(0)), ib(domain_b.extent(0));
  const std::size_t per_epoch = std::max(ia.size(), ib.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < ia.size(); ++i) ia[i] = i;
    for (std::size_t i = 0; i < ib.size(); ++i) ib[i] = i;
    rng.shuffle(ia);
    rng.shuffle(ib);
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < per_epoch; start += cfg.batch, ++batch_no) {
      const std::size_t n = std::min(cfg.batch, per_epoch - start);
      std::vector<std::size_t> sa(n), sb(n);
      for (std::size_t i = 0; i < n; ++i) {
        sa[i] = ia[(start + i) % ia.size()];
        sb[i] = ib[(start + i) % ib.size()];
      }
      const Tensor a = gather_rows(domain_a, sa), b = gather_rows(domain_b, sb);

      const GeneratorPhase gp = generator_phase(m.f, m.g, m.da, m.db, a, b, cfg);
      opt_f.step(pf, gp.grad_f);
      opt_g.step(pg, gp.grad_g);

      const DiscriminatorPhase dpb = discriminator_phase(m.db, b, generate(m.f, a));
      const DiscriminatorPhase dpa = discriminator_phase(m.da, a, generate(m.g, b));
      opt_db.step(pdb, dpb.grad);
      opt_da.step(pda, dpa.grad);

      res.history.push_back({epoch, batch_no, gp.losses.identity, gp.losses.gan_f, gp.losses.gan_g, gp.losses.cycle,
                             gp.objective, dpa.gan, dpb.gan});
    }
  }
  return res;
}

// Toy colour domain: n flattened 4x4 RGB patches in [0, 1] around `base`,
// with per-patch colour jitter and per-pixel noise.
inline Tensor toy_colour_domain(std::size_t n, std::array<double, 3> base, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({n, kToyPatchDim});
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 3> c;
    for (std::size_t k = 0; k < 3; ++k) c[k] = base[k] + rng.uniform(-0.08, 0.08);
    for (std::size_t p = 0; p < 16; ++p)
      for (std::size_t k = 0; k < 3; ++k) x(i, p * 3 + k) = std::clamp(c[k] + rng.normal(0.0, 0.03), 0.0, 1.0);
  }
  return x;
}

inline std::array<double, 3> mean_colour(const Tensor& x) {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  const std::size_t pixels = x.size() / 3;
  for (std::size_t i = 0; i < x.size(); ++i) m[i % 3] += x[i];
  for (double& v : m) v /= static_cast<double>(pixels);
  return m;
}

inline std::string cyclegan_history_csv(const std::vector<CycleGanHistoryRow>& h) {
  CsvWriter csv({"epoch", "batch", "l_identity", "l_gan_F", "l_gan_G", "l_cycle", "l_total_gen", "l_disc_A", "l_disc_B"});
  for (const auto& r : h) csv.row(r.epoch, r.batch, r.identity, r.gan_f, r.gan_g, r.cycle, r.total_gen, r.disc_a, r.disc_b);
  return csv.str();
}

}  // namespace histonorm
