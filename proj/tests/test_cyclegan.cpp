#include <cmath>

#include <gtest/gtest.h>

#include "histonorm/cyclegan.hpp"
#include "histonorm/gradsuite.hpp"

using namespace histonorm;

namespace {

// Elementwise affine generator x -> scale * x + shift as a single linear layer.
ToyGenerator affine(std::size_t dim, double scale, double shift) {
  DenseLayer l = zero_dense(dim, dim, Activation::linear);
  for (std::size_t i = 0; i < dim; ++i) {
    l.weights(i, i) = scale;
    l.bias[i] = shift;
  }
  return {Mlp{{l}}};
}

Tensor random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, d});
  for (double& v : t.values()) v = rng.uniform(0.05, 0.95);
  return t;
}

}  // namespace

TEST(GanLoss, SupremumAndHalfExamples) {
  const std::vector<double> ones(8, 1.0), zeros(8, 0.0), half(8, 0.5);
  EXPECT_NEAR(gan_loss(ones, zeros), 0.0, 1e-8);
  EXPECT_LE(gan_loss(ones, zeros), 0.0);
  EXPECT_NEAR(gan_loss(half, half), 2.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(gan_loss(half, half), -1.38629, 1e-5);
  // Clamping keeps the worst case finite.
  EXPECT_NEAR(gan_loss(zeros, ones), 2.0 * std::log(1e-9), 1e-6);
}

TEST(GanLoss, PermutationInvariantAndValidated) {
  const std::vector<double> r{0.9, 0.2, 0.7}, f{0.1, 0.4, 0.3};
  const std::vector<double> rp{0.7, 0.9, 0.2}, fp{0.3, 0.1, 0.4};
  EXPECT_DOUBLE_EQ(gan_loss(r, f), gan_loss(rp, fp));
  EXPECT_THROW(gan_loss(std::vector<double>{}, f), EmptyInputError);
  EXPECT_THROW(gan_loss(std::vector<double>{1.2}, f), DomainError);
  EXPECT_THROW(gan_loss(r, std::vector<double>{NAN}), DomainError);
}

TEST(IdentityLoss, IdentityGeneratorsAndShiftedExample) {
  const Tensor a = random_batch(5, 48, 1), b = random_batch(5, 48, 2);
  const ToyGenerator id = affine(48, 1.0, 0.0);
  EXPECT_EQ(identity_loss(id, id, a, b), 0.0);
  EXPECT_NEAR(identity_loss(id, affine(48, 1.0, 0.1), a, b), 4.8, 1e-12);
  Rng rng(3);
  Tensor mixed = random_batch(5, 48, 4);
  for (int t = 0; t < 20; ++t)
    EXPECT_GE(identity_loss(affine(48, rng.uniform(-2, 2), rng.uniform(-1, 1)),
                            affine(48, rng.uniform(-2, 2), rng.uniform(-1, 1)), a, mixed), 0.0);
}

TEST(CycleLoss, InversePairsAndIdentityAreZero) {
  const Tensor a = random_batch(4, 6, 5), b = random_batch(4, 6, 6);
  const ToyGenerator id = affine(6, 1.0, 0.0);
  EXPECT_EQ(cycle_loss(id, id, a, b), 0.0);
  EXPECT_NEAR(cycle_loss(affine(6, 2.0, 0.5), affine(6, 0.5, -0.25), a, b), 0.0, 1e-14);
}

TEST(CycleLoss, TwoPointInstanceMatchesHandComposition) {
  const Tensor a({2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  const Tensor b({2, 2}, std::vector<double>{0.5, 0.6, 0.7, 0.8});
  const double fs = 1.5, fb = 0.1, gs = 0.8, gb = -0.05;
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    double ra = 0.0, rb = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double x = a(i, k), y = b(i, k);
      ra += std::abs(gs * (fs * x + fb) + gb - x);
      rb += std::abs(fs * (gs * y + gb) + fb - y);
    }
    expect += (ra + rb) / 2.0;
  }
  EXPECT_NEAR(cycle_loss(affine(2, fs, fb), affine(2, gs, gb), a, b), expect, 1e-15);
}

TEST(FullObjective, LambdaAlgebraAndRecomputation) {
  const CycleLosses l{0.7, -1.1, -0.9, 0.3};
  CycleGanConfig cfg;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  EXPECT_DOUBLE_EQ(full_objective(l, cfg), -2.0);
  cfg.lambda1 = 5.0;
  cfg.lambda2 = 10.0;
  const double base = full_objective(l, cfg);
  cfg.lambda1 = 10.0;
  EXPECT_NEAR(full_objective(l, cfg), base + 5.0 * l.identity, 1e-12);

  CycleGanConfig def;
  def.seed = 4;
  const CycleGanModel m = make_cyclegan(kToyPatchDim, def);
  const Tensor a = random_batch(6, kToyPatchDim, 7), b = random_batch(6, kToyPatchDim, 8);
  const CycleLosses e = evaluate_losses(m.f, m.g, m.da, m.db, a, b);
  const double manual = gan_loss(score(m.db, b), score(m.db, generate(m.f, a))) +
                        gan_loss(score(m.da, a), score(m.da, generate(m.g, b))) +
                        5.0 * (l1_loss(generate(m.g, a), a) + l1_loss(generate(m.f, b), b)) +
                        10.0 * (l1_loss(generate(m.g, generate(m.f, a)), a) + l1_loss(generate(m.f, generate(m.g, b)), b));
  EXPECT_NEAR(full_objective(e, def), manual, 1e-12);
  def.saturating = true;
  EXPECT_NEAR(generator_phase(m.f, m.g, m.da, m.db, a, b, def).objective, manual, 1e-12);
}

TEST(CycleLosses, BatchPermutationInvariant) {
  CycleGanConfig cfg;
  cfg.seed = 2;
  const CycleGanModel m = make_cyclegan(kToyPatchDim, cfg);
  const Tensor a = random_batch(5, kToyPatchDim, 1), b = random_batch(5, kToyPatchDim, 2);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  const CycleLosses x = evaluate_losses(m.f, m.g, m.da, m.db, a, b);
  const CycleLosses y = evaluate_losses(m.f, m.g, m.da, m.db, gather_rows(a, perm), gather_rows(b, perm));
  EXPECT_NEAR(x.identity, y.identity, 1e-12);
  EXPECT_NEAR(x.gan_f, y.gan_f, 1e-12);
  EXPECT_NEAR(x.gan_g, y.gan_g, 1e-12);
  EXPECT_NEAR(x.cycle, y.cycle, 1e-12);
  EXPECT_LE(x.gan_f, 0.0);
  EXPECT_GE(x.cycle, 0.0);
}

TEST(Discriminator, AscentOnFixedBatchIsNonDecreasing) {
  CycleGanConfig cfg;
  cfg.seed = 11;
  CycleGanModel m = make_cyclegan(kToyPatchDim, cfg);
  const Tensor real = toy_colour_domain(32, {0.2, 0.3, 0.8}, 1);
  const Tensor fake = generate(m.f, toy_colour_domain(32, {0.8, 0.3, 0.3}, 2));
  auto params = m.db.net.parameters();
  double prev = discriminator_phase(m.db, real, fake).gan;
  for (int step = 0; step < 50; ++step) {
    const DiscriminatorPhase dp = discriminator_phase(m.db, real, fake);
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < params[i]->size(); ++k) (*params[i])[k] -= 0.01 * dp.grad[i][k];
    const double now = discriminator_phase(m.db, real, fake).gan;
    EXPECT_GE(now, prev - 1e-12) << "step " << step;
    prev = now;
  }
}


TEST(CycleGanTraining, ToyDomainsConvergeAndHistoryIsOrdered) {
  const std::array<double, 3> red{0.8, 0.3, 0.3}, blue{0.3, 0.3, 0.8};
  const Tensor a = toy_colour_domain(128, red, 1), b = toy_colour_domain(128, blue, 2);
  CycleGanConfig cfg;
  cfg.seed = 1;
  const CycleGanResult r = train_cyclegan(a, b, cfg);
  ASSERT_EQ(r.history.size(), cfg.epochs * 8);
  EXPECT_EQ(r.history.front().epoch, 1u);
  EXPECT_EQ(r.history.back().epoch, cfg.epochs);
  const auto fa = mean_colour(generate(r.model.f, a)), ma = mean_colour(a), mb = mean_colour(b);
  double da = 0.0, db = 0.0;
  for (int k = 0; k < 3; ++k) {
    da += (fa[k] - ma[k]) * (fa[k] - ma[k]);
    db += (fa[k] - mb[k]) * (fa[k] - mb[k]);
  }
  EXPECT_LT(db, da);
  EXPECT_LE(r.epoch_mean(cfg.epochs, &CycleGanHistoryRow::cycle),
            0.5 * r.epoch_mean(1, &CycleGanHistoryRow::cycle));
  const std::string csv = cyclegan_history_csv(r.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,batch,l_identity,l_gan_F,l_gan_G,l_cycle,l_total_gen,l_disc_A,l_disc_B");
}

TEST(CycleGanTraining, DeterministicAndValidatesInput) {
  const Tensor a = toy_colour_domain(16, {0.8, 0.3, 0.3}, 1), b = toy_colour_domain(16, {0.3, 0.3, 0.8}, 2);
  CycleGanConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 5;
  EXPECT_EQ(cyclegan_history_csv(train_cyclegan(a, b, cfg).history), cyclegan_history_csv(train_cyclegan(a, b, cfg).history));
  EXPECT_THROW(train_cyclegan(Tensor({0, kToyPatchDim}), b, cfg), EmptyInputError);
  cfg.lambda1 = -1.0;
  EXPECT_THROW(train_cyclegan(a, b, cfg), DomainError);
}

TEST(CycleGanGradients, ObjectivesMatchFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u}) {
    for (bool sat : {false, true}) {
      const auto e = check_cyclegan_generators(sat, seed);
      EXPECT_TRUE(e.result.passed) << e.name << " rel " << e.result.max_relative_error;
    }
    const auto d = check_cyclegan_discriminator(seed);
    EXPECT_TRUE(d.result.passed) << d.name << " rel " << d.result.max_relative_error;
  }
}
