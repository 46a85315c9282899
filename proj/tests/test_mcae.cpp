#include <cmath>

#include <gtest/gtest.h>

#include "histonorm/dataset.hpp"
#include "histonorm/gradsuite.hpp"
#include "histonorm/kmeans.hpp"
#include "histonorm/mcae.hpp"

using namespace histonorm;

namespace {

Tensor blobs(std::size_t per_blob, double radius, Rng& rng) {
  Tensor x({2 * per_blob, 10});
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    x(i, 0) = i < per_blob ? 10.0 : -10.0;
    for (std::size_t j = 0; j < 10; ++j) x(i, j) += rng.uniform(-radius, radius) / std::sqrt(10.0);
  }
  return x;
}

TripletDataset small_triplets(std::size_t n, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.triplets = n;
  cfg.width = 16;
  cfg.height = 16;
  cfg.seed = seed;
  return synth_triplets(cfg);
}

double mean_feature_loss(const McaeModel& m, const TripletDataset& ds) {
  double s = 0.0;
  for (const Triplet& t : ds.triplets) {
    std::vector<Tensor> maps;
    for (std::size_t d = 0; d < 3; ++d) {
      const Tensor f = m.feature_map(d, t.images[d], 4);
      maps.push_back(f.reshaped({f.extent(0) * f.extent(1), f.extent(2)}));
    }
    Tensor z({3, maps[0].extent(0), maps[0].extent(1)});
    for (std::size_t d = 0; d < 3; ++d)
      std::copy(maps[d].values().begin(), maps[d].values().end(), z.values().begin() + d * maps[0].size());
    s += feature_loss(z);
  }
  return s / static_cast<double>(ds.size());
}

}  // namespace

TEST(KMeans, SingleClusterIsTheMean) {
  Rng rng(1);
  Tensor x({50, 10});
  for (double& v : x.values()) v = rng.normal();
  const KMeansState s = kmeans_fit(x, 1, 20, 3);
  for (std::size_t j = 0; j < 10; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 50; ++i) mean += x(i, j);
    EXPECT_NEAR(s.centroids(0, j), mean / 50.0, 1e-12);
  }
}

TEST(KMeans, TwoBlobsRecovered) {
  Rng rng(2);
  const KMeansState s = kmeans_fit(blobs(40, 0.1, rng), 2, 50, 7);
  for (double target : {10.0, -10.0}) {
    double best = 1e9;
    for (std::size_t c = 0; c < 2; ++c) {
      double d = (s.centroids(c, 0) - target) * (s.centroids(c, 0) - target);
      for (std::size_t j = 1; j < 10; ++j) d += s.centroids(c, j) * s.centroids(c, j);
      best = std::min(best, std::sqrt(d));
    }
    EXPECT_LT(best, 0.2);
  }
}

TEST(KMeans, ObjectiveNonIncreasingOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    Tensor x({60, 3});
    for (double& v : x.values()) v = rng.normal();
    const KMeansFit fit = kmeans_fit_detailed(x, 4, 100, seed);
    for (std::size_t i = 1; i < fit.objective_history.size(); ++i)
      EXPECT_LE(fit.objective_history[i], fit.objective_history[i - 1] + 1e-12);
  }
}

TEST(KMeans, EmptyClusterRepairKeepsObjectiveMonotone) {
  // Second centroid starts far away from every point and captures nothing.
  const Tensor x({6, 1}, std::vector<double>{0.0, 0.1, 0.2, 5.0, 5.1, 5.2});
  const KMeansFit fit = kmeans_lloyd(x, Tensor({2, 1}, std::vector<double>{2.6, 100.0}), 20);
  EXPECT_GE(fit.repairs, 1u);
  for (std::size_t i = 1; i < fit.objective_history.size(); ++i)
    EXPECT_LE(fit.objective_history[i], fit.objective_history[i - 1] + 1e-12);
  EXPECT_NEAR(fit.objective_history.back(), 4 * 0.01, 1e-9);
}

TEST(KMeans, AssignmentTiesGoToLowestIndexAndTooFewPointsRejected) {
  KMeansState s{Tensor({2, 1}, std::vector<double>{-1.0, 1.0})};
  EXPECT_EQ(kmeans_assign(s, std::vector<double>{0.0}), 0u);
  EXPECT_EQ(kmeans_assign(s, std::vector<double>{0.5}), 1u);
  EXPECT_THROW(kmeans_fit(Tensor({3, 2}), 4, 10, 1), InsufficientDataError);
}

TEST(McaeModel, ZeroModelEncodesZeroAndDecodesHalf) {
  const McaeModel m = zero_mcae({"A", "B", "C"}, AutoEncoderDims{});
  const std::vector<double> patch(192, 0.3);
  const auto z = m.encode("B", patch);
  ASSERT_EQ(z.size(), 10u);
  for (double v : z) EXPECT_EQ(v, 0.0);
  for (double v : m.decode("C", z)) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(m.encode("D", patch), LookupError);
}

TEST(McaeModel, EncodeAndDecodeRangesAndDeterminism) {
  const McaeModel m = make_mcae({"A", "B", "C"}, AutoEncoderDims{}, 4);
  Rng rng(4);
  std::vector<double> patch(192);
  for (double& v : patch) v = rng.uniform(-1, 1);
  const auto z = m.encode("A", patch);
  EXPECT_EQ(z, m.encode("A", patch));
  for (double v : z) EXPECT_LT(std::abs(v), 1.0);
  for (double v : m.decode("A", z)) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(McaeLosses, ReconstructionExamples) {
  EXPECT_EQ(reconstruction_loss(Tensor({1, 192}, 0.4), Tensor({1, 192}, 0.4)), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_loss(Tensor({1, 192}), Tensor({1, 192}, 0.5)), 0.25);
  Tensor a({1, 4}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  Tensor b({1, 4}, std::vector<double>{0.0, 0.0, 1.0, 1.0});
  Tensor a2({2, 4}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4});
  Tensor b2({2, 4}, std::vector<double>{0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0});
  EXPECT_DOUBLE_EQ(reconstruction_loss(a, b), reconstruction_loss(a2, b2));
  EXPECT_THROW(reconstruction_loss(a, a2), DimensionError);
}

TEST(McaeLosses, FeatureLossExamples) {
  Tensor z({3, 1, 10});
  EXPECT_EQ(feature_loss(z), 0.0);
  for (std::size_t k = 0; k < 10; ++k) z(1, 0, k) = 1.0;
  EXPECT_DOUBLE_EQ(feature_loss(z), 0.5);
  // B-C differences are not part of the anchored sum.
  Tensor w({3, 1, 10});
  for (std::size_t k = 0; k < 10; ++k) {
    w(1, 0, k) = 1.0;
    w(2, 0, k) = -1.0;
  }
  EXPECT_DOUBLE_EQ(feature_loss(w), 1.0);
  EXPECT_THROW(feature_loss(Tensor({3, 0, 10})), EmptyInputError);
}

TEST(McaeLosses, FeatureLossPermutationInvariantAndZeroOnlyWhenEqual) {
  Rng rng(5);
  Tensor z({3, 4, 10});
  for (double& v : z.values()) v = rng.uniform(-1, 1);
  Tensor p(z.shape());
  const std::size_t perm[4] = {2, 0, 3, 1};
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 10; ++k) p(d, j, k) = z(d, perm[j], k);
  EXPECT_NEAR(feature_loss(z), feature_loss(p), 1e-15);
  Tensor same(z.shape());
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 10; ++k) same(d, j, k) = z(0, j, k);
  EXPECT_EQ(feature_loss(same), 0.0);
  same(2, 3, 9) += 1e-9;
  EXPECT_GT(feature_loss(same), 0.0);
}

TEST(McaeLosses, ClusterLossExamples) {
  KMeansState s{Tensor({2, 10})};
  for (std::size_t k = 0; k < 10; ++k) s.centroids(1, k) = 0.5;
  Tensor z({3, 1, 10});
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t k = 0; k < 10; ++k) z(d, 0, k) = 0.5;
  EXPECT_EQ(cluster_loss(z, s, {1}), 0.0);
  z(2, 0, 3) = 1.5;
  EXPECT_DOUBLE_EQ(cluster_loss(z, s, {1}), 1.0 / 30.0);
  // Swapping centroid order with the labels leaves the loss unchanged.
  KMeansState swapped{Tensor({2, 10})};
  for (std::size_t k = 0; k < 10; ++k) swapped.centroids(0, k) = 0.5;
  EXPECT_DOUBLE_EQ(cluster_loss(z, swapped, {0}), 1.0 / 30.0);
  EXPECT_THROW(cluster_loss(z, s, {2}), LookupError);
}

TEST(McaeLosses, CombinedIsSumOfTermsAndZeroAtFixedPoint) {
  McaeModel m = make_mcae({"A", "B", "C"}, AutoEncoderDims{12, 6, 3}, 2);
  Rng rng(8);
  std::vector<Tensor> patches;
  for (int d = 0; d < 3; ++d) {
    Tensor t({5, 12});
    for (double& v : t.values()) v = rng.uniform(-1, 1);
    patches.push_back(t);
  }
  m.kmeans = kmeans_fit(encode_rows(m.channels[0], patches[0]), 2, 20, 1);
  const LossBreakdown l = combined_loss(m, patches);
  EXPECT_NEAR(l.total, l.reconstruction + l.feature + l.cluster, 1e-12);
  EXPECT_GT(l.feature, 0.0);

  // Zero model, one centroid at the origin, targets of exactly 0.5.
  McaeModel z = zero_mcae({"A", "B", "C"}, AutoEncoderDims{12, 6, 3});
  z.kmeans = KMeansState{Tensor({1, 3})};
  const LossBreakdown zl = combined_loss(z, std::vector<Tensor>(3, Tensor({4, 12})));
  EXPECT_EQ(zl.total, 0.0);
}

TEST(McaeLosses, CombinedGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto e = check_mcae_combined(seed);
    EXPECT_TRUE(e.result.passed) << "seed " << seed << " rel " << e.result.max_relative_error;
  }
}

TEST(McaeTraining, LossFallsAndHeldOutFeatureLossBeatsUntrained) {
  const auto ds = small_triplets(40, 3);
  const auto [train, test] = split(ds, 0.8, 1);
  McaeTrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch = 8;
  cfg.kmeans_sample = 500;
  cfg.adam.learning_rate = 1e-3;
  cfg.seed = 5;
  McaeModel m = make_mcae(ds.domain_ids, AutoEncoderDims{}, cfg.seed);
  const double untrained = mean_feature_loss(m, test);
  const McaeTrainResult r = train_mcae(m, train, cfg);
  ASSERT_EQ(r.log.size(), cfg.epochs);
  EXPECT_LT(r.log.back().loss.total, r.log.front().loss.total);
  EXPECT_EQ(r.kmeans_fits, cfg.epochs + 1);
  EXPECT_LT(mean_feature_loss(m, test), untrained);
}

TEST(McaeTraining, SameSeedIsBitIdenticalAndPersistenceRoundTrips) {
  const auto ds = small_triplets(8, 4);
  McaeTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.kmeans_sample = 200;
  cfg.seed = 9;
  McaeModel a = make_mcae(ds.domain_ids, AutoEncoderDims{}, cfg.seed);
  McaeModel b = make_mcae(ds.domain_ids, AutoEncoderDims{}, cfg.seed);
  train_mcae(a, ds, cfg);
  train_mcae(b, ds, cfg);
  EXPECT_EQ(dump_json(mcae_to_json(a)), dump_json(mcae_to_json(b)));
  const McaeModel back = mcae_from_json(mcae_to_json(a));
  EXPECT_EQ(parameter_checksum(back.parameters()), parameter_checksum(a.parameters()));
  EXPECT_EQ(back.kmeans.centroids, a.kmeans.centroids);
  EXPECT_EQ(back.domain_ids, a.domain_ids);
}

TEST(McaeTraining, EmptyDatasetRejected) {
  McaeModel m = make_mcae({"A", "B", "C"}, AutoEncoderDims{}, 1);
  TripletDataset empty;
  empty.domain_ids = {"A", "B", "C"};
  EXPECT_THROW(train_mcae(m, empty, McaeTrainConfig{}), EmptyInputError);
}
