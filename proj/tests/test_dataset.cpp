#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "histonorm/dataset.hpp"
#include "histonorm/patches.hpp"
#include "histonorm/zca.hpp"

using namespace histonorm;

namespace {

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

// Worst per-channel OD step at a pixel's byte values.
double od_step(const Image& img, std::size_t i) {
  double q = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double v = img.pixels[3 * i + c];
    q = std::max(q, std::log((v + 2.0) / (v + 1.0)));
  }
  return q;
}

}  // namespace

TEST(Patches, CountMatchesBruteForceEnumeration) {
  for (std::size_t w = 8; w <= 21; ++w)
    for (std::size_t h = 8; h <= 19; h += 3)
      for (std::size_t stride = 1; stride <= 9; ++stride) {
        std::size_t brute = 0;
        for (std::size_t y = 0; y + 8 <= h; y += stride)
          for (std::size_t x = 0; x + 8 <= w; x += stride) ++brute;
        EXPECT_EQ(patch_grid(w, h, 8, stride).count(), brute) << w << "x" << h << " stride " << stride;
        EXPECT_EQ(extract_patches(Image(w, h), 8, stride).size(), brute);
      }
}

TEST(Patches, ReferenceAndDerivedCounts) {
  EXPECT_EQ(extract_patches(Image(224, 224), 8, 8).size(), 784u);
  EXPECT_EQ(patch_grid(224, 224, 8, 8).rows, 28u);
  EXPECT_EQ(extract_patches(Image(128, 128), 8, 8).size(), 256u);
}

TEST(Patches, EightByEightImageIsItsOwnPatch) {
  const Image img = random_image(8, 8, 3);
  for (std::size_t stride : {1u, 4u, 8u, 13u}) {
    const auto p = extract_patches(img, 8, stride);
    ASSERT_EQ(p.size(), 1u);
    ASSERT_EQ(p[0].size(), kPatchDim);
    for (std::size_t i = 0; i < kPatchDim; ++i) EXPECT_EQ(p[0][i], img.pixels[i]);
  }
}

TEST(Patches, RowMajorScanAndInterleavedLayout) {
  const Image img = random_image(12, 10, 4);
  const auto p = extract_patches(img, 8, 4);
  ASSERT_EQ(p.size(), 2u);
  const Rgb px = img.at(4 + 3, 2);
  EXPECT_EQ(p[1][(2 * 8 + 3) * 3 + 0], px.r);
  EXPECT_EQ(p[1][(2 * 8 + 3) * 3 + 2], px.b);
}

TEST(Patches, ImageSmallerThanPatchIsDimensionError) {
  EXPECT_THROW(extract_patches(Image(7, 20), 8, 1), DimensionError);
  EXPECT_THROW(extract_patches(Image(20, 20), 8, 0), DomainError);
}

TEST(Scaling, EndpointsAndMidpoint) {
  EXPECT_EQ(scale_to_pm1(0.0), -1.0);
  EXPECT_EQ(scale_to_pm1(255.0), 1.0);
  EXPECT_NEAR(scale_to_pm1(127.0), -0.00392, 1e-5);
}

TEST(Gcn, ConstantPatchMapsToZeros) {
  for (double v : gcn(std::vector<double>(192, 3.25))) EXPECT_EQ(v, 0.0);
}

TEST(Gcn, BalancedTwoValuePatch) {
  std::vector<double> x(192, 0.0);
  std::fill(x.begin() + 96, x.end(), 2.0);
  const auto y = gcn(x);
  for (std::size_t i = 0; i < 192; ++i) EXPECT_NEAR(y[i], i < 96 ? -1.0 : 1.0, 1e-7);
}

TEST(Gcn, InvariantToShiftAndPositiveScale) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(192);
    for (double& v : x) v = rng.uniform(-1, 1);
    const double a = rng.uniform(0.5, 4.0), b = rng.uniform(-3, 3);
    std::vector<double> t(x);
    for (double& v : t) v = a * v + b;
    const auto gx = gcn(x), gt = gcn(t);
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 192; ++i) {
      // Exact up to the 1e-8 guard on the standard deviation.
      EXPECT_NEAR(gx[i], gt[i], 1e-7);
      mean += gx[i];
    }
    mean /= 192;
    for (double v : gx) var += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var / 192, 1.0, 1e-6);
  }
}

TEST(Zca, WhiteFourPointToyGivesScaledIdentity) {
  const Tensor x({4, 2}, std::vector<double>{1, 1, 1, -1, -1, 1, -1, -1});
  const ZcaTransform t = zca_fit(x);
  const double expect = 1.0 / std::sqrt(1.0 + kZcaEpsilon);
  EXPECT_NEAR(t.matrix(0, 0), expect, 1e-12);
  EXPECT_NEAR(t.matrix(1, 1), expect, 1e-12);
  EXPECT_NEAR(t.matrix(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(t.mean[0], 0.0, 1e-15);
}

TEST(Zca, WhitensFittingPopulationAndCentresMean) {
  Rng rng(12);
  const std::size_t m = 2000, d = 6;
  Tensor x({m, d});
  for (std::size_t i = 0; i < m; ++i) {
    const double z0 = rng.normal(), z1 = rng.normal();
    for (std::size_t j = 0; j < d; ++j) x(i, j) = 10 * (j + 1) * z0 + (j % 2 ? 3 * z1 : -3 * z1) + 4 * rng.normal() + 5.0;
  }
  const ZcaTransform t = zca_fit(x);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(t.matrix(i, j), t.matrix(j, i), 1e-8);
  const RowMatrix cov = population_covariance(zca_apply_rows(t, x));
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j) {
      if (i == j)
        EXPECT_NEAR(cov(i, j), 1.0, 1e-3);
      else
        EXPECT_NEAR(cov(i, j), 0.0, 1e-6);
    }
  std::vector<double> mean(t.mean.values().begin(), t.mean.values().end());
  for (double v : zca_apply(t, mean)) EXPECT_NEAR(v, 0.0, 1e-12);
}

// Whitened covariance is exactly U diag(l / (l + eps)) U^T.
TEST(Zca, WhitenedCovarianceMatchesEigenOracle) {
  Rng rng(13);
  Tensor x({300, 4});
  for (std::size_t i = 0; i < 300; ++i) {
    const double z = rng.normal();
    for (std::size_t j = 0; j < 4; ++j) x(i, j) = z * (j + 1) * 0.1 + 0.01 * (j + 1) * rng.normal();
  }
  const RowMatrix cov = population_covariance(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::VectorXd shrink = eig.eigenvalues();
  for (Eigen::Index i = 0; i < shrink.size(); ++i) shrink[i] = shrink[i] / (shrink[i] + 1e-3);
  const Eigen::MatrixXd oracle = eig.eigenvectors() * shrink.asDiagonal() * eig.eigenvectors().transpose();
  const RowMatrix got = population_covariance(zca_apply_rows(zca_fit(x, 1e-3), x));
  EXPECT_LT((got - oracle).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Zca, UnfittedAndWrongDimensionRejected) {
  EXPECT_THROW(zca_apply(ZcaTransform{}, std::vector<double>(3)), StateError);
  const ZcaTransform t = zca_fit(Tensor({4, 2}, std::vector<double>{1, 1, 1, -1, -1, 1, -1, -1}));
  EXPECT_THROW(zca_apply(t, std::vector<double>(3)), DimensionError);
  EXPECT_THROW(zca_fit(Tensor({0, 2})), EmptyInputError);
}

TEST(Synth, IdentityPerturbationGivesByteIdenticalDomains) {
  const auto base = render_base_images(4, 24, 24, 3);
  const TripletDataset ds = synth_triplets(base, {StainPerturbation{}, StainPerturbation{}}, {"A", "B", "C"}, 3);
  for (const Triplet& t : ds.triplets) {
    EXPECT_EQ(t.images[0], t.images[1]);
    EXPECT_EQ(t.images[0], t.images[2]);
  }
}

TEST(Synth, DefaultChromaticPerturbationPreservesDensitySsim) {
  SynthConfig cfg;
  cfg.triplets = 12;
  cfg.seed = 5;
  const TripletDataset ds = synth_triplets(cfg);
  double mean[2] = {0.0, 0.0};
  for (const Triplet& t : ds.triplets) {
    const Plane a = density_plane(t.images[0]);
    for (std::size_t d = 1; d < 3; ++d) {
      const double s = ssim(a, density_plane(t.images[d]));
      EXPECT_GE(s, 0.995);
      mean[d - 1] += s / static_cast<double>(ds.size());
    }
    EXPECT_NE(t.images[0], t.images[1]);
  }
  EXPECT_GE(mean[0], 0.999);
  EXPECT_GE(mean[1], 0.999);
}

// Scale 1/2 maps the whole chroma triangle into its inscribed unit disc, so
// any rotation stays inside the gamut.
TEST(Synth, GamutSafePerturbationKeepsDensityWithinTwoQuantisationSteps) {
  const auto base = render_base_images(6, 32, 32, 9);
  const StainPerturbation p{0.9, 0.5, 0.5, 0.0, 0.0, 1.0};
  const TripletDataset ds = synth_triplets(base, {p}, {"A", "B"}, 9);
  EXPECT_EQ(ds.generator.at("clamp_count").get<std::size_t>(), 0u);
  for (const Triplet& t : ds.triplets) {
    const Plane a = density_plane(t.images[0]), b = density_plane(t.images[1]);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double q = std::max(od_step(t.images[0], i), od_step(t.images[1], i));
      EXPECT_LT(std::abs(a.values[i] - b.values[i]), 2.0 * q) << "pixel " << i;
    }
  }
}

TEST(Synth, RotatingByPiTwiceIsIdentityWithinOneLsb) {
  const auto base = render_base_images(3, 24, 24, 1);
  const StainPerturbation half_turn{std::numbers::pi, 1.0, 1.0, 0.0, 0.0, 1.0};
  const StainPerturbation scale_safe{0.0, 0.5, 0.5, 0.0, 0.0, 1.0};
  for (const Image& img0 : base) {
    const Image img = apply_perturbation(img0, scale_safe);
    const Image twice = apply_perturbation(apply_perturbation(img, half_turn), half_turn);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      EXPECT_LE(std::abs(int(img.pixels[i]) - int(twice.pixels[i])), 1) << i;
  }
}

TEST(Synth, DeterministicUnderSeed) {
  SynthConfig cfg;
  cfg.triplets = 3;
  cfg.seed = 77;
  const auto a = synth_triplets(cfg), b = synth_triplets(cfg);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.triplets[i].images, b.triplets[i].images);
  cfg.seed = 78;
  EXPECT_NE(synth_triplets(cfg).triplets[0].images[0], a.triplets[0].images[0]);
}

TEST(Synth, PerturbationCountMustMatchDomains) {
  EXPECT_THROW(synth_triplets(render_base_images(1, 8, 8, 1), {StainPerturbation{}}, {"A", "B", "C"}, 1),
               DimensionError);
  EXPECT_THROW(validate(StainPerturbation{0.0, -1.0, 1.0, 0.0, 0.0, 1.0}), DomainError);
}

TEST(Split, FullScaleCounts) {
  const Split s = split_indices(20000, 0.8, 1);
  EXPECT_EQ(s.train.size(), 16000u);
  EXPECT_EQ(s.test.size(), 4000u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 20000u);
}

TEST(Split, TenItemsDisjointAndDeterministic) {
  const Split a = split_indices(10, 0.8, 4), b = split_indices(10, 0.8, 4);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.test.size(), 2u);
  for (std::size_t i : a.test) EXPECT_EQ(std::count(a.train.begin(), a.train.end(), i), 0);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_THROW(split_indices(0, 0.8, 1), EmptyInputError);
  EXPECT_THROW(split_indices(10, 1.0, 1), DomainError);
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  SynthConfig cfg;
  cfg.triplets = 3;
  cfg.width = 16;
  cfg.height = 12;
  const TripletDataset ds = synth_triplets(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "histonorm_test_dataset";
  std::filesystem::remove_all(dir);
  const auto written = save_dataset(ds, dir);
  EXPECT_EQ(written.size(), 10u);
  const TripletDataset back = load_dataset(dir);
  EXPECT_EQ(back.domain_ids, ds.domain_ids);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back.triplets[i].images, ds.triplets[i].images);
  std::filesystem::remove_all(dir);
}
