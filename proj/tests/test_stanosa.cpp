#include <cmath>

#include <gtest/gtest.h>

#include "histonorm/dataset.hpp"
#include "histonorm/mcae.hpp"
#include "histonorm/stanosa.hpp"

using namespace histonorm;

namespace {

std::vector<Image> domain_a(std::size_t n, std::uint64_t seed) { return render_base_images(n, 16, 16, seed); }

ZcaTransform toy_zca(std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({400, kPatchDim});
  for (std::size_t i = 0; i < 400; ++i) {
    std::vector<std::uint8_t> p(kPatchDim);
    for (auto& b : p) b = static_cast<std::uint8_t>(rng.index(256));
    const auto g = gcn_rows(p, kPatchDim);
    std::copy(g.values().begin(), g.values().end(), x.row(i).begin());
  }
  return zca_fit(x);
}

}  // namespace

TEST(Stanosa, ConstantPatchPreprocessesToMinusWhitenedMean) {
  const ZcaTransform zca = toy_zca(1);
  const auto y = stanosa_preprocess(std::vector<std::uint8_t>(kPatchDim, 140), zca);
  std::vector<double> neg(zca.dim());
  for (std::size_t i = 0; i < zca.dim(); ++i) neg[i] = -zca.mean[i];
  const Eigen::Map<const Eigen::VectorXd> m(neg.data(), static_cast<Eigen::Index>(neg.size()));
  const Eigen::VectorXd expect = as_matrix(zca.matrix) * m;
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expect[static_cast<Eigen::Index>(i)], 1e-12);
}

TEST(Stanosa, PreprocessInvariantToAffineBytesAndDeterministic) {
  const ZcaTransform zca = toy_zca(2);
  Rng rng(3);
  std::vector<std::uint8_t> x(kPatchDim), t(kPatchDim);
  for (std::size_t i = 0; i < kPatchDim; ++i) {
    x[i] = static_cast<std::uint8_t>(rng.index(100));
    t[i] = static_cast<std::uint8_t>(2 * x[i] + 10);
  }
  const auto a = stanosa_preprocess(x, zca), b = stanosa_preprocess(t, zca);
  EXPECT_EQ(a, stanosa_preprocess(x, zca));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(Stanosa, ArchitectureMatchesOneMcaeChannel) {
  const StanosaModel s = make_stanosa(AutoEncoderDims{}, 1);
  const McaeModel m = make_mcae({"A", "B", "C"}, AutoEncoderDims{}, 1);
  const auto ls = s.ae.layers(), lm = m.channels[0].layers();
  ASSERT_EQ(ls.size(), lm.size());
  for (std::size_t i = 0; i < ls.size(); ++i) {
    EXPECT_EQ(ls[i]->weights.shape(), lm[i]->weights.shape());
    EXPECT_EQ(ls[i]->activation, lm[i]->activation);
  }
}

TEST(Stanosa, TrainingFallsWhitensAndReproduces) {
  const auto images = domain_a(24, 5);
  StanosaTrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch = 4;
  cfg.adam.learning_rate = 1e-3;
  cfg.seed = 6;
  StanosaModel a = make_stanosa(AutoEncoderDims{}, cfg.seed);
  const StanosaTrainResult r = train_stanosa(a, images, cfg);
  ASSERT_EQ(r.log.size(), cfg.epochs);
  EXPECT_LT(r.log.back().reconstruction, r.log.front().reconstruction);

  // Fitting population: every stride-4 patch, since the sample cap exceeds the total.
  std::vector<std::uint8_t> bytes;
  for (const Image& img : images) {
    const auto b = extract_patch_bytes(img, kPatchSize, cfg.stride);
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  ASSERT_LT(bytes.size() / kPatchDim, cfg.zca_sample);
  const RowMatrix cov = population_covariance(stanosa_preprocess_rows(bytes, a.zca));
  EXPECT_LT((cov - RowMatrix::Identity(cov.rows(), cov.cols())).diagonal().cwiseAbs().maxCoeff(), 0.05);

  StanosaModel b = make_stanosa(AutoEncoderDims{}, cfg.seed);
  train_stanosa(b, images, cfg);
  EXPECT_EQ(dump_json(stanosa_to_json(a)), dump_json(stanosa_to_json(b)));
  const StanosaModel back = stanosa_from_json(stanosa_to_json(a));
  EXPECT_EQ(back.zca.matrix, a.zca.matrix);
  EXPECT_EQ(back.feature_map(0, images[0], 4), a.feature_map(0, images[0], 4));
}

TEST(Stanosa, EmptyInputRejected) {
  StanosaModel m = make_stanosa(AutoEncoderDims{}, 1);
  EXPECT_THROW(train_stanosa(m, {}, StanosaTrainConfig{}), EmptyInputError);
}
