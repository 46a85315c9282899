#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <span>
#include <vector>

#include "histonorm/error.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

inline constexpr double kZcaEpsilon = 1e-5;

struct ZcaTransform {
  Tensor mean;    // dim
  Tensor matrix;  // dim x dim, symmetric
  double epsilon = kZcaEpsilon;

  bool fitted() const { return !mean.empty(); }
  std::size_t dim() const { return mean.size(); }
};

// Population covariance of the rows of `samples` (M x dim).
inline RowMatrix population_covariance(const Tensor& samples, Eigen::RowVectorXd* mean_out = nullptr) {
  const auto x = as_matrix(samples);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centred = x.rowwise() - mean;
  if (mean_out) *mean_out = mean;
  return (centred.transpose() * centred) / static_cast<double>(x.rows());
}

// U diag(1 / sqrt(lambda + eps)) U^T from the eigendecomposition of the
// population covariance.
inline ZcaTransform zca_fit(const Tensor& samples, double epsilon = kZcaEpsilon) {
  if (samples.rank() != 2 || samples.extent(0) == 0)
    throw EmptyInputError("zca_fit: need a non-empty M x dim sample matrix");
  if (!(epsilon >= 0.0)) throw DomainError("zca_fit: epsilon must be non-negative");
  Eigen::RowVectorXd mean;
  const RowMatrix cov = population_covariance(samples, &mean);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("zca_fit: eigendecomposition failed");
  Eigen::VectorXd scale = eig.eigenvalues();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    const double lambda = std::max(scale[i], 0.0);
    if (lambda + epsilon <= 0.0) throw NumericError("zca_fit: singular covariance with epsilon = 0");
    scale[i] = 1.0 / std::sqrt(lambda + epsilon);
  }
  const Eigen::MatrixXd& u = eig.eigenvectors();
  Eigen::MatrixXd w = u * scale.asDiagonal() * u.transpose();
  w = 0.5 * (w + w.transpose());

  const std::size_t dim = samples.extent(1);
  ZcaTransform t{Tensor({dim}), Tensor({dim, dim}), epsilon};
  for (std::size_t i = 0; i < dim; ++i) {
    t.mean[i] = mean[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < dim; ++j)
      t.matrix(i, j) = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return t;
}

inline std::vector<double> zca_apply(const ZcaTransform& t, std::span<const double> patch) {
  if (!t.fitted()) throw StateError("zca_apply: transform has not been fitted");
  if (patch.size() != t.dim())
    throw DimensionError("zca_apply: patch has " + std::to_string(patch.size()) + " values, expected " +
                         std::to_string(t.dim()));
  const Eigen::Map<const Eigen::VectorXd> x(patch.data(), static_cast<Eigen::Index>(patch.size()));
  const Eigen::Map<const Eigen::VectorXd> m(t.mean.data(), static_cast<Eigen::Index>(t.dim()));
  const Eigen::VectorXd y = as_matrix(t.matrix) * (x - m);
  return {y.data(), y.data() + y.size()};
}

// Row-wise application to an M x dim tensor.
inline Tensor zca_apply_rows(const ZcaTransform& t, const Tensor& rows) {
  if (!t.fitted()) throw StateError("zca_apply: transform has not been fitted");
  if (rows.rank() != 2 || rows.extent(1) != t.dim())
    throw DimensionError("zca_apply_rows: expected M x " + std::to_string(t.dim()) + ", got " +
                         to_string(rows.shape()));
  const Eigen::Map<const Eigen::RowVectorXd> m(t.mean.data(), static_cast<Eigen::Index>(t.dim()));
  Tensor out(rows.shape());
  // The matrix is symmetric, so right-multiplying rows is the same map.
  as_matrix(out).noalias() = (as_matrix(rows).rowwise() - m) * as_matrix(t.matrix);
  return out;
}

}  // namespace histonorm
