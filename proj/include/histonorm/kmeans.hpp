#pragma once

#include <limits>
#include <span>
#include <vector>

#include "histonorm/error.hpp"
#include "histonorm/rng.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

struct KMeansState {
  Tensor centroids;  // k x dim

  std::size_t k() const { return centroids.empty() ? 0 : centroids.extent(0); }
  std::size_t dim() const { return centroids.empty() ? 0 : centroids.extent(1); }
  bool fitted() const { return !centroids.empty(); }
};

struct KMeansFit {
  KMeansState state;
  std::vector<std::size_t> assignment;
  // Objective after each assignment step (including empty-cluster repair).
  std::vector<double> objective_history;
  std::size_t repairs = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest centroid; ties go to the lowest index.
inline std::size_t kmeans_assign(const KMeansState& state, std::span<const double> v) {
  if (!state.fitted()) throw StateError("kmeans_assign: state has no centroids");
  if (v.size() != state.dim())
    throw DimensionError("kmeans_assign: vector has " + std::to_string(v.size()) + " values, expected " +
                         std::to_string(state.dim()));
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < state.k(); ++c) {
    const double d = squared_distance(v, state.centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline std::vector<std::size_t> kmeans_assign_rows(const KMeansState& state, const Tensor& rows) {
  std::vector<std::size_t> out(rows.extent(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kmeans_assign(state, rows.row(i));
  return out;
}

inline double kmeans_objective(const KMeansState& state, const Tensor& vectors,
                               const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    total += squared_distance(vectors.row(i), state.centroids.row(assignment[i]));
  return total;
}

// k-means++ seeding: first centroid uniform, then proportional to D^2.
inline Tensor kmeans_plus_plus(const Tensor& vectors, std::size_t k, Rng& rng) {
  const std::size_t m = vectors.extent(0), dim = vectors.extent(1);
  Tensor centroids({k, dim});
  auto copy_row = [&](std::size_t c, std::size_t i) {
    const auto src = vectors.row(i);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
  };
  copy_row(0, rng.index(m));
  std::vector<double> d2(m);
  for (std::size_t i = 0; i < m; ++i) d2[i] = squared_distance(vectors.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.index(m);
    } else {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < m; ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    }
    copy_row(c, pick);
    for (std::size_t i = 0; i < m; ++i) d2[i] = std::min(d2[i], squared_distance(vectors.row(i), centroids.row(c)));
  }
  return centroids;
}

// Lloyd iterations from the given centroids. A cluster left empty after an
// assignment step is reseeded at the point farthest from its own centroid.
inline KMeansFit kmeans_lloyd(const Tensor& vectors, Tensor initial_centroids, std::size_t max_iters) {
  const std::size_t m = vectors.extent(0), k = initial_centroids.extent(0), dim = vectors.extent(1);
  KMeansFit fit;
  fit.state.centroids = std::move(initial_centroids);
  std::vector<std::size_t> prev;
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    fit.assignment = kmeans_assign_rows(fit.state, vectors);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : fit.assignment) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = m;
      double far_d = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (counts[fit.assignment[i]] < 2) continue;
        const double d = squared_distance(vectors.row(i), fit.state.centroids.row(fit.assignment[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == m) break;
      const auto src = vectors.row(far);
      std::copy(src.begin(), src.end(), fit.state.centroids.row(c).begin());
      --counts[fit.assignment[far]];
      fit.assignment[far] = c;
      counts[c] = 1;
      ++fit.repairs;
    }
    fit.objective_history.push_back(kmeans_objective(fit.state, vectors, fit.assignment));
    if (fit.assignment == prev) break;
    prev = fit.assignment;

    Tensor sums({k, dim});
    for (std::size_t i = 0; i < m; ++i) {
      auto dst = sums.row(fit.assignment[i]);
      const auto src = vectors.row(i);
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = fit.state.centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  return fit;
}

inline KMeansFit kmeans_fit_detailed(const Tensor& vectors, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (vectors.rank() != 2) throw DimensionError("kmeans_fit: expected an M x dim matrix");
  if (k == 0) throw DomainError("kmeans_fit: k must be at least 1");
  if (vectors.extent(0) < k)
    throw InsufficientDataError("kmeans_fit: " + std::to_string(vectors.extent(0)) + " vectors for k = " +
                                std::to_string(k));
  Rng rng(seed);
  return kmeans_lloyd(vectors, kmeans_plus_plus(vectors, k, rng), max_iters);
}

inline KMeansState kmeans_fit(const Tensor& vectors, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  return kmeans_fit_detailed(vectors, k, max_iters, seed).state;
}

}  // namespace histonorm
