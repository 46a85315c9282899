#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "histonorm/error.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per element.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: function is not finite near the probe point");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Same, but perturbs `param` in place and calls a closure that reads it.
inline Tensor finite_diff_grad_inplace(Tensor& param, const std::function<double()>& loss,
                                       double h = 1e-5) {
  Tensor grad(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double orig = param[i];
    param[i] = orig + h;
    const double fp = loss();
    param[i] = orig - h;
    const double fm = loss();
    param[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: function is not finite near the probe point");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

struct GradCheckResult {
  double max_relative_error = 0.0;  // over elements of magnitude above the floor
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;

  void merge(const GradCheckResult& o) {
    max_relative_error = std::max(max_relative_error, o.max_relative_error);
    max_absolute_error = std::max(max_absolute_error, o.max_absolute_error);
    checked += o.checked;
    passed = passed && o.passed;
  }
};

inline constexpr double kGradRelTol = 1e-4;
inline constexpr double kGradAbsFloor = 1e-6;

// An element passes when |a - n| <= abs_floor or |a - n| / max(|a|, |n|) <= rel_tol.
inline GradCheckResult compare_gradients(const Tensor& analytic, const Tensor& numeric,
                                         double rel_tol = kGradRelTol, double abs_floor = kGradAbsFloor) {
  require_shape(numeric, analytic.shape(), "compare_gradients");
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    r.max_absolute_error = std::max(r.max_absolute_error, diff);
    ++r.checked;
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    // Near-zero entries carry meaningless ratios; they are judged by the floor alone.
    if (scale > abs_floor) r.max_relative_error = std::max(r.max_relative_error, rel);
    if (diff > abs_floor && rel > rel_tol) r.passed = false;
  }
  return r;
}

}  // namespace histonorm
