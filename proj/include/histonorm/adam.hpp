#pragma once

#include <cmath>
#include <vector>

#include "histonorm/error.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step_count = 0;
  Tensor first_moment;
  Tensor second_moment;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, const Tensor& params)
      : config(cfg), first_moment(params.shape()), second_moment(params.shape()) {}
};

inline void validate(const AdamConfig& c) {
  if (!(c.learning_rate > 0.0)) throw DomainError("adam learning rate must be positive");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0) || !(c.beta2 > 0.0 && c.beta2 < 1.0))
    throw DomainError("adam betas must lie in (0,1)");
  if (!(c.epsilon > 0.0)) throw DomainError("adam epsilon must be positive");
}

// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, Tensor& params, const Tensor& grads) {
  require_shape(grads, params.shape(), "adam_step grads");
  if (state.first_moment.shape() != params.shape()) {
    state.first_moment = Tensor(params.shape());
    state.second_moment = Tensor(params.shape());
  }
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
    params[i] -= c.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + c.epsilon);
  }
}

// Adam over an ordered parameter list; states are created on first use.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) { validate(config_); }

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
      throw DimensionError("Adam::step: parameter/gradient count mismatch");
    if (states_.empty())
      for (const Tensor* p : params) states_.emplace_back(config_, *p);
    if (states_.size() != params.size()) throw StateError("Adam::step: parameter list changed");
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(states_[i], *params[i], grads[i]);
  }

  const AdamConfig& config() const { return config_; }
  std::size_t step_count() const { return states_.empty() ? 0 : states_.front().step_count; }

 private:
  AdamConfig config_;
  std::vector<AdamState> states_;
};

}  // namespace histonorm
