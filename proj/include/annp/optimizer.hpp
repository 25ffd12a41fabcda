#pragma once

#include <cstddef>

#include "annp/autodiff.hpp"

namespace annp {

struct AdamConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // lr(step) = learning_rate * decay_rate^(step / decay_steps)
  double decay_rate = 0.5;
  std::size_t decay_steps = 1000;
  // Global-norm clipping threshold; 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) { config_.validate(); }

  // Applies one update; returns the gradient norm before clipping.
  // Parameters without a gradient entry are left untouched.
  double step(ParamStore &params, const ParamStore &grads);
  double learning_rate() const;
  std::size_t steps() const { return step_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  ParamStore m_;
  ParamStore v_;
};

}  // namespace annp
