#pragma once

#include "muppet/nn/parameters.hpp"

namespace muppet::nn {

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  double learning_rate = 1.0;
};

// Running averages E[g^2] and E[dx^2], one array per parameter.
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(const ParameterStore& params, AdadeltaConfig config);

  const AdadeltaConfig& config() const { return config_; }
  const ParameterStore& mean_sq_grad() const { return sq_grad_; }
  const ParameterStore& mean_sq_delta() const { return sq_delta_; }

  // Applies one update in place. If any gradient is non-finite, nothing is
  // touched and NumericError is thrown.
  void step(ParameterStore& params, const ParameterStore& grads);

 private:
  AdadeltaConfig config_;
  ParameterStore sq_grad_;
  ParameterStore sq_delta_;
};

}  // namespace muppet::nn
