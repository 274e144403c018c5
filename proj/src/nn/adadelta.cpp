#include "muppet/nn/adadelta.hpp"

#include "muppet/common/error.hpp"

namespace muppet::nn {

OptimizerState::OptimizerState(const ParameterStore& params, AdadeltaConfig config)
    : config_(config), sq_grad_(params.zeros_like()), sq_delta_(params.zeros_like()) {
  if (!(config.rho > 0.0 && config.rho < 1.0) || !(config.epsilon > 0.0)) {
    throw ValidationError("adadelta: rho must be in (0,1) and epsilon positive");
  }
}

void OptimizerState::step(ParameterStore& params, const ParameterStore& grads) {
  if (!params.same_shapes(grads) || !params.same_shapes(sq_grad_)) {
    throw ShapeError("adadelta: gradient shapes do not match parameters");
  }
  if (!grads.all_finite()) throw NumericError("adadelta: non-finite gradient, update rejected");
  const double rho = config_.rho;
  const double eps = config_.epsilon;
  for (auto& [name, p] : params.entries()) {
    const auto g = grads.at(name).array();
    auto eg = sq_grad_.at(name).array();
    auto ed = sq_delta_.at(name).array();
    eg = rho * eg + (1.0 - rho) * g.square();
    const Matrix delta = (-((ed + eps).sqrt() / (eg + eps).sqrt()) * g).matrix();
    ed = rho * ed + (1.0 - rho) * delta.array().square();
    p += config_.learning_rate * delta;
  }
}

}  // namespace muppet::nn
