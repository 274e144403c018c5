#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "muppet/nn/parameters.hpp"

namespace muppet::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool passed = true;
};

// Loss evaluated at the current contents of the store; when `grads` is
// non-null it must also add the analytic gradient into it.
using LossFn = std::function<double(const ParameterStore& params, ParameterStore* grads)>;

// Central differences (step 1e-4) on up to `max_coordinates` coordinates
// drawn at random across all parameters. Relative error per coordinate is
// |ga - gf| / max(1e-8, |ga| + |gf|).
GradCheckReport grad_check(const LossFn& loss, ParameterStore& params, double tolerance,
                           std::uint64_t seed = 0, std::size_t max_coordinates = 200,
                           double step = 1e-4);

}  // namespace muppet::nn
