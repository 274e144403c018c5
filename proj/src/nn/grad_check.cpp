#include "muppet/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace muppet::nn {

GradCheckReport grad_check(const LossFn& loss, ParameterStore& params, double tolerance,
                           std::uint64_t seed, std::size_t max_coordinates, double step) {
  ParameterStore analytic = params.zeros_like();
  loss(params, &analytic);

  struct Coord {
    std::string name;
    Index index;
  };
  std::vector<Coord> coords;
  for (const auto& [name, p] : params.entries()) {
    for (Index i = 0; i < p.size(); ++i) coords.push_back({name, i});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > max_coordinates) coords.resize(max_coordinates);

  GradCheckReport report;
  for (const auto& [name, index] : coords) {
    double& x = params.at(name).data()[index];
    const double saved = x;
    x = saved + step;
    const double up = loss(params, nullptr);
    x = saved - step;
    const double down = loss(params, nullptr);
    x = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double ga = analytic.at(name).data()[index];
    const double rel = std::abs(ga - numeric) / std::max(1e-8, std::abs(ga) + std::abs(numeric));
    ++report.coordinates_checked;
    if (rel > report.max_relative_error || report.coordinates_checked == 1) {
      report.max_relative_error = rel;
      report.worst_parameter = name;
      report.worst_index = index;
      report.worst_analytic = ga;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace muppet::nn
