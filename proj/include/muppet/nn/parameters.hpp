#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "muppet/nn/tensor.hpp"

namespace muppet::nn {

enum class Init {
  kZero,
  kGlorot,  // uniform in +-sqrt(6 / (rows + cols))
  kUnit,    // uniform in +-1, for lookup tables
};

// Named dense parameters with fixed shapes. Iteration order is by name,
// which keeps checkpoints and optimizer sweeps deterministic.
class ParameterStore {
 public:
  Matrix& add(const std::string& name, Index rows, Index cols, Init init, std::mt19937_64& rng);
  Matrix& add_zero(const std::string& name, Index rows, Index cols);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;

  std::map<std::string, Matrix>& entries() { return params_; }
  const std::map<std::string, Matrix>& entries() const { return params_; }

  std::size_t scalar_count() const;
  // Same names and shapes, all zeros.
  ParameterStore zeros_like() const;
  void set_zero();
  // this += other (shapes must match).
  void add_scaled(const ParameterStore& other, double scale = 1.0);
  bool all_finite() const;
  bool same_shapes(const ParameterStore& other) const;

  // "MPRM", version u32, then per parameter: name length u32, name bytes,
  // rank u32, dims u32..., f32 data. Little-endian.
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  // Copies every parameter of `other` whose name and shape match.
  void assign_from(const ParameterStore& other);

 private:
  std::map<std::string, Matrix> params_;
};

}  // namespace muppet::nn
