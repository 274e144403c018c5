#include "muppet/nn/parameters.hpp"

#include <cmath>
#include <fstream>

#include "muppet/common/binary_io.hpp"
#include "muppet/common/error.hpp"

namespace muppet::nn {

namespace {

constexpr char kMagic[] = "MPRM";
constexpr std::uint32_t kVersion = 1;

}  // namespace

Matrix& ParameterStore::add(const std::string& name, Index rows, Index cols, Init init,
                            std::mt19937_64& rng) {
  if (params_.count(name)) throw ShapeError("parameter '" + name + "' already exists");
  Matrix m = Matrix::Zero(rows, cols);
  if (init != Init::kZero) {
    const double limit = init == Init::kUnit ? 1.0 : std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  }
  return params_.emplace(name, std::move(m)).first->second;
}

Matrix& ParameterStore::add_zero(const std::string& name, Index rows, Index cols) {
  if (params_.count(name)) throw ShapeError("parameter '" + name + "' already exists");
  return params_.emplace(name, Matrix::Zero(rows, cols)).first->second;
}

Matrix& ParameterStore::at(const std::string& name) {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return it->second;
}

const Matrix& ParameterStore::at(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : params_) n += static_cast<std::size_t>(m.size());
  return n;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out;
  for (const auto& [name, m] : params_) out.params_.emplace(name, Matrix::Zero(m.rows(), m.cols()));
  return out;
}

void ParameterStore::set_zero() {
  for (auto& [_, m] : params_) m.setZero();
}

void ParameterStore::add_scaled(const ParameterStore& other, double scale) {
  for (const auto& [name, m] : other.params_) {
    auto& mine = at(name);
    if (mine.rows() != m.rows() || mine.cols() != m.cols()) {
      throw ShapeError("shape mismatch accumulating '" + name + "'");
    }
    mine += scale * m;
  }
}

bool ParameterStore::all_finite() const {
  for (const auto& [_, m] : params_) {
    if (!m.allFinite()) return false;
  }
  return true;
}

bool ParameterStore::same_shapes(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.rows() != b->second.rows() ||
        a->second.cols() != b->second.cols()) {
      return false;
    }
  }
  return true;
}

void ParameterStore::assign_from(const ParameterStore& other) {
  for (const auto& [name, m] : other.params_) {
    const auto it = params_.find(name);
    if (it != params_.end() && it->second.rows() == m.rows() && it->second.cols() == m.cols()) {
      it->second = m;
    }
  }
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  binary::write_magic(out, kMagic);
  binary::write_le<std::uint32_t>(out, kVersion);
  for (const auto& [name, m] : params_) {
    binary::write_string(out, name);
    binary::write_le<std::uint32_t>(out, 2);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) binary::write_le<float>(out, static_cast<float>(m.data()[i]));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  binary::expect_magic(in, kMagic);
  const auto version = binary::read_le<std::uint32_t>(in, "version");
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  ParameterStore store;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name = binary::read_string(in, "parameter name");
    const auto rank = binary::read_le<std::uint32_t>(in, "rank");
    if (rank < 1 || rank > 2) throw IoError("unsupported rank for '" + name + "'");
    Index rows = 1;
    Index cols = 1;
    if (rank == 1) {
      cols = binary::read_le<std::uint32_t>(in, "dim");
    } else {
      rows = binary::read_le<std::uint32_t>(in, "dim");
      cols = binary::read_le<std::uint32_t>(in, "dim");
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = binary::read_le<float>(in, "parameter data");
    if (!store.params_.emplace(name, std::move(m)).second) {
      throw IoError("duplicate parameter '" + name + "' in checkpoint");
    }
  }
  return store;
}

}  // namespace muppet::nn
