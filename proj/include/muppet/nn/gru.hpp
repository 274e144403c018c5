#pragma once

#include <string>

#include "muppet/nn/parameters.hpp"
#include "muppet/nn/tensor.hpp"

namespace muppet::nn {

// One GRU direction, row-vector convention:
//   z  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   c  = tanh(x Wh + (r * h) Uh + bh)
//   h' = (1 - z) * h + z * c
// W* are in x hidden, U* hidden x hidden, b* 1 x hidden.
struct GruWeights {
  const Matrix& Wz;
  const Matrix& Uz;
  const Matrix& bz;
  const Matrix& Wr;
  const Matrix& Ur;
  const Matrix& br;
  const Matrix& Wh;
  const Matrix& Uh;
  const Matrix& bh;

  Index input_size() const { return Wz.rows(); }
  Index hidden_size() const { return Wz.cols(); }
  // Throws ShapeError if the nine matrices are inconsistent.
  void validate() const;
};

struct GruGradients {
  Matrix& Wz;
  Matrix& Uz;
  Matrix& bz;
  Matrix& Wr;
  Matrix& Ur;
  Matrix& br;
  Matrix& Wh;
  Matrix& Uh;
  Matrix& bh;
};

// Parameter names of one direction: "<prefix>.Wz", "<prefix>.Uz", ...
inline constexpr const char* kGruSuffixes[9] = {"Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"};

GruWeights gru_weights(const ParameterStore& store, const std::string& prefix);
GruGradients gru_gradients(ParameterStore& store, const std::string& prefix);
// Registers a direction: matrices glorot, biases zero.
void add_gru_direction(ParameterStore& store, const std::string& prefix, Index input, Index hidden,
                       std::mt19937_64& rng);
// Registers "<prefix>.fw.*" and "<prefix>.bw.*".
void add_bigru(ParameterStore& store, const std::string& prefix, Index input, Index hidden,
               std::mt19937_64& rng);

struct GruStepCache {
  RowVector x;
  RowVector h_prev;
  RowVector z;
  RowVector r;
  RowVector c;
};

RowVector gru_step(const RowVector& x, const RowVector& h, const GruWeights& w,
                   GruStepCache* cache = nullptr);

// Accumulates parameter gradients into `grads`; writes input and previous
// hidden-state gradients into dx / dh_prev (overwritten).
void gru_step_backward(const GruStepCache& cache, const GruWeights& w, const RowVector& dh_out,
                       GruGradients& grads, RowVector& dx, RowVector& dh_prev);

}  // namespace muppet::nn
