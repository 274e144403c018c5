#pragma once

#include <vector>

#include "muppet/nn/tensor.hpp"

namespace muppet::nn {

inline constexpr Index kCharFilterWidth = 5;

// Convolves a token's character embeddings (L x c) with `filters`
// (width*c x F) plus `bias` (1 x F) and max-pools each filter over the
// valid window positions. Tokens shorter than the filter width are
// zero-padded on the right, giving a single window. `argmax`, when given,
// receives the winning window start per filter.
RowVector char_cnn_maxpool(const Matrix& char_embeddings, const Matrix& filters, const Matrix& bias,
                           Index width = kCharFilterWidth, std::vector<Index>* argmax = nullptr);

// The flattened (1 x width*c) window starting at `start`, zero past the end.
RowVector char_window(const Matrix& char_embeddings, Index start, Index width);

}  // namespace muppet::nn
