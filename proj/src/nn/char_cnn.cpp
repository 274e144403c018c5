#include "muppet/nn/char_cnn.hpp"

#include <algorithm>
#include <limits>

#include "muppet/common/error.hpp"

namespace muppet::nn {

RowVector char_window(const Matrix& char_embeddings, Index start, Index width) {
  const Index c = char_embeddings.cols();
  RowVector window = RowVector::Zero(width * c);
  for (Index o = 0; o < width; ++o) {
    const Index row = start + o;
    if (row < char_embeddings.rows()) window.segment(o * c, c) = char_embeddings.row(row);
  }
  return window;
}

RowVector char_cnn_maxpool(const Matrix& char_embeddings, const Matrix& filters, const Matrix& bias,
                           Index width, std::vector<Index>* argmax) {
  if (char_embeddings.rows() < 1) throw ShapeError("char_cnn: token has no characters");
  const Index c = char_embeddings.cols();
  if (filters.rows() != width * c || bias.rows() != 1 || bias.cols() != filters.cols()) {
    throw ShapeError("char_cnn: filter shape does not match embedding width");
  }
  const Index positions = std::max<Index>(1, char_embeddings.rows() - width + 1);
  const Index nf = filters.cols();
  RowVector best = RowVector::Constant(nf, -std::numeric_limits<double>::infinity());
  if (argmax != nullptr) argmax->assign(static_cast<std::size_t>(nf), 0);
  for (Index p = 0; p < positions; ++p) {
    const RowVector response = char_window(char_embeddings, p, width) * filters + bias;
    for (Index f = 0; f < nf; ++f) {
      if (response(f) > best(f)) {
        best(f) = response(f);
        if (argmax != nullptr) (*argmax)[static_cast<std::size_t>(f)] = p;
      }
    }
  }
  return best;
}

}  // namespace muppet::nn
