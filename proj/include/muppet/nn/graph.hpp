#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "muppet/nn/parameters.hpp"
#include "muppet/nn/tensor.hpp"

namespace muppet::nn {

class Graph;

// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  bool valid() const { return id_ != kInvalid; }
  std::size_t id() const { return id_; }

 private:
  friend class Graph;
  explicit Var(std::size_t id) : id_(id) {}
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t id_ = kInvalid;
};

enum class Mode { kEval, kTrain };

// Reverse-mode tape over the fixed set of layers used by the encoder and
// the reader. Nodes are recorded in creation order; backward() walks them in
// reverse. Parameter nodes alias the ParameterStore (no copy), and
// embedding-row gradients are kept sparse.
//
// A Graph is single-use and not thread-safe; build one per sample.
class Graph {
 public:
  explicit Graph(const ParameterStore& params, Mode mode = Mode::kEval, std::uint64_t seed = 0);

  Mode mode() const { return mode_; }
  const ParameterStore& params() const { return params_; }

  Var param(const std::string& name);
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  // Gradient of a node after backward(); zero-sized if never reached.
  const Matrix& grad(Var v) const;

  // Adds `g` to the output gradient of `v`. Call for every output that the
  // loss depends on, then backward().
  void seed(Var v, const Matrix& g);
  void backward();
  // Adds the gradients of every parameter touched by the graph into `grads`.
  void accumulate_gradients(ParameterStore& grads) const;

  // ---- linear algebra
  Var matmul(Var a, Var b);     // a b
  Var matmul_nt(Var a, Var b);  // a b^T
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);        // row (1 x m) added to every row
  Var add_col(Var a, Var col);        // col (n x 1) added to every column
  Var add_scalar(Var a, Var scalar);  // scalar is 1 x 1
  Var mul(Var a, Var b);              // elementwise
  Var mul_row(Var a, Var row);        // every row times `row` elementwise
  Var scale(Var a, double k);
  Var scale_by(Var a, Var scalar);  // scalar is 1 x 1
  Var sum(Var a);                   // 1 x 1
  Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

  // ---- nonlinearities
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);

  // ---- structure
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var table, const std::vector<Index>& rows);
  // Per-segment columnwise max: rows are split into consecutive segments of
  // the given lengths; output is (#segments x cols).
  Var segment_max(Var a, const std::vector<std::size_t>& lengths);
  Var max_rows(Var a);  // 1 x cols
  Var row_max(Var a);   // rows x 1
  // Row softmax; with mask_diagonal, entry (i, i) is excluded. A row with
  // every entry excluded yields zeros.
  Var softmax_rows(Var a, bool mask_diagonal = false);

  // Variational dropout: one mask over columns shared by every row,
  // inverted scaling. Identity in eval mode or when rate == 0.
  Var dropout(Var a, double rate);

  // ---- fused layers
  // Bidirectional GRU with parameters "<prefix>.fw.*" / "<prefix>.bw.*".
  // Output row t is [forward state t ; backward state t].
  Var bigru(Var x, const std::string& prefix);
  // Char-CNN token embeddings from "<prefix>.chars" (256 x c),
  // "<prefix>.filters" (5c x F) and "<prefix>.bias" (1 x F). One output row
  // per token; characters are the token's bytes.
  Var char_cnn(const std::vector<std::string>& tokens, const std::string& prefix);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(std::size_t)> backward;
    const Matrix& value() const { return external != nullptr ? *external : owned; }
  };

  Var push(Matrix value, bool needs_grad, std::function<void(std::size_t)> backward);
  bool needs(Var v) const { return nodes_[v.id_].needs_grad; }
  Matrix& grad_ref(std::size_t id);
  const Matrix& dy(std::size_t id) const { return nodes_[id].grad; }

  const ParameterStore& params_;
  Mode mode_;
  std::mt19937_64 rng_;
  std::deque<Node> nodes_;  // stable references across push_back
  std::unordered_map<std::string, std::size_t> param_nodes_;
  // node id -> row -> gradient, for gather_rows on parameter tables.
  std::map<std::size_t, std::map<Index, RowVector>> sparse_rows_;
};

}  // namespace muppet::nn
