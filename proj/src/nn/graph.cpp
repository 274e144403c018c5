#include "muppet/nn/graph.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "muppet/common/error.hpp"
#include "muppet/nn/char_cnn.hpp"
#include "muppet/nn/gru.hpp"

namespace muppet::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Graph::Graph(const ParameterStore& params, Mode mode, std::uint64_t seed)
    : params_(params), mode_(mode), rng_(seed) {}

Var Graph::push(Matrix value, bool needs_grad, std::function<void(std::size_t)> backward) {
  Node node;
  node.owned = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(nodes_.size() - 1);
}

Matrix& Graph::grad_ref(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value().rows(), node.value().cols());
  return node.grad;
}

Var Graph::param(const std::string& name) {
  if (const auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(it->second);
  Node node;
  node.external = &params_.at(name);
  node.needs_grad = true;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(name, nodes_.size() - 1);
  return Var(nodes_.size() - 1);
}

Var Graph::constant(Matrix value) { return push(std::move(value), false, nullptr); }

const Matrix& Graph::value(Var v) const { return nodes_.at(v.id_).value(); }

const Matrix& Graph::grad(Var v) const { return nodes_.at(v.id_).grad; }

void Graph::seed(Var v, const Matrix& g) {
  const auto& val = value(v);
  require(g.rows() == val.rows() && g.cols() == val.cols(),
          "seed gradient " + shape(g) + " does not match node " + shape(val));
  grad_ref(v.id_) += g;
}

void Graph::backward() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward && node.grad.size() != 0) node.backward(i);
  }
}

void Graph::accumulate_gradients(ParameterStore& grads) const {
  for (const auto& [name, id] : param_nodes_) {
    auto& target = grads.at(name);
    const auto& node = nodes_[id];
    if (node.grad.size() != 0) target += node.grad;
    if (const auto it = sparse_rows_.find(id); it != sparse_rows_.end()) {
      for (const auto& [row, g] : it->second) target.row(row) += g;
    }
  }
}

Var Graph::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.cols() == B.rows(), "matmul: " + shape(A) + " * " + shape(B));
  Matrix out = A * B;
  return push(std::move(out), needs(a) || needs(b), [this, a, b](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_).noalias() += dY * value(b).transpose();
    if (needs(b)) grad_ref(b.id_).noalias() += value(a).transpose() * dY;
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.cols() == B.cols(), "matmul_nt: " + shape(A) + " * " + shape(B) + "^T");
  Matrix out = A * B.transpose();
  return push(std::move(out), needs(a) || needs(b), [this, a, b](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_).noalias() += dY * value(b);
    if (needs(b)) grad_ref(b.id_).noalias() += dY.transpose() * value(a);
  });
}

Var Graph::transpose(Var a) {
  Matrix out = value(a).transpose();
  return push(std::move(out), needs(a), [this, a](std::size_t self) {
    grad_ref(a.id_) += dy(self).transpose();
  });
}

Var Graph::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: " + shape(A) + " + " + shape(B));
  Matrix out = A + B;
  return push(std::move(out), needs(a) || needs(b), [this, a, b](std::size_t self) {
    if (needs(a)) grad_ref(a.id_) += dy(self);
    if (needs(b)) grad_ref(b.id_) += dy(self);
  });
}

Var Graph::add_row(Var a, Var row) {
  const auto& A = value(a);
  const auto& R = value(row);
  require(R.rows() == 1 && R.cols() == A.cols(), "add_row: " + shape(A) + " + " + shape(R));
  Matrix out = A.rowwise() + R.row(0);
  return push(std::move(out), needs(a) || needs(row), [this, a, row](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_) += dY;
    if (needs(row)) grad_ref(row.id_) += dY.colwise().sum();
  });
}

Var Graph::add_col(Var a, Var col) {
  const auto& A = value(a);
  const auto& C = value(col);
  require(C.cols() == 1 && C.rows() == A.rows(), "add_col: " + shape(A) + " + " + shape(C));
  Matrix out = A.colwise() + C.col(0);
  return push(std::move(out), needs(a) || needs(col), [this, a, col](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_) += dY;
    if (needs(col)) grad_ref(col.id_) += dY.rowwise().sum();
  });
}

Var Graph::add_scalar(Var a, Var scalar) {
  const auto& S = value(scalar);
  require(S.rows() == 1 && S.cols() == 1, "add_scalar: scalar is " + shape(S));
  Matrix out = value(a).array() + S(0, 0);
  return push(std::move(out), needs(a) || needs(scalar), [this, a, scalar](std::size_t self) {
    if (needs(a)) grad_ref(a.id_) += dy(self);
    if (needs(scalar)) grad_ref(scalar.id_)(0, 0) += dy(self).sum();
  });
}

Var Graph::mul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "mul: " + shape(A) + " * " + shape(B));
  Matrix out = A.cwiseProduct(B);
  return push(std::move(out), needs(a) || needs(b), [this, a, b](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_) += dY.cwiseProduct(value(b));
    if (needs(b)) grad_ref(b.id_) += dY.cwiseProduct(value(a));
  });
}

Var Graph::mul_row(Var a, Var row) {
  const auto& A = value(a);
  const auto& R = value(row);
  require(R.rows() == 1 && R.cols() == A.cols(), "mul_row: " + shape(A) + " * " + shape(R));
  Matrix out = A.array().rowwise() * R.row(0).array();
  return push(std::move(out), needs(a) || needs(row), [this, a, row](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_) += (dY.array().rowwise() * value(row).row(0).array()).matrix();
    if (needs(row)) grad_ref(row.id_) += dY.cwiseProduct(value(a)).colwise().sum();
  });
}

Var Graph::scale(Var a, double k) {
  Matrix out = value(a) * k;
  return push(std::move(out), needs(a), [this, a, k](std::size_t self) {
    grad_ref(a.id_) += k * dy(self);
  });
}

Var Graph::scale_by(Var a, Var scalar) {
  const auto& S = value(scalar);
  require(S.rows() == 1 && S.cols() == 1, "scale_by: scalar is " + shape(S));
  Matrix out = value(a) * S(0, 0);
  return push(std::move(out), needs(a) || needs(scalar), [this, a, scalar](std::size_t self) {
    const auto& dY = dy(self);
    if (needs(a)) grad_ref(a.id_) += value(scalar)(0, 0) * dY;
    if (needs(scalar)) grad_ref(scalar.id_)(0, 0) += dY.cwiseProduct(value(a)).sum();
  });
}

Var Graph::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), needs(a), [this, a](std::size_t self) {
    grad_ref(a.id_).array() += dy(self)(0, 0);
  });
}

Var Graph::sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  return push(std::move(out), needs(a), [this, a](std::size_t self) {
    const auto& y = value(Var(self));
    grad_ref(a.id_) += (dy(self).array() * y.array() * (1.0 - y.array())).matrix();
  });
}

Var Graph::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  return push(std::move(out), needs(a), [this, a](std::size_t self) {
    const auto& y = value(Var(self));
    grad_ref(a.id_) += (dy(self).array() * (1.0 - y.array().square())).matrix();
  });
}

Var Graph::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return push(std::move(out), needs(a), [this, a](std::size_t self) {
    const auto& x = value(a);
    grad_ref(a.id_) += (x.array() > 0.0).select(dy(self), 0.0).matrix();
  });
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = value(parts.front()).rows();
  Index cols = 0;
  bool any = false;
  for (const auto p : parts) {
    require(value(p).rows() == rows, "concat_cols: row mismatch");
    cols += value(p).cols();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto p : parts) {
    out.middleCols(offset, value(p).cols()) = value(p);
    offset += value(p).cols();
  }
  return push(std::move(out), any, [this, parts](std::size_t self) {
    Index off = 0;
    for (const auto p : parts) {
      const Index w = value(p).cols();
      if (needs(p)) grad_ref(p.id_) += dy(self).middleCols(off, w);
      off += w;
    }
  });
}

Var Graph::gather_rows(Var table, const std::vector<Index>& rows) {
  const auto& T = value(table);
  Matrix out(static_cast<Index>(rows.size()), T.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < T.rows(), "gather_rows: row out of range");
    out.row(static_cast<Index>(i)) = T.row(rows[i]);
  }
  const bool is_param = nodes_[table.id_].external != nullptr;
  return push(std::move(out), needs(table), [this, table, rows, is_param](std::size_t self) {
    const auto& dY = dy(self);
    if (is_param) {
      auto& sparse = sparse_rows_[table.id_];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, inserted] = sparse.try_emplace(rows[i], dY.row(static_cast<Index>(i)));
        if (!inserted) it->second += dY.row(static_cast<Index>(i));
      }
    } else {
      auto& g = grad_ref(table.id_);
      for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += dY.row(static_cast<Index>(i));
    }
  });
}

Var Graph::segment_max(Var a, const std::vector<std::size_t>& lengths) {
  const auto& A = value(a);
  const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  require(total == static_cast<std::size_t>(A.rows()), "segment_max: lengths do not cover rows");
  const Index segments = static_cast<Index>(lengths.size());
  Matrix out(segments, A.cols());
  auto winners = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(segments * A.cols()));
  Index begin = 0;
  for (Index s = 0; s < segments; ++s) {
    const auto len = static_cast<Index>(lengths[static_cast<std::size_t>(s)]);
    require(len > 0, "segment_max: empty segment");
    for (Index c = 0; c < A.cols(); ++c) {
      Index best = begin;
      for (Index r = begin + 1; r < begin + len; ++r) {
        if (A(r, c) > A(best, c)) best = r;
      }
      out(s, c) = A(best, c);
      (*winners)[static_cast<std::size_t>(s * A.cols() + c)] = best;
    }
    begin += len;
  }
  return push(std::move(out), needs(a), [this, a, winners, segments](std::size_t self) {
    const auto& dY = dy(self);
    auto& g = grad_ref(a.id_);
    const Index cols = dY.cols();
    for (Index s = 0; s < segments; ++s) {
      for (Index c = 0; c < cols; ++c) g((*winners)[static_cast<std::size_t>(s * cols + c)], c) += dY(s, c);
    }
  });
}

Var Graph::max_rows(Var a) {
  return segment_max(a, {static_cast<std::size_t>(value(a).rows())});
}

Var Graph::row_max(Var a) {
  const auto& A = value(a);
  require(A.cols() > 0, "row_max: no columns");
  Matrix out(A.rows(), 1);
  auto winners = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(A.rows()));
  for (Index r = 0; r < A.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < A.cols(); ++c) {
      if (A(r, c) > A(r, best)) best = c;
    }
    out(r, 0) = A(r, best);
    (*winners)[static_cast<std::size_t>(r)] = best;
  }
  return push(std::move(out), needs(a), [this, a, winners](std::size_t self) {
    const auto& dY = dy(self);
    auto& g = grad_ref(a.id_);
    for (Index r = 0; r < dY.rows(); ++r) g(r, (*winners)[static_cast<std::size_t>(r)]) += dY(r, 0);
  });
}

Var Graph::softmax_rows(Var a, bool mask_diagonal) {
  const auto& A = value(a);
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  for (Index r = 0; r < A.rows(); ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < A.cols(); ++c) {
      if (mask_diagonal && r == c) continue;
      peak = std::max(peak, A(r, c));
    }
    if (!std::isfinite(peak)) continue;  // every entry masked
    double total = 0.0;
    for (Index c = 0; c < A.cols(); ++c) {
      if (mask_diagonal && r == c) continue;
      out(r, c) = std::exp(A(r, c) - peak);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return push(std::move(out), needs(a), [this, a](std::size_t self) {
    const auto& Y = value(Var(self));
    const auto& dY = dy(self);
    const Eigen::VectorXd inner = dY.cwiseProduct(Y).rowwise().sum();
    grad_ref(a.id_) += (Y.array() * (dY.colwise() - inner).array()).matrix();
  });
}

Var Graph::dropout(Var a, double rate) {
  if (mode_ == Mode::kEval || rate <= 0.0) return a;
  require(rate < 1.0, "dropout: rate must be < 1");
  const auto& A = value(a);
  Matrix mask(1, A.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  for (Index c = 0; c < A.cols(); ++c) mask(0, c) = keep(rng_) ? 1.0 / (1.0 - rate) : 0.0;
  return mul_row(a, constant(std::move(mask)));
}

Var Graph::bigru(Var x, const std::string& prefix) {
  const auto& X = value(x);
  std::vector<Var> inputs{x};
  for (const char* dir : {".fw.", ".bw."}) {
    for (const char* suffix : kGruSuffixes) inputs.push_back(param(prefix + dir + suffix));
  }
  const auto fw = gru_weights(params_, prefix + ".fw");
  const auto bw = gru_weights(params_, prefix + ".bw");
  require(X.cols() == fw.input_size() && X.cols() == bw.input_size(),
          "bigru '" + prefix + "': input width " + std::to_string(X.cols()) + " expected " +
              std::to_string(fw.input_size()));
  require(X.rows() >= 1, "bigru '" + prefix + "': empty sequence");
  const Index n = X.rows();
  const Index h = fw.hidden_size();
  Matrix out(n, 2 * h);
  auto caches = std::make_shared<std::vector<GruStepCache>>(static_cast<std::size_t>(2 * n));
  RowVector state = RowVector::Zero(h);
  for (Index t = 0; t < n; ++t) {
    state = gru_step(X.row(t), state, fw, &(*caches)[static_cast<std::size_t>(t)]);
    out.block(t, 0, 1, h) = state;
  }
  state = RowVector::Zero(h);
  for (Index t = n; t-- > 0;) {
    state = gru_step(X.row(t), state, bw, &(*caches)[static_cast<std::size_t>(n + t)]);
    out.block(t, h, 1, h) = state;
  }
  return push(std::move(out), true, [this, inputs, caches, prefix, n, h](std::size_t self) {
    const auto& dY = dy(self);
    const Var xv = inputs[0];
    Matrix dX = Matrix::Zero(n, value(xv).cols());
    RowVector dx;
    RowVector dh_prev;
    for (int dir = 0; dir < 2; ++dir) {
      const auto base = static_cast<std::size_t>(1 + 9 * dir);
      const GruWeights w{value(inputs[base + 0]), value(inputs[base + 1]), value(inputs[base + 2]),
                         value(inputs[base + 3]), value(inputs[base + 4]), value(inputs[base + 5]),
                         value(inputs[base + 6]), value(inputs[base + 7]), value(inputs[base + 8])};
      GruGradients g{grad_ref(inputs[base + 0].id_), grad_ref(inputs[base + 1].id_),
                     grad_ref(inputs[base + 2].id_), grad_ref(inputs[base + 3].id_),
                     grad_ref(inputs[base + 4].id_), grad_ref(inputs[base + 5].id_),
                     grad_ref(inputs[base + 6].id_), grad_ref(inputs[base + 7].id_),
                     grad_ref(inputs[base + 8].id_)};
      RowVector carry = RowVector::Zero(h);
      const Index col = dir == 0 ? 0 : h;
      // Reverse of the processing order of this direction.
      for (Index k = 0; k < n; ++k) {
        const Index t = dir == 0 ? n - 1 - k : k;
        const auto& cache = (*caches)[static_cast<std::size_t>(dir * n + t)];
        const RowVector dh = dY.block(t, col, 1, h) + carry;
        gru_step_backward(cache, w, dh, g, dx, dh_prev);
        dX.row(t) += dx;
        carry = dh_prev;
      }
    }
    if (needs(xv)) grad_ref(xv.id_) += dX;
  });
}

Var Graph::char_cnn(const std::vector<std::string>& tokens, const std::string& prefix) {
  const Var chars = param(prefix + ".chars");
  const Var filters = param(prefix + ".filters");
  const Var bias = param(prefix + ".bias");
  const auto& table = value(chars);
  const auto& F = value(filters);
  const auto& B = value(bias);
  require(table.rows() == 256, "char_cnn: char table must have 256 rows");
  const Index c = table.cols();
  const Index width = F.rows() / c;
  require(width * c == F.rows(), "char_cnn: filter rows not a multiple of char width");

  struct TokenTrace {
    std::vector<Index> bytes;
    std::vector<Index> argmax;
  };
  auto traces = std::make_shared<std::vector<TokenTrace>>(tokens.size());
  Matrix out(static_cast<Index>(tokens.size()), F.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& token = tokens[i];
    require(!token.empty(), "char_cnn: empty token");
    auto& trace = (*traces)[i];
    Matrix emb(static_cast<Index>(token.size()), c);
    for (std::size_t k = 0; k < token.size(); ++k) {
      const Index byte = static_cast<unsigned char>(token[k]);
      trace.bytes.push_back(byte);
      emb.row(static_cast<Index>(k)) = table.row(byte);
    }
    out.row(static_cast<Index>(i)) = char_cnn_maxpool(emb, F, B, width, &trace.argmax);
  }
  return push(std::move(out), true, [this, chars, filters, bias, traces, c, width](std::size_t self) {
    const auto& dY = dy(self);
    const auto& table_v = value(chars);
    const auto& F_v = value(filters);
    auto& d_chars = grad_ref(chars.id_);
    auto& d_filters = grad_ref(filters.id_);
    auto& d_bias = grad_ref(bias.id_);
    for (std::size_t i = 0; i < traces->size(); ++i) {
      const auto& trace = (*traces)[i];
      const auto len = static_cast<Index>(trace.bytes.size());
      const auto row = static_cast<Index>(i);
      d_bias += dY.row(row);
      for (Index f = 0; f < F_v.cols(); ++f) {
        const double g = dY(row, f);
        if (g == 0.0) continue;
        const Index start = trace.argmax[static_cast<std::size_t>(f)];
        for (Index o = 0; o < width && start + o < len; ++o) {
          const Index byte = trace.bytes[static_cast<std::size_t>(start + o)];
          d_filters.block(o * c, f, c, 1) += g * table_v.row(byte).transpose();
          d_chars.row(byte) += g * F_v.block(o * c, f, c, 1).transpose();
        }
      }
    }
  });
}

}  // namespace muppet::nn
