#include "muppet/nn/gru.hpp"

#include "muppet/common/error.hpp"

namespace muppet::nn {

namespace {

RowVector sigmoid(const RowVector& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

void expect_shape(const Matrix& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string("gru: ") + what + " has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

}  // namespace

void GruWeights::validate() const {
  const Index in = input_size();
  const Index h = hidden_size();
  expect_shape(Wz, in, h, "Wz");
  expect_shape(Wr, in, h, "Wr");
  expect_shape(Wh, in, h, "Wh");
  expect_shape(Uz, h, h, "Uz");
  expect_shape(Ur, h, h, "Ur");
  expect_shape(Uh, h, h, "Uh");
  expect_shape(bz, 1, h, "bz");
  expect_shape(br, 1, h, "br");
  expect_shape(bh, 1, h, "bh");
}

GruWeights gru_weights(const ParameterStore& s, const std::string& p) {
  GruWeights w{s.at(p + ".Wz"), s.at(p + ".Uz"), s.at(p + ".bz"), s.at(p + ".Wr"), s.at(p + ".Ur"),
               s.at(p + ".br"), s.at(p + ".Wh"), s.at(p + ".Uh"), s.at(p + ".bh")};
  w.validate();
  return w;
}

GruGradients gru_gradients(ParameterStore& s, const std::string& p) {
  return {s.at(p + ".Wz"), s.at(p + ".Uz"), s.at(p + ".bz"), s.at(p + ".Wr"), s.at(p + ".Ur"),
          s.at(p + ".br"), s.at(p + ".Wh"), s.at(p + ".Uh"), s.at(p + ".bh")};
}

void add_gru_direction(ParameterStore& store, const std::string& prefix, Index input, Index hidden,
                       std::mt19937_64& rng) {
  for (const char* gate : {"z", "r", "h"}) {
    store.add(prefix + ".W" + gate, input, hidden, Init::kGlorot, rng);
    store.add(prefix + ".U" + gate, hidden, hidden, Init::kGlorot, rng);
    store.add_zero(prefix + ".b" + gate, 1, hidden);
  }
}

void add_bigru(ParameterStore& store, const std::string& prefix, Index input, Index hidden,
               std::mt19937_64& rng) {
  add_gru_direction(store, prefix + ".fw", input, hidden, rng);
  add_gru_direction(store, prefix + ".bw", input, hidden, rng);
}

RowVector gru_step(const RowVector& x, const RowVector& h, const GruWeights& w, GruStepCache* cache) {
  if (x.size() != w.input_size() || h.size() != w.hidden_size()) {
    throw ShapeError("gru_step: input " + std::to_string(x.size()) + " / hidden " +
                     std::to_string(h.size()) + " do not match weights " +
                     std::to_string(w.input_size()) + " / " + std::to_string(w.hidden_size()));
  }
  const RowVector z = sigmoid(x * w.Wz + h * w.Uz + w.bz);
  const RowVector r = sigmoid(x * w.Wr + h * w.Ur + w.br);
  const RowVector rh = r.cwiseProduct(h);
  const RowVector c = (x * w.Wh + rh * w.Uh + w.bh).array().tanh().matrix();
  RowVector out = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(c);
  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h;
    cache->z = z;
    cache->r = r;
    cache->c = c;
  }
  return out;
}

void gru_step_backward(const GruStepCache& cache, const GruWeights& w, const RowVector& dh_out,
                       GruGradients& g, RowVector& dx, RowVector& dh_prev) {
  const auto& x = cache.x;
  const auto& h = cache.h_prev;
  const auto& z = cache.z;
  const auto& r = cache.r;
  const auto& c = cache.c;

  const RowVector dz = dh_out.cwiseProduct(c - h);
  const RowVector dc = dh_out.cwiseProduct(z);
  dh_prev = dh_out.cwiseProduct((1.0 - z.array()).matrix());

  const RowVector dac = dc.cwiseProduct((1.0 - c.array().square()).matrix());
  const RowVector rh = r.cwiseProduct(h);
  g.Wh.noalias() += x.transpose() * dac;
  g.Uh.noalias() += rh.transpose() * dac;
  g.bh += dac;
  dx = dac * w.Wh.transpose();
  const RowVector drh = dac * w.Uh.transpose();
  const RowVector dr = drh.cwiseProduct(h);
  dh_prev += drh.cwiseProduct(r);

  const RowVector daz = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
  g.Wz.noalias() += x.transpose() * daz;
  g.Uz.noalias() += h.transpose() * daz;
  g.bz += daz;
  dx.noalias() += daz * w.Wz.transpose();
  dh_prev.noalias() += daz * w.Uz.transpose();

  const RowVector dar = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
  g.Wr.noalias() += x.transpose() * dar;
  g.Ur.noalias() += h.transpose() * dar;
  g.br += dar;
  dx.noalias() += dar * w.Wr.transpose();
  dh_prev.noalias() += dar * w.Ur.transpose();
}

}  // namespace muppet::nn
