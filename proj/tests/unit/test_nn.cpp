#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "muppet/common/error.hpp"
#include "muppet/nn/adadelta.hpp"
#include "muppet/nn/char_cnn.hpp"
#include "muppet/nn/grad_check.hpp"
#include "muppet/nn/graph.hpp"
#include "muppet/nn/gru.hpp"
#include "test_helpers.hpp"

using namespace muppet;
using namespace muppet::nn;
using testing::projected_loss;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ParameterStore gru_store(Index in, Index hidden, std::uint64_t seed, const std::string& prefix = "g") {
  ParameterStore s;
  std::mt19937_64 rng(seed);
  add_bigru(s, prefix, in, hidden, rng);
  testing::randomize(s, seed + 1);
  return s;
}

}  // namespace

TEST_CASE("gru_step with zero weights keeps half of the state") {
  ParameterStore s;
  std::mt19937_64 rng(1);
  add_gru_direction(s, "d", 2, 2, rng);
  s.set_zero();
  RowVector h(2);
  h << 2, 4;
  const RowVector out = gru_step(RowVector::Zero(2), h, gru_weights(s, "d"));
  CHECK(out(0) == doctest::Approx(1.0));
  CHECK(out(1) == doctest::Approx(2.0));
}

TEST_CASE("gru_step maps zero input and state to zero when biases are zero") {
  auto s = gru_store(3, 3, 5);
  for (auto& [name, m] : s.entries()) {
    if (name.find(".b") != std::string::npos) m.setZero();
  }
  const RowVector out = gru_step(RowVector::Zero(3), RowVector::Zero(3), gru_weights(s, "g.fw"));
  CHECK(out.norm() == 0.0);
}

TEST_CASE("gru_step matches a scalar-by-scalar evaluation") {
  auto s = gru_store(3, 3, 7);
  const auto w = gru_weights(s, "g.fw");
  std::mt19937_64 rng(3);
  const RowVector x = testing::random_matrix(1, 3, rng).row(0);
  const RowVector h = testing::random_matrix(1, 3, rng).row(0);
  const RowVector out = gru_step(x, h, w);
  for (Index k = 0; k < 3; ++k) {
    double az = w.bz(0, k);
    for (Index i = 0; i < 3; ++i) az += x(i) * w.Wz(i, k) + h(i) * w.Uz(i, k);
    double ac = w.bh(0, k);
    for (Index i = 0; i < 3; ++i) {
      double r_i = w.br(0, i);
      for (Index j = 0; j < 3; ++j) r_i += x(j) * w.Wr(j, i) + h(j) * w.Ur(j, i);
      ac += x(i) * w.Wh(i, k) + sig(r_i) * h(i) * w.Uh(i, k);
    }
    const double z = sig(az);
    const double expected = (1 - z) * h(k) + z * std::tanh(ac);
    CHECK(out(k) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("gru_step rejects mismatched shapes") {
  auto s = gru_store(3, 2, 1);
  CHECK_THROWS_AS(gru_step(RowVector::Zero(4), RowVector::Zero(2), gru_weights(s, "g.fw")), ShapeError);
}

TEST_CASE("bigru on a single step runs both directions from the same input") {
  auto s = gru_store(2, 3, 11);
  Graph g(s);
  Matrix x(1, 2);
  x << 0.3, -0.7;
  const Matrix out = g.value(g.bigru(g.constant(x), "g"));
  REQUIRE(out.rows() == 1);
  REQUIRE(out.cols() == 6);
  const RowVector fw = gru_step(x.row(0), RowVector::Zero(3), gru_weights(s, "g.fw"));
  const RowVector bw = gru_step(x.row(0), RowVector::Zero(3), gru_weights(s, "g.bw"));
  CHECK((out.block(0, 0, 1, 3) - fw).norm() < 1e-15);
  CHECK((out.block(0, 3, 1, 3) - bw).norm() < 1e-15);
}

TEST_CASE("bigru on a reversed input reverses rows and swaps direction halves") {
  auto s = gru_store(3, 2, 13);
  // Same weights in both directions so the halves are comparable.
  for (const char* suffix : kGruSuffixes) s.at(std::string("g.bw.") + suffix) = s.at(std::string("g.fw.") + suffix);
  std::mt19937_64 rng(4);
  const Matrix x = testing::random_matrix(5, 3, rng);
  const Matrix reversed = x.colwise().reverse();
  Graph g(s);
  const Matrix a = g.value(g.bigru(g.constant(x), "g"));
  const Matrix b = g.value(g.bigru(g.constant(reversed), "g"));
  for (Index t = 0; t < 5; ++t) {
    CHECK((a.block(t, 0, 1, 2) - b.block(4 - t, 2, 1, 2)).norm() < 1e-14);
    CHECK((a.block(t, 2, 1, 2) - b.block(4 - t, 0, 1, 2)).norm() < 1e-14);
  }
}

TEST_CASE("bigru with zero weights outputs zero from a zero state") {
  auto s = gru_store(2, 2, 3);
  s.set_zero();
  Graph g(s);
  std::mt19937_64 rng(2);
  const Matrix out = g.value(g.bigru(g.constant(testing::random_matrix(4, 2, rng)), "g"));
  CHECK(out.norm() == 0.0);
}

TEST_CASE("char_cnn_maxpool with an all-ones filter counts the best window") {
  // Token "abacab" with one-hot embeddings over {a, b, c}; the filter sums
  // window entries of column a, so the result is the max count of 'a' in a
  // width-5 window: "abaca" -> 3, "bacab" -> 2.
  const std::string token = "abacab";
  Matrix emb = Matrix::Zero(6, 3);
  for (Index i = 0; i < 6; ++i) emb(i, token[static_cast<std::size_t>(i)] - 'a') = 1.0;
  Matrix filters = Matrix::Zero(15, 1);
  for (Index o = 0; o < 5; ++o) filters(o * 3, 0) = 1.0;
  std::vector<Index> argmax;
  const RowVector out = char_cnn_maxpool(emb, filters, Matrix::Zero(1, 1), 5, &argmax);
  CHECK(out(0) == doctest::Approx(3.0));
  CHECK(argmax[0] == 0);

  Matrix all_ones = Matrix::Ones(15, 1);
  CHECK(char_cnn_maxpool(emb, all_ones, Matrix::Zero(1, 1))(0) == doctest::Approx(5.0));
}

TEST_CASE("char_cnn_maxpool with a zero filter is zero") {
  std::mt19937_64 rng(1);
  const auto emb = testing::random_matrix(7, 4, rng);
  CHECK(char_cnn_maxpool(emb, Matrix::Zero(20, 3), Matrix::Zero(1, 3)).norm() == 0.0);
}

TEST_CASE("char_cnn_maxpool pads a one-character token to a single window") {
  std::mt19937_64 rng(8);
  const auto emb = testing::random_matrix(1, 4, rng);
  const auto filters = testing::random_matrix(20, 3, rng);
  const auto bias = testing::random_matrix(1, 3, rng);
  const RowVector out = char_cnn_maxpool(emb, filters, bias);
  const RowVector expected = emb.row(0) * filters.topRows(4) + bias;
  CHECK((out - expected).norm() < 1e-14);
}

TEST_CASE("adadelta first step from a fresh state") {
  ParameterStore p;
  p.add_zero("x", 1, 1);
  ParameterStore g = p.zeros_like();
  g.at("x")(0, 0) = 1.0;
  OptimizerState opt(p, AdadeltaConfig{});
  opt.step(p, g);
  const double expected = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
  CHECK(p.at("x")(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p.at("x")(0, 0) == doctest::Approx(-0.004472).epsilon(1e-3));
  CHECK(opt.mean_sq_grad().at("x")(0, 0) == doctest::Approx(0.05));
}

TEST_CASE("adadelta with zero gradient leaves parameters and decays accumulators") {
  ParameterStore p;
  p.add_zero("x", 1, 2);
  p.at("x") << 0.5, -1.5;
  ParameterStore g = p.zeros_like();
  g.at("x") << 1.0, 2.0;
  OptimizerState opt(p, AdadeltaConfig{});
  opt.step(p, g);
  const Matrix after_first = p.at("x");
  const Matrix eg = opt.mean_sq_grad().at("x");
  const Matrix ed = opt.mean_sq_delta().at("x");
  opt.step(p, p.zeros_like());
  CHECK(p.at("x") == after_first);
  CHECK((opt.mean_sq_grad().at("x") - 0.95 * eg).norm() < 1e-15);
  CHECK((opt.mean_sq_delta().at("x") - 0.95 * ed).norm() < 1e-15);
}

TEST_CASE("adadelta two steps decrease a quadratic") {
  ParameterStore p;
  p.add_zero("x", 1, 1);
  p.at("x")(0, 0) = 3.0;
  OptimizerState opt(p, AdadeltaConfig{});
  auto loss = [&] { return 0.5 * p.at("x")(0, 0) * p.at("x")(0, 0); };
  const double l0 = loss();
  for (int i = 0; i < 2; ++i) {
    ParameterStore g = p.zeros_like();
    g.at("x")(0, 0) = p.at("x")(0, 0);
    opt.step(p, g);
  }
  CHECK(loss() < l0);
}

TEST_CASE("adadelta rejects non-finite gradients without updating") {
  ParameterStore p;
  p.add_zero("x", 1, 1);
  ParameterStore g = p.zeros_like();
  g.at("x")(0, 0) = std::nan("");
  OptimizerState opt(p, AdadeltaConfig{});
  CHECK_THROWS_AS(opt.step(p, g), NumericError);
  CHECK(p.at("x")(0, 0) == 0.0);
  CHECK(opt.mean_sq_grad().at("x")(0, 0) == 0.0);
}

TEST_CASE("grad_check on a quadratic and a constant") {
  ParameterStore p;
  p.add_zero("w", 3, 4);
  testing::randomize(p, 5);
  const LossFn quadratic = [](const ParameterStore& s, ParameterStore* g) {
    if (g != nullptr) g->at("w") += s.at("w");
    return 0.5 * s.at("w").squaredNorm();
  };
  const auto report = grad_check(quadratic, p, 1e-6);
  CHECK(report.passed);
  CHECK(report.max_relative_error < 1e-6);
  CHECK(report.coordinates_checked == 12);

  const LossFn constant = [](const ParameterStore&, ParameterStore*) { return 4.0; };
  const auto flat = grad_check(constant, p, 1e-6);
  CHECK(flat.passed);
  CHECK(flat.worst_analytic == 0.0);
  CHECK(flat.worst_numeric == 0.0);
}

TEST_CASE("graph layers pass finite-difference checks") {
  std::mt19937_64 rng(21);
  ParameterStore p;
  p.add("a", 4, 3, Init::kGlorot, rng);
  p.add("b", 3, 5, Init::kGlorot, rng);
  p.add("c", 4, 5, Init::kGlorot, rng);
  p.add("row", 1, 5, Init::kGlorot, rng);
  p.add("col", 4, 1, Init::kGlorot, rng);
  p.add("s", 1, 1, Init::kGlorot, rng);
  p.add("table", 6, 3, Init::kGlorot, rng);
  testing::randomize(p, 22, 1.0);

  const std::vector<std::pair<std::string, std::function<Var(Graph&)>>> cases = {
      {"matmul", [](Graph& g) { return g.matmul(g.param("a"), g.param("b")); }},
      {"matmul_nt", [](Graph& g) { return g.matmul_nt(g.param("a"), g.transpose(g.param("b"))); }},
      {"add_row_col_scalar",
       [](Graph& g) {
         return g.add_scalar(g.add_col(g.add_row(g.param("c"), g.param("row")), g.param("col")), g.param("s"));
       }},
      {"mul_and_scale",
       [](Graph& g) {
         return g.scale_by(g.mul_row(g.mul(g.param("c"), g.param("c")), g.param("row")), g.param("s"));
       }},
      {"nonlinearities",
       [](Graph& g) {
         const auto x = g.matmul(g.param("a"), g.param("b"));
         return g.concat_cols({g.sigmoid(x), g.tanh(x), g.relu(x), g.scale(x, -0.5)});
       }},
      {"gather_rows", [](Graph& g) { return g.gather_rows(g.param("table"), {0, 2, 2, 5}); }},
      {"pools",
       [](Graph& g) {
         const auto x = g.matmul(g.param("table"), g.param("b"));
         return g.concat_cols({g.transpose(g.segment_max(x, {2, 3, 1})), g.transpose(g.max_rows(x)),
                               g.transpose(g.transpose(g.row_max(g.transpose(x))))});
       }},
      {"softmax", [](Graph& g) { return g.softmax_rows(g.param("c")); }},
      {"masked_softmax", [](Graph& g) { return g.softmax_rows(g.matmul_nt(g.param("c"), g.param("c")), true); }},
      {"sum", [](Graph& g) { return g.sum(g.param("c")); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    const auto report = grad_check(projected_loss(build), p, 1e-3, 7);
    CHECK(report.max_relative_error < 1e-3);
  }
}

TEST_CASE("fused bigru and char-cnn pass finite-difference checks") {
  auto p = gru_store(4, 3, 31);
  std::mt19937_64 rng(32);
  p.add("x", 5, 4, Init::kGlorot, rng);
  p.add("cnn.chars", 256, 3, Init::kGlorot, rng);
  p.add("cnn.filters", 15, 4, Init::kGlorot, rng);
  p.add("cnn.bias", 1, 4, Init::kGlorot, rng);
  testing::randomize(p, 33, 0.8);
  const auto gru = grad_check(projected_loss([](Graph& g) { return g.bigru(g.param("x"), "g"); }), p, 1e-3, 1);
  CHECK(gru.max_relative_error < 1e-3);
  const auto cnn = grad_check(
      projected_loss([](Graph& g) { return g.char_cnn({"muppet", "hop", "x", "retrieval"}, "cnn"); }), p, 1e-3, 2);
  CHECK(cnn.max_relative_error < 1e-3);
  const auto dropped = grad_check(
      projected_loss([](Graph& g) { return g.bigru(g.dropout(g.param("x"), 0.3), "g"); }, Mode::kTrain, 5), p, 1e-3, 3);
  CHECK(dropped.max_relative_error < 1e-3);
}

TEST_CASE("masked self-attention row of a single token is zero with no gradient path") {
  ParameterStore p;
  p.add_zero("x", 1, 3);
  p.at("x") << 0.2, -0.1, 0.4;
  Graph g(p);
  const auto x = g.param("x");
  const auto alpha = g.softmax_rows(g.matmul_nt(x, x), true);
  const auto out = g.matmul(alpha, x);
  CHECK(g.value(alpha)(0, 0) == 0.0);
  CHECK(g.value(out).norm() == 0.0);
}

TEST_CASE("dropout masks columns uniformly over rows and vanishes in eval mode") {
  ParameterStore p;
  p.add_zero("x", 6, 8);
  p.at("x").setOnes();
  Graph train(p, Mode::kTrain, 17);
  const Matrix dropped = train.value(train.dropout(train.param("x"), 0.5));
  for (Index c = 0; c < 8; ++c) {
    for (Index r = 1; r < 6; ++r) CHECK(dropped(r, c) == dropped(0, c));
    CHECK((dropped(0, c) == 0.0 || dropped(0, c) == 2.0));
  }
  Graph eval_a(p, Mode::kEval, 1);
  Graph eval_b(p, Mode::kEval, 2);
  CHECK(eval_a.value(eval_a.dropout(eval_a.param("x"), 0.5)) == eval_b.value(eval_b.dropout(eval_b.param("x"), 0.5)));
  Graph again(p, Mode::kTrain, 17);
  CHECK(again.value(again.dropout(again.param("x"), 0.5)) == dropped);
}

TEST_CASE("parameter store round-trips through the checkpoint format") {
  const auto p = gru_store(3, 2, 41);
  const auto path = std::filesystem::temp_directory_path() / "muppet_params_roundtrip.bin";
  p.save(path);
  const auto loaded = ParameterStore::load(path);
  REQUIRE(loaded.same_shapes(p));
  for (const auto& [name, m] : p.entries()) {
    CHECK((loaded.at(name) - m.cast<float>().cast<double>()).norm() == 0.0);
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(ParameterStore::load(path), IoError);
  std::filesystem::remove(path);
}
