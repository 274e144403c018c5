#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "muppet/common/error.hpp"
#include "muppet/index/dense_index.hpp"
#include "synthetic.hpp"
#include "test_helpers.hpp"

using namespace muppet;
using namespace muppet::index;
using encoder::SentenceEncodings;
using nn::Matrix;
using nn::RowVector;

namespace {

std::vector<SentenceEncodings> random_encodings(std::size_t n, Index d, std::uint64_t seed, std::size_t max_rows = 5) {
  std::mt19937_64 rng(seed);
  std::vector<SentenceEncodings> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "q%03zu", (i * 37) % 1000);
    out.push_back({id, testing::random_matrix(static_cast<Index>(1 + rng() % max_rows), d, rng)});
  }
  return out;
}

// Exhaustive scan over f32 rows with f64 accumulation.
std::vector<MipsHit> scan(const std::vector<SentenceEncodings>& encs, const RowVector& q, std::size_t k) {
  std::vector<MipsHit> hits;
  for (const auto& e : encs) {
    MipsHit best{e.paragraph_id, 0, -INFINITY};
    for (Index r = 0; r < e.sentences.rows(); ++r) {
      double v = 0;
      for (Index j = 0; j < q.size(); ++j) v += static_cast<double>(static_cast<float>(e.sentences(r, j))) * q(j);
      if (v > best.inner_product) best = {e.paragraph_id, static_cast<std::uint32_t>(r), v};
    }
    hits.push_back(best);
  }
  std::sort(hits.begin(), hits.end(), [](const MipsHit& a, const MipsHit& b) {
    return a.inner_product != b.inner_product ? a.inner_product > b.inner_product : a.paragraph_id < b.paragraph_id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

encoder::EncoderModel small_model(const corpus::KnowledgeSource& ks, std::uint64_t seed) {
  encoder::EncoderConfig cfg;
  cfg.encoding_dim = 6;
  cfg.word_dim = 4;
  cfg.char_dim = 2;
  cfg.char_filters = 3;
  return encoder::EncoderModel::create(cfg, encoder::Vocabulary::build(ks), seed);
}

}  // namespace

TEST_CASE("rows follow paragraphs in id order with contiguous ranges") {
  std::mt19937_64 rng(1);
  std::vector<SentenceEncodings> encs = {{"b", testing::random_matrix(1, 3, rng)},
                                         {"a", testing::random_matrix(2, 3, rng)},
                                         {"c", testing::random_matrix(4, 3, rng)}};
  const auto idx = DenseIndex::from_encodings(encs);
  CHECK(idx.row_count() == 7);
  CHECK(idx.paragraph_count() == 3);
  CHECK(idx.paragraph_ids() == std::vector<std::string>{"a", "b", "c"});
  CHECK(idx.row_range(0) == std::pair<std::size_t, std::size_t>{0, 2});
  CHECK(idx.row_range(1) == std::pair<std::size_t, std::size_t>{2, 3});
  CHECK(idx.row_range(2) == std::pair<std::size_t, std::size_t>{3, 7});
  CHECK(idx.row_sentence(4) == 1);
  CHECK(idx.rows_of("c") == encs[2].sentences.cast<float>().cast<double>());
  CHECK_THROWS_AS(DenseIndex::from_encodings({{"a", Matrix(1, 3)}, {"a", Matrix(1, 3)}}), ValidationError);
}

TEST_CASE("built rows equal paragraph encodings downcast to f32") {
  const auto ks = testing::make_random_corpus(12, 2, 25);
  const auto model = small_model(ks, 3);
  const auto idx = DenseIndex::build(ks, model);
  std::size_t rows = 0;
  for (const auto& p : ks.paragraphs()) {
    const auto enc = encoder::encode_paragraph(model, p);
    CHECK(idx.rows_of(p.id) == enc.sentences.cast<float>().cast<double>());
    rows += p.sentences.size();
  }
  CHECK(idx.row_count() == rows);
  CHECK(DenseIndex::build(ks, model, DenseIndex::Granularity::kSentence, 3) == idx);
}

TEST_CASE("paragraph granularity stores the max-pooled sentence vectors") {
  const auto ks = testing::make_random_corpus(6, 4, 25);
  const auto model = small_model(ks, 5);
  const auto idx = DenseIndex::build(ks, model, DenseIndex::Granularity::kParagraph);
  CHECK(idx.row_count() == 6);
  CHECK(idx.granularity() == DenseIndex::Granularity::kParagraph);
  for (const auto& p : ks.paragraphs()) {
    const Matrix pooled = encoder::encode_paragraph(model, p).sentences.colwise().maxCoeff();
    CHECK(idx.rows_of(p.id) == pooled.cast<float>().cast<double>());
  }
}

TEST_CASE("mips examples") {
  Matrix e1(1, 2), e2(1, 2);
  e1 << 1, 0;
  e2 << 0, 1;
  const auto idx = DenseIndex::from_encodings({{"p1", e1}, {"p2", e2}});
  RowVector q(2);
  q << 0, 1;
  auto hits = idx.mips_top_k(q, 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].paragraph_id == "p2");
  CHECK(hits[0].inner_product == 1.0);
  hits = idx.mips_top_k(q, 10);
  REQUIRE(hits.size() == 2);
  CHECK(hits[1].paragraph_id == "p1");
  // Equal scores fall back to id order.
  q << 1, 1;
  hits = idx.mips_top_k(q, 2);
  CHECK(hits[0].paragraph_id == "p1");
  CHECK(hits[1].paragraph_id == "p2");
  CHECK_THROWS_AS(idx.mips_top_k(RowVector::Zero(3), 1), ShapeError);
}

TEST_CASE("mips equals an exhaustive scan") {
  const auto encs = random_encodings(50, 8, 6);
  const auto idx = DenseIndex::from_encodings(encs);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const RowVector q = testing::random_matrix(1, 8, rng);
    const auto expected = scan(encs, q, 12);
    const auto got = idx.mips_top_k(q, 12);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].paragraph_id == expected[i].paragraph_id);
      CHECK(got[i].sentence_index == expected[i].sentence_index);
      CHECK(got[i].inner_product == expected[i].inner_product);
    }
  }
}

TEST_CASE("candidate restriction equals post-filtering") {
  const auto encs = random_encodings(30, 5, 8);
  const auto idx = DenseIndex::from_encodings(encs);
  std::mt19937_64 rng(9);
  const RowVector q = testing::random_matrix(1, 5, rng);
  std::vector<std::string> candidates;
  for (std::size_t i = 0; i < encs.size(); i += 3) candidates.push_back(encs[i].paragraph_id);
  const auto restricted = idx.mips_top_k(q, 100, &candidates);
  std::vector<MipsHit> filtered;
  for (const auto& h : idx.mips_top_k(q, 100)) {
    if (std::find(candidates.begin(), candidates.end(), h.paragraph_id) != candidates.end()) filtered.push_back(h);
  }
  REQUIRE(restricted.size() == filtered.size());
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    CHECK(restricted[i].paragraph_id == filtered[i].paragraph_id);
    CHECK(restricted[i].inner_product == filtered[i].inner_product);
  }
  const std::vector<std::string> none;
  CHECK(idx.mips_top_k(q, 5, &none).empty());
  const std::vector<std::string> unknown = {"nope"};
  CHECK_THROWS_AS(idx.mips_top_k(q, 5, &unknown), ValidationError);
}

TEST_CASE("queries do not mutate the index") {
  const auto idx = DenseIndex::from_encodings(random_encodings(10, 4, 10));
  const auto copy = idx;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 5; ++i) idx.mips_top_k(testing::random_matrix(1, 4, rng), 3);
  CHECK(idx == copy);
}

TEST_CASE("dense index save and load round trip bit-exactly") {
  const auto dir = testing::scratch_dir("dense_index");
  const auto encs = random_encodings(20, 6, 12);
  for (const auto g : {DenseIndex::Granularity::kSentence, DenseIndex::Granularity::kParagraph}) {
    const auto idx = DenseIndex::from_encodings(encs, g);
    idx.save(dir / "i.bin");
    const auto back = DenseIndex::load(dir / "i.bin");
    CHECK(back == idx);
    CHECK(std::equal(back.data().begin(), back.data().end(), idx.data().begin(),
                     [](float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }));
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
      const RowVector q = testing::random_matrix(1, 6, rng);
      const auto a = idx.mips_top_k(q, 20);
      const auto b = back.mips_top_k(q, 20);
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].paragraph_id == b[i].paragraph_id);
        CHECK(a[i].inner_product == b[i].inner_product);
      }
    }
    back.save(dir / "again.bin");
    CHECK(testing::read_bytes(dir / "i.bin") == testing::read_bytes(dir / "again.bin"));
  }
  const auto bytes = testing::read_bytes(dir / "i.bin");
  CHECK(bytes.substr(0, 4) == "MUPX");
  testing::write_text(dir / "t.bin", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(DenseIndex::load(dir / "t.bin"), IoError);
  CHECK_THROWS_AS(DenseIndex::load(dir / "missing.bin"), IoError);
}

TEST_CASE("rebuilding from the same model and corpus gives a byte-identical file") {
  const auto dir = testing::scratch_dir("dense_rebuild");
  const auto ks = testing::make_random_corpus(10, 14, 20);
  const auto model = small_model(ks, 15);
  DenseIndex::build(ks, model).save(dir / "a.bin");
  DenseIndex::build(ks, model).save(dir / "b.bin");
  CHECK(testing::read_bytes(dir / "a.bin") == testing::read_bytes(dir / "b.bin"));
}
