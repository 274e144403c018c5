#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "muppet/corpus/corpus.hpp"
#include "muppet/encoder/encoder.hpp"

namespace muppet::index {

using nn::Index;

struct MipsHit {
  std::string paragraph_id;
  std::uint32_t sentence_index = 0;  // best-scoring row within the paragraph
  double inner_product = 0.0;
};

// Sentence encodings of a whole corpus, stored as f32 rows. Paragraphs are
// kept in id order and own consecutive row ranges.
class DenseIndex {
 public:
  enum class Granularity : std::uint32_t { kSentence = 0, kParagraph = 1 };

  DenseIndex() = default;

  // Encodes every paragraph once. Paragraph granularity stores one vector per
  // paragraph: the elementwise max of its sentence encodings.
  static DenseIndex build(const corpus::KnowledgeSource& ks, const encoder::EncoderModel& model,
                          Granularity granularity = Granularity::kSentence, std::size_t threads = 1);
  // Direct construction from per-paragraph encodings (sorted by id here).
  static DenseIndex from_encodings(std::vector<encoder::SentenceEncodings> encodings,
                                   Granularity granularity = Granularity::kSentence);

  Granularity granularity() const { return granularity_; }
  Index dim() const { return dim_; }
  std::size_t row_count() const { return row_paragraph_.size(); }
  std::size_t paragraph_count() const { return ids_.size(); }
  const std::vector<std::string>& paragraph_ids() const { return ids_; }
  bool contains(const std::string& id) const;

  // Rows of one paragraph, widened to f64.
  nn::Matrix rows_of(const std::string& id) const;
  // [begin, end) rows of paragraph at position `p`.
  std::pair<std::size_t, std::size_t> row_range(std::size_t p) const {
    return {row_start_[p], row_start_[p] + row_count_[p]};
  }
  std::uint32_t row_sentence(std::size_t row) const { return row_sentence_[row]; }
  const std::vector<float>& data() const { return data_; }

  // Exact top-k by max over each paragraph's rows of row . q; ties broken by
  // smaller id. With `candidates`, only those paragraphs are considered
  // (unknown ids rejected); an empty candidate list yields no hits.
  std::vector<MipsHit> mips_top_k(const nn::RowVector& q, std::size_t k,
                                  const std::vector<std::string>* candidates = nullptr) const;

  // "MUPX", version u32, d u32, row count u64, paragraph count u64, f32 rows,
  // granularity u32, per paragraph (id, row start u64, row count u32), per
  // row sentence index u32. Little-endian.
  void save(const std::filesystem::path& path) const;
  static DenseIndex load(const std::filesystem::path& path);

  bool operator==(const DenseIndex& other) const = default;

 private:
  double paragraph_score(std::size_t p, const nn::RowVector& q, std::uint32_t* best) const;

  Granularity granularity_ = Granularity::kSentence;
  Index dim_ = 0;
  std::vector<float> data_;  // row-major, row_count x dim
  std::vector<std::string> ids_;
  std::vector<std::uint64_t> row_start_;
  std::vector<std::uint32_t> row_count_;
  std::vector<std::uint32_t> row_paragraph_;
  std::vector<std::uint32_t> row_sentence_;
};

}  // namespace muppet::index
