#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "muppet/corpus/corpus.hpp"

namespace muppet::tfidf {

inline constexpr std::uint32_t kNumBins = 1u << 24;

// 64-bit FNV-1a of the feature string, reduced mod 2^24.
std::uint32_t hash_feature(std::string_view feature);

// Hashed unigrams and bigrams of the normalized tokens (with multiplicity).
// A bigram is hashed as "left right".
std::vector<std::uint32_t> hashed_features(const corpus::Tokens& tokens);

struct SparseEntry {
  std::uint32_t bin = 0;
  float weight = 0.0f;
  bool operator==(const SparseEntry&) const = default;
};

// Sorted by bin, bins unique.
using SparseVector = std::vector<SparseEntry>;

struct Hit {
  std::string paragraph_id;
  double score = 0.0;
};

// Anything that can narrow the dense search space for a query.
class CandidateRetriever {
 public:
  virtual ~CandidateRetriever() = default;
  virtual std::vector<Hit> retrieve(const corpus::Tokens& query, std::size_t n) const = 0;
};

// Bigram-hashing TF-IDF index. Document weights are raw count times
// idf = max(0, log((N - df + 0.5) / (df + 0.5))); a query vector holds raw
// feature counts and scores are sparse dot products.
class TfidfIndex : public CandidateRetriever {
 public:
  struct Document {
    std::string id;
    corpus::Tokens tokens;
  };

  static TfidfIndex build(const corpus::KnowledgeSource& ks);
  static TfidfIndex build(std::vector<Document> documents);

  std::size_t doc_count() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const SparseVector& doc_vector(std::size_t doc) const { return rows_[doc]; }
  std::uint32_t doc_freq(std::uint32_t bin) const;
  double idf(std::uint32_t bin) const;

  SparseVector query_vector(const corpus::Tokens& query) const;
  double score(const SparseVector& query, std::size_t doc) const;

  // Top-n by score; ties broken by smaller id. Returns everything when
  // n exceeds the corpus size.
  std::vector<Hit> top_n(const corpus::Tokens& query, std::size_t n) const;
  // Same ranking restricted to `candidates` (unknown ids are ignored).
  std::vector<Hit> top_n(const corpus::Tokens& query, std::size_t n,
                         const std::vector<std::string>& candidates) const;

  std::vector<Hit> retrieve(const corpus::Tokens& query, std::size_t n) const override {
    return top_n(query, n);
  }

  // "MTFX", version u32, doc_count u64, then per doc: id (u32 length +
  // bytes), entry count u32, entries (bin u32, weight f32). Little-endian.
  void save(const std::filesystem::path& path) const;
  static TfidfIndex load(const std::filesystem::path& path);

  bool operator==(const TfidfIndex& other) const {
    return ids_ == other.ids_ && rows_ == other.rows_;
  }

 private:
  TfidfIndex(std::vector<std::string> ids, std::vector<SparseVector> rows);
  std::vector<double> score_all(const SparseVector& query) const;

  std::vector<std::string> ids_;  // sorted
  std::vector<SparseVector> rows_;
  std::unordered_map<std::uint32_t, std::uint32_t> doc_freq_;
  std::unordered_map<std::uint32_t, std::vector<std::pair<std::uint32_t, float>>> postings_;
};

// Document-level retrieval followed by paragraph expansion, for corpora whose
// documents hold several paragraphs: documents are ranked first, their
// paragraphs pooled in document rank order (up to `max_documents`), and the
// pool is ranked by paragraph-level tf-idf.
class DocumentRetriever : public CandidateRetriever {
 public:
  DocumentRetriever(const corpus::KnowledgeSource& ks, const TfidfIndex& paragraph_index,
                    std::size_t max_documents);

  std::vector<Hit> retrieve(const corpus::Tokens& query, std::size_t n) const override;
  const TfidfIndex& document_index() const { return documents_; }

 private:
  const corpus::KnowledgeSource& ks_;
  const TfidfIndex& paragraphs_;
  TfidfIndex documents_;
  std::size_t max_documents_;
};

}  // namespace muppet::tfidf
