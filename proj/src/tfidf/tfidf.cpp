#include "muppet/tfidf/tfidf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "muppet/common/binary_io.hpp"
#include "muppet/common/error.hpp"

namespace muppet::tfidf {

namespace {

constexpr char kMagic[] = "MTFX";
constexpr std::uint32_t kVersion = 1;

std::map<std::uint32_t, std::uint32_t> count_features(const corpus::Tokens& tokens) {
  std::map<std::uint32_t, std::uint32_t> counts;
  for (const auto bin : hashed_features(tokens)) ++counts[bin];
  return counts;
}

// Sort order for hits: score descending, then smaller index (= smaller id).
std::vector<Hit> select_top(const std::vector<std::string>& ids, const std::vector<double>& scores,
                            std::vector<std::uint32_t> pool, std::size_t n) {
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  n = std::min(n, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(), better);
  std::vector<Hit> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) hits.push_back({ids[pool[i]], scores[pool[i]]});
  return hits;
}

}  // namespace

std::uint32_t hash_feature(std::string_view feature) {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : feature) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return static_cast<std::uint32_t>(h % kNumBins);
}

std::vector<std::uint32_t> hashed_features(const corpus::Tokens& tokens) {
  std::vector<std::uint32_t> out;
  out.reserve(tokens.size() * 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back(hash_feature(tokens[i].normalized));
    if (i + 1 < tokens.size()) {
      out.push_back(hash_feature(tokens[i].normalized + " " + tokens[i + 1].normalized));
    }
  }
  return out;
}

TfidfIndex::TfidfIndex(std::vector<std::string> ids, std::vector<SparseVector> rows)
    : ids_(std::move(ids)), rows_(std::move(rows)) {
  for (std::uint32_t doc = 0; doc < rows_.size(); ++doc) {
    for (const auto& e : rows_[doc]) {
      ++doc_freq_[e.bin];
      if (e.weight > 0.0f) postings_[e.bin].emplace_back(doc, e.weight);
    }
  }
}

TfidfIndex TfidfIndex::build(const corpus::KnowledgeSource& ks) {
  std::vector<Document> docs;
  docs.reserve(ks.size());
  for (const auto& p : ks.paragraphs()) docs.push_back({p.id, p.tokens()});
  return build(std::move(docs));
}

TfidfIndex TfidfIndex::build(std::vector<Document> documents) {
  if (documents.empty()) throw ValidationError("cannot build tf-idf index over no documents");
  std::sort(documents.begin(), documents.end(),
            [](const Document& a, const Document& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < documents.size(); ++i) {
    if (documents[i].id == documents[i - 1].id) {
      throw ValidationError("duplicate document id '" + documents[i].id + "'");
    }
  }

  std::vector<std::map<std::uint32_t, std::uint32_t>> counts;
  counts.reserve(documents.size());
  std::unordered_map<std::uint32_t, std::uint32_t> df;
  for (const auto& d : documents) {
    counts.push_back(count_features(d.tokens));
    for (const auto& [bin, _] : counts.back()) ++df[bin];
  }

  const double n = static_cast<double>(documents.size());
  std::vector<std::string> ids;
  std::vector<SparseVector> rows;
  ids.reserve(documents.size());
  rows.reserve(documents.size());
  for (std::size_t i = 0; i < documents.size(); ++i) {
    SparseVector row;
    row.reserve(counts[i].size());
    for (const auto& [bin, tf] : counts[i]) {
      const double d = df[bin];
      const double idf = std::max(0.0, std::log((n - d + 0.5) / (d + 0.5)));
      row.push_back({bin, static_cast<float>(tf * idf)});
    }
    ids.push_back(std::move(documents[i].id));
    rows.push_back(std::move(row));
  }
  return TfidfIndex(std::move(ids), std::move(rows));
}

std::uint32_t TfidfIndex::doc_freq(std::uint32_t bin) const {
  const auto it = doc_freq_.find(bin);
  return it == doc_freq_.end() ? 0 : it->second;
}

double TfidfIndex::idf(std::uint32_t bin) const {
  const double n = static_cast<double>(doc_count());
  const double d = doc_freq(bin);
  return std::max(0.0, std::log((n - d + 0.5) / (d + 0.5)));
}

SparseVector TfidfIndex::query_vector(const corpus::Tokens& query) const {
  SparseVector out;
  for (const auto& [bin, count] : count_features(query)) {
    out.push_back({bin, static_cast<float>(count)});
  }
  return out;
}

double TfidfIndex::score(const SparseVector& query, std::size_t doc) const {
  const auto& row = rows_.at(doc);
  double total = 0.0;
  auto a = query.begin();
  auto b = row.begin();
  while (a != query.end() && b != row.end()) {
    if (a->bin < b->bin) {
      ++a;
    } else if (b->bin < a->bin) {
      ++b;
    } else {
      total += static_cast<double>(a->weight) * static_cast<double>(b->weight);
      ++a;
      ++b;
    }
  }
  return total;
}

std::vector<double> TfidfIndex::score_all(const SparseVector& query) const {
  std::vector<double> scores(doc_count(), 0.0);
  for (const auto& q : query) {
    const auto it = postings_.find(q.bin);
    if (it == postings_.end()) continue;
    for (const auto& [doc, weight] : it->second) {
      scores[doc] += static_cast<double>(q.weight) * static_cast<double>(weight);
    }
  }
  return scores;
}

std::vector<Hit> TfidfIndex::top_n(const corpus::Tokens& query, std::size_t n) const {
  if (n == 0) throw ValidationError("tfidf_top_n requires n >= 1");
  const auto scores = score_all(query_vector(query));
  std::vector<std::uint32_t> pool(doc_count());
  std::iota(pool.begin(), pool.end(), 0u);
  return select_top(ids_, scores, std::move(pool), n);
}

std::vector<Hit> TfidfIndex::top_n(const corpus::Tokens& query, std::size_t n,
                                   const std::vector<std::string>& candidates) const {
  if (n == 0) throw ValidationError("tfidf_top_n requires n >= 1");
  const auto q = query_vector(query);
  std::vector<double> scores(doc_count(), 0.0);
  std::vector<std::uint32_t> pool;
  std::vector<char> seen(doc_count(), 0);
  for (const auto& id : candidates) {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) continue;
    const auto doc = static_cast<std::uint32_t>(it - ids_.begin());
    if (seen[doc]) continue;
    seen[doc] = 1;
    scores[doc] = score(q, doc);
    pool.push_back(doc);
  }
  return select_top(ids_, scores, std::move(pool), n);
}

void TfidfIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tf-idf index " + path.string());
  binary::write_magic(out, kMagic);
  binary::write_le<std::uint32_t>(out, kVersion);
  binary::write_le<std::uint64_t>(out, doc_count());
  for (std::size_t i = 0; i < doc_count(); ++i) {
    binary::write_string(out, ids_[i]);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows_[i].size()));
    for (const auto& e : rows_[i]) {
      binary::write_le<std::uint32_t>(out, e.bin);
      binary::write_le<float>(out, e.weight);
    }
  }
  if (!out) throw IoError("failed writing tf-idf index " + path.string());
}

TfidfIndex TfidfIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tf-idf index " + path.string());
  binary::expect_magic(in, kMagic);
  const auto version = binary::read_le<std::uint32_t>(in, "version");
  if (version != kVersion) throw IoError("unsupported tf-idf index version " + std::to_string(version));
  const auto count = binary::read_le<std::uint64_t>(in, "doc count");
  std::vector<std::string> ids;
  std::vector<SparseVector> rows;
  for (std::uint64_t i = 0; i < count; ++i) {
    ids.push_back(binary::read_string(in, "document id"));
    const auto nnz = binary::read_le<std::uint32_t>(in, "entry count");
    SparseVector row;
    row.reserve(nnz);
    for (std::uint32_t k = 0; k < nnz; ++k) {
      const auto bin = binary::read_le<std::uint32_t>(in, "bin");
      const auto weight = binary::read_le<float>(in, "weight");
      if (bin >= kNumBins) throw IoError("tf-idf bin out of range");
      row.push_back({bin, weight});
    }
    rows.push_back(std::move(row));
  }
  return TfidfIndex(std::move(ids), std::move(rows));
}

DocumentRetriever::DocumentRetriever(const corpus::KnowledgeSource& ks,
                                     const TfidfIndex& paragraph_index, std::size_t max_documents)
    : ks_(ks),
      paragraphs_(paragraph_index),
      documents_([&] {
        std::vector<TfidfIndex::Document> docs;
        for (const auto& doc : ks.document_order()) {
          corpus::Tokens tokens;
          for (const auto& pid : ks.document_paragraphs(doc)) {
            const auto t = ks.at(pid).tokens();
            tokens.insert(tokens.end(), t.begin(), t.end());
          }
          docs.push_back({doc, std::move(tokens)});
        }
        return TfidfIndex::build(std::move(docs));
      }()),
      max_documents_(std::max<std::size_t>(1, max_documents)) {}

std::vector<Hit> DocumentRetriever::retrieve(const corpus::Tokens& query, std::size_t n) const {
  const auto docs = documents_.top_n(query, max_documents_);
  std::vector<std::string> pool;
  for (const auto& d : docs) {
    const auto& pids = ks_.document_paragraphs(d.paragraph_id);
    pool.insert(pool.end(), pids.begin(), pids.end());
  }
  return paragraphs_.top_n(query, n, pool);
}

}  // namespace muppet::tfidf
