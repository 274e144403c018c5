#include "muppet/index/dense_index.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "muppet/common/binary_io.hpp"
#include "muppet/common/error.hpp"
#include "muppet/common/parallel.hpp"

namespace muppet::index {

namespace {

constexpr const char* kMagic = "MUPX";
constexpr std::uint32_t kVersion = 1;

bool better(const MipsHit& a, const MipsHit& b) {
  if (a.inner_product != b.inner_product) return a.inner_product > b.inner_product;
  return a.paragraph_id < b.paragraph_id;
}

}  // namespace

DenseIndex DenseIndex::build(const corpus::KnowledgeSource& ks, const encoder::EncoderModel& model,
                             Granularity granularity, std::size_t threads) {
  std::vector<encoder::SentenceEncodings> encodings(ks.size());
  const auto paragraphs = ks.paragraphs();
  parallel_for(paragraphs.size(), threads, [&](std::size_t i) {
    try {
      encodings[i] = encoder::encode_paragraph(model, paragraphs[i]);
    } catch (const std::exception& e) {
      throw Error("encoding paragraph '" + paragraphs[i].id + "' failed: " + e.what());
    }
  });
  return from_encodings(std::move(encodings), granularity);
}

DenseIndex DenseIndex::from_encodings(std::vector<encoder::SentenceEncodings> encodings,
                                      Granularity granularity) {
  std::sort(encodings.begin(), encodings.end(),
            [](const auto& a, const auto& b) { return a.paragraph_id < b.paragraph_id; });
  DenseIndex index;
  index.granularity_ = granularity;
  index.dim_ = encodings.empty() ? 0 : encodings.front().sentences.cols();
  for (std::size_t p = 0; p < encodings.size(); ++p) {
    const auto& e = encodings[p];
    if (p > 0 && e.paragraph_id == encodings[p - 1].paragraph_id) {
      throw ValidationError("dense index: duplicate paragraph id '" + e.paragraph_id + "'");
    }
    if (e.sentences.rows() == 0) throw ValidationError("dense index: paragraph '" + e.paragraph_id + "' has no rows");
    if (e.sentences.cols() != index.dim_) throw ShapeError("dense index: inconsistent encoding width");
    nn::Matrix rows = e.sentences;
    if (granularity == Granularity::kParagraph) rows = e.sentences.colwise().maxCoeff();
    index.ids_.push_back(e.paragraph_id);
    index.row_start_.push_back(index.row_paragraph_.size());
    index.row_count_.push_back(static_cast<std::uint32_t>(rows.rows()));
    for (Index r = 0; r < rows.rows(); ++r) {
      for (Index j = 0; j < rows.cols(); ++j) index.data_.push_back(static_cast<float>(rows(r, j)));
      index.row_paragraph_.push_back(static_cast<std::uint32_t>(p));
      index.row_sentence_.push_back(static_cast<std::uint32_t>(r));
    }
  }
  return index;
}

bool DenseIndex::contains(const std::string& id) const {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

nn::Matrix DenseIndex::rows_of(const std::string& id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) throw ValidationError("dense index: unknown paragraph '" + id + "'");
  const auto [begin, end] = row_range(static_cast<std::size_t>(it - ids_.begin()));
  nn::Matrix out(static_cast<Index>(end - begin), dim_);
  for (std::size_t r = begin; r < end; ++r) {
    for (Index j = 0; j < dim_; ++j) out(static_cast<Index>(r - begin), j) = data_[r * dim_ + j];
  }
  return out;
}

double DenseIndex::paragraph_score(std::size_t p, const nn::RowVector& q, std::uint32_t* best) const {
  const auto [begin, end] = row_range(p);
  double top = 0.0;
  for (std::size_t r = begin; r < end; ++r) {
    const float* row = data_.data() + r * dim_;
    double total = 0.0;
    for (Index j = 0; j < dim_; ++j) total += static_cast<double>(row[j]) * q(j);
    if (r == begin || total > top) {
      top = total;
      *best = row_sentence_[r];
    }
  }
  return top;
}

std::vector<MipsHit> DenseIndex::mips_top_k(const nn::RowVector& q, std::size_t k,
                                            const std::vector<std::string>* candidates) const {
  if (k == 0) throw ValidationError("mips_top_k: k must be >= 1");
  if (q.size() != dim_) throw ShapeError("mips_top_k: query width " + std::to_string(q.size()) +
                                         " does not match index width " + std::to_string(dim_));
  std::vector<std::size_t> positions;
  if (candidates == nullptr) {
    positions.resize(ids_.size());
    for (std::size_t p = 0; p < positions.size(); ++p) positions[p] = p;
  } else {
    positions.reserve(candidates->size());
    for (const auto& id : *candidates) {
      const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
      if (it == ids_.end() || *it != id) throw ValidationError("mips_top_k: unknown candidate '" + id + "'");
      positions.push_back(static_cast<std::size_t>(it - ids_.begin()));
    }
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  }
  std::vector<MipsHit> hits;
  hits.reserve(positions.size());
  for (const auto p : positions) {
    MipsHit hit;
    hit.paragraph_id = ids_[p];
    hit.inner_product = paragraph_score(p, q, &hit.sentence_index);
    hits.push_back(std::move(hit));
  }
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
  hits.resize(keep);
  return hits;
}

void DenseIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write index " + path.string());
  binary::write_magic(out, kMagic);
  binary::write_le<std::uint32_t>(out, kVersion);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  binary::write_le<std::uint64_t>(out, row_count());
  binary::write_le<std::uint64_t>(out, paragraph_count());
  for (const float v : data_) binary::write_le<float>(out, v);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(granularity_));
  for (std::size_t p = 0; p < ids_.size(); ++p) {
    binary::write_string(out, ids_[p]);
    binary::write_le<std::uint64_t>(out, row_start_[p]);
    binary::write_le<std::uint32_t>(out, row_count_[p]);
  }
  for (const auto s : row_sentence_) binary::write_le<std::uint32_t>(out, s);
  if (!out) throw IoError("failed writing index " + path.string());
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read index " + path.string());
  binary::expect_magic(in, kMagic);
  const auto version = binary::read_le<std::uint32_t>(in, "index version");
  if (version != kVersion) throw IoError("index " + path.string() + ": unsupported version " + std::to_string(version));
  DenseIndex index;
  index.dim_ = binary::read_le<std::uint32_t>(in, "index dim");
  const auto rows = binary::read_le<std::uint64_t>(in, "row count");
  const auto paragraphs = binary::read_le<std::uint64_t>(in, "paragraph count");
  const auto values = rows * static_cast<std::uint64_t>(index.dim_);
  if (values > (std::uint64_t{1} << 40)) throw IoError("index " + path.string() + ": implausible size");
  index.data_.resize(values);
  for (auto& v : index.data_) v = binary::read_le<float>(in, "index rows");
  const auto granularity = binary::read_le<std::uint32_t>(in, "granularity");
  if (granularity > 1) throw IoError("index " + path.string() + ": bad granularity flag");
  index.granularity_ = static_cast<Granularity>(granularity);
  index.row_paragraph_.assign(rows, 0);
  std::uint64_t expected_start = 0;
  for (std::uint64_t p = 0; p < paragraphs; ++p) {
    index.ids_.push_back(binary::read_string(in, "paragraph id"));
    const auto start = binary::read_le<std::uint64_t>(in, "row start");
    const auto count = binary::read_le<std::uint32_t>(in, "row count");
    if (start != expected_start || count == 0 || start + count > rows) {
      throw IoError("index " + path.string() + ": inconsistent row ranges");
    }
    if (p > 0 && !(index.ids_[p - 1] < index.ids_[p])) throw IoError("index " + path.string() + ": ids not sorted");
    index.row_start_.push_back(start);
    index.row_count_.push_back(count);
    for (std::uint64_t r = start; r < start + count; ++r) index.row_paragraph_[r] = static_cast<std::uint32_t>(p);
    expected_start = start + count;
  }
  if (expected_start != rows) throw IoError("index " + path.string() + ": row ranges do not cover rows");
  index.row_sentence_.resize(rows);
  for (auto& s : index.row_sentence_) s = binary::read_le<std::uint32_t>(in, "row sentence");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("index " + path.string() + ": trailing bytes");
  return index;
}

}  // namespace muppet::index
