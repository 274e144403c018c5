#include "muppet/encoder/vocabulary.hpp"

#include <fstream>
#include <map>

#include "muppet/common/error.hpp"

namespace muppet::encoder {

Vocabulary::Vocabulary() {
  words_.push_back(kOovToken);
  index_.emplace(kOovToken, kOov);
}

Vocabulary Vocabulary::build(const std::vector<corpus::Tokens>& texts, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (const auto& token : text) ++counts[token.normalized];
  }
  Vocabulary vocab;
  for (const auto& [word, count] : counts) {
    if (count < min_count || word == kOovToken) continue;
    vocab.index_.emplace(word, static_cast<nn::Index>(vocab.words_.size()));
    vocab.words_.push_back(word);
  }
  return vocab;
}

Vocabulary Vocabulary::build(const corpus::KnowledgeSource& ks, const std::vector<corpus::Tokens>& extra,
                             std::size_t min_count) {
  std::vector<corpus::Tokens> texts = extra;
  texts.reserve(extra.size() + ks.size());
  for (const auto& p : ks.paragraphs()) texts.push_back(p.tokens());
  return build(texts, min_count);
}

nn::Index Vocabulary::id(const std::string& normalized) const {
  const auto it = index_.find(normalized);
  return it == index_.end() ? kOov : it->second;
}

std::vector<nn::Index> Vocabulary::ids(const corpus::Tokens& tokens) const {
  std::vector<nn::Index> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t.normalized));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& w : words_) out << w << '\n';
  if (!out) throw IoError("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kOovToken) throw ParseError(path.string(), line_no, "first entry must be " + std::string(kOovToken));
      continue;
    }
    if (line.empty()) throw ParseError(path.string(), line_no, "empty vocabulary entry");
    if (!vocab.index_.emplace(line, static_cast<nn::Index>(vocab.words_.size())).second) {
      throw ParseError(path.string(), line_no, "duplicate word '" + line + "'");
    }
    vocab.words_.push_back(line);
  }
  if (line_no == 0) throw ParseError(path.string(), 0, "empty vocabulary file");
  return vocab;
}

}  // namespace muppet::encoder
