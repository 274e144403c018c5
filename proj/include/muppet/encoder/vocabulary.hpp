#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "muppet/corpus/corpus.hpp"
#include "muppet/nn/tensor.hpp"

namespace muppet::encoder {

// Word vocabulary over normalized tokens. Row 0 is reserved for unknown
// words; known words follow in lexicographic order.
class Vocabulary {
 public:
  static constexpr nn::Index kOov = 0;
  static constexpr const char* kOovToken = "<oov>";

  Vocabulary();
  // Words occurring at least `min_count` times across `texts`.
  static Vocabulary build(const std::vector<corpus::Tokens>& texts, std::size_t min_count = 1);
  static Vocabulary build(const corpus::KnowledgeSource& ks,
                          const std::vector<corpus::Tokens>& extra = {}, std::size_t min_count = 1);

  std::size_t size() const { return words_.size(); }
  nn::Index id(const std::string& normalized) const;
  const std::string& word(nn::Index id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::vector<nn::Index> ids(const corpus::Tokens& tokens) const;

  // One word per line, line 0 being the unknown marker.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, nn::Index> index_;
};

}  // namespace muppet::encoder
