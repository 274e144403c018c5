#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace muppet::corpus {

inline constexpr std::size_t kMaxParagraphTokens = 600;

struct Token {
  std::string surface;
  std::string normalized;  // lowercase(surface)

  static Token make(std::string surface);
  bool operator==(const Token&) const = default;
};

using Tokens = std::vector<Token>;

struct Sentence {
  Tokens tokens;
  bool operator==(const Sentence&) const = default;
};

struct Paragraph {
  std::string id;
  std::string title;
  std::vector<Sentence> sentences;

  std::size_t token_count() const;
  // Concatenation of all sentences.
  Tokens tokens() const;
  std::vector<std::size_t> sentence_lengths() const;

  bool operator==(const Paragraph&) const = default;
};

enum class CorpusMode {
  kParagraphPerDoc,     // every paragraph is its own document (HotpotQA style)
  kMultiParagraphDocs,  // documents grouped by title (SQuAD-Open style)
};

std::string_view to_string(CorpusMode mode);
CorpusMode corpus_mode_from_string(std::string_view name);

// Immutable, id-indexed paragraph collection. Paragraphs are stored in
// lexicographic id order; documents keep their paragraphs in input order.
class KnowledgeSource {
 public:
  KnowledgeSource(std::vector<Paragraph> paragraphs, CorpusMode mode);

  CorpusMode mode() const { return mode_; }
  std::size_t size() const { return paragraphs_.size(); }
  std::span<const Paragraph> paragraphs() const { return paragraphs_; }

  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
  const Paragraph& at(const std::string& id) const;
  std::size_t position(const std::string& id) const;

  // Document key of a paragraph: its own id in paragraph-per-doc mode,
  // otherwise its title.
  const std::string& document_of(const std::string& id) const;
  const std::vector<std::string>& document_paragraphs(const std::string& doc) const;
  const std::vector<std::string>& document_order() const { return doc_order_; }

 private:
  std::vector<Paragraph> paragraphs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  CorpusMode mode_;
  std::map<std::string, std::vector<std::string>> docs_;
  std::unordered_map<std::string, std::string> doc_of_;
  std::vector<std::string> doc_order_;
};

// Whitespace split; each of . , ? ! ; : " ' ( ) [ ] becomes its own token.
Tokens tokenize(std::string_view text);

// Boundary after each of . ! ?; never yields an empty sentence.
std::vector<Sentence> split_sentences(const Tokens& tokens);

// Keeps at most `limit` tokens, dropping whole trailing sentences first and
// then trailing tokens of the boundary sentence.
std::vector<Sentence> truncate_sentences(std::vector<Sentence> sentences,
                                         std::size_t limit = kMaxParagraphTokens);

// Builds a paragraph from raw text (tokenized and split).
Paragraph make_paragraph(std::string id, std::string title, std::string_view text);

// Line-delimited JSON. Each record has id and title plus one of
//   text:      raw string, tokenized and sentence-split
//   sentences: list of sentence strings, each tokenized as one sentence
//   tokens:    list of token lists (the persisted form)
KnowledgeSource ingest_corpus(const std::filesystem::path& path, CorpusMode mode);
KnowledgeSource parse_corpus(std::string_view jsonl, CorpusMode mode,
                             const std::string& origin = "<memory>");

// Writes the persisted form: {"id", "title", "tokens": [[...], ...]}.
void save_corpus(const KnowledgeSource& ks, const std::filesystem::path& path);

}  // namespace muppet::corpus
