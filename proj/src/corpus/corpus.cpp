#include "muppet/corpus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "muppet/common/error.hpp"

namespace muppet::corpus {

namespace {

using nlohmann::json;

bool is_split_punct(char c) {
  switch (c) {
    case '.': case ',': case '?': case '!': case ';': case ':':
    case '"': case '\'': case '(': case ')': case '[': case ']':
      return true;
    default:
      return false;
  }
}

bool is_terminal(const Token& t) {
  return t.surface == "." || t.surface == "!" || t.surface == "?";
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Tokens tokens_from_json(const json& list, const std::string& origin, std::size_t line) {
  if (!list.is_array()) throw ParseError(origin, line, "token list must be an array");
  Tokens out;
  out.reserve(list.size());
  for (const auto& t : list) {
    if (!t.is_string() || t.get<std::string>().empty()) {
      throw ParseError(origin, line, "tokens must be non-empty strings");
    }
    out.push_back(Token::make(t.get<std::string>()));
  }
  return out;
}

Paragraph paragraph_from_record(const json& record, const std::string& origin, std::size_t line) {
  if (!record.is_object()) throw ParseError(origin, line, "record is not an object");
  if (!record.contains("id") || !record["id"].is_string()) {
    throw ParseError(origin, line, "missing string field 'id'");
  }
  Paragraph p;
  p.id = record["id"].get<std::string>();
  if (p.id.empty()) throw ParseError(origin, line, "empty id");
  if (record.contains("title")) {
    if (!record["title"].is_string()) throw ParseError(origin, line, "'title' must be a string");
    p.title = record["title"].get<std::string>();
  }

  if (record.contains("tokens")) {
    const auto& sentences = record["tokens"];
    if (!sentences.is_array()) throw ParseError(origin, line, "'tokens' must be a list of lists");
    for (const auto& s : sentences) {
      auto tokens = tokens_from_json(s, origin, line);
      if (tokens.empty()) throw ParseError(origin, line, "empty sentence in 'tokens'");
      p.sentences.push_back(Sentence{std::move(tokens)});
    }
  } else if (record.contains("sentences")) {
    const auto& sentences = record["sentences"];
    if (!sentences.is_array()) throw ParseError(origin, line, "'sentences' must be a list");
    for (const auto& s : sentences) {
      if (!s.is_string()) throw ParseError(origin, line, "sentences must be strings");
      auto tokens = tokenize(s.get<std::string>());
      if (!tokens.empty()) p.sentences.push_back(Sentence{std::move(tokens)});
    }
  } else if (record.contains("text")) {
    if (!record["text"].is_string()) throw ParseError(origin, line, "'text' must be a string");
    const auto tokens = tokenize(record["text"].get<std::string>());
    if (!tokens.empty()) p.sentences = split_sentences(tokens);
  } else {
    throw ParseError(origin, line, "record needs one of 'text', 'sentences', 'tokens'");
  }

  if (p.sentences.empty()) throw ParseError(origin, line, "paragraph '" + p.id + "' has no tokens");
  p.sentences = truncate_sentences(std::move(p.sentences));
  return p;
}

}  // namespace

Token Token::make(std::string surface) {
  Token t;
  t.normalized = lowercase(surface);
  t.surface = std::move(surface);
  return t;
}

std::size_t Paragraph::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

Tokens Paragraph::tokens() const {
  Tokens out;
  out.reserve(token_count());
  for (const auto& s : sentences) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::vector<std::size_t> Paragraph::sentence_lengths() const {
  std::vector<std::size_t> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.tokens.size());
  return out;
}

std::string_view to_string(CorpusMode mode) {
  return mode == CorpusMode::kParagraphPerDoc ? "paragraph-per-doc" : "multi-paragraph-docs";
}

CorpusMode corpus_mode_from_string(std::string_view name) {
  if (name == "paragraph-per-doc" || name == "hotpot") return CorpusMode::kParagraphPerDoc;
  if (name == "multi-paragraph-docs" || name == "squad") return CorpusMode::kMultiParagraphDocs;
  throw ValidationError("unknown corpus mode '" + std::string(name) + "'");
}

KnowledgeSource::KnowledgeSource(std::vector<Paragraph> paragraphs, CorpusMode mode)
    : mode_(mode) {
  if (paragraphs.empty()) throw ValidationError("knowledge source is empty");
  for (const auto& p : paragraphs) {
    if (p.sentences.empty()) throw ValidationError("paragraph '" + p.id + "' has no sentences");
    const auto& doc = mode == CorpusMode::kParagraphPerDoc ? p.id : p.title;
    auto [it, inserted] = docs_.try_emplace(doc);
    if (inserted) doc_order_.push_back(doc);
    it->second.push_back(p.id);
    doc_of_[p.id] = doc;
  }
  paragraphs_ = std::move(paragraphs);
  std::sort(paragraphs_.begin(), paragraphs_.end(),
            [](const Paragraph& a, const Paragraph& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < paragraphs_.size(); ++i) {
    if (!by_id_.emplace(paragraphs_[i].id, i).second) {
      throw ValidationError("duplicate paragraph id '" + paragraphs_[i].id + "'");
    }
  }
}

const Paragraph& KnowledgeSource::at(const std::string& id) const {
  return paragraphs_[position(id)];
}

std::size_t KnowledgeSource::position(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ValidationError("unknown paragraph id '" + id + "'");
  return it->second;
}

const std::string& KnowledgeSource::document_of(const std::string& id) const {
  const auto it = doc_of_.find(id);
  if (it == doc_of_.end()) throw ValidationError("unknown paragraph id '" + id + "'");
  return it->second;
}

const std::vector<std::string>& KnowledgeSource::document_paragraphs(const std::string& doc) const {
  const auto it = docs_.find(doc);
  if (it == docs_.end()) throw ValidationError("unknown document '" + doc + "'");
  return it->second;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(Token::make(std::move(current)));
    current.clear();
  };
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_split_punct(c)) {
      flush();
      out.push_back(Token::make(std::string(1, c)));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<Sentence> split_sentences(const Tokens& tokens) {
  std::vector<Sentence> out;
  Sentence current;
  for (const auto& t : tokens) {
    current.tokens.push_back(t);
    if (is_terminal(t)) {
      out.push_back(std::move(current));
      current = Sentence{};
    }
  }
  if (!current.tokens.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<Sentence> truncate_sentences(std::vector<Sentence> sentences, std::size_t limit) {
  std::size_t kept = 0;
  std::size_t i = 0;
  for (; i < sentences.size(); ++i) {
    const auto n = sentences[i].tokens.size();
    if (kept + n > limit) break;
    kept += n;
  }
  if (i == sentences.size()) return sentences;
  const auto room = limit - kept;
  if (room > 0) {
    sentences[i].tokens.resize(room);
    ++i;
  }
  sentences.resize(i);
  return sentences;
}

Paragraph make_paragraph(std::string id, std::string title, std::string_view text) {
  Paragraph p;
  p.id = std::move(id);
  p.title = std::move(title);
  p.sentences = truncate_sentences(split_sentences(tokenize(text)));
  return p;
}

KnowledgeSource parse_corpus(std::string_view jsonl, CorpusMode mode, const std::string& origin) {
  std::vector<Paragraph> paragraphs;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const auto line = jsonl.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(origin, line_no, std::string("malformed JSON: ") + e.what());
    }
    auto p = paragraph_from_record(record, origin, line_no);
    if (const auto [it, inserted] = seen.emplace(p.id, line_no); !inserted) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": duplicate paragraph id '" +
                            p.id + "' (first seen on line " + std::to_string(it->second) + ")");
    }
    paragraphs.push_back(std::move(p));
    if (end == jsonl.size()) break;
  }
  return KnowledgeSource(std::move(paragraphs), mode);
}

KnowledgeSource ingest_corpus(const std::filesystem::path& path, CorpusMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), mode, path.string());
}

void save_corpus(const KnowledgeSource& ks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus " + path.string());
  // Document order is kept so paragraph positions inside documents survive.
  for (const auto& doc : ks.document_order()) {
    for (const auto& pid : ks.document_paragraphs(doc)) {
      const auto& p = ks.at(pid);
      json sentences = json::array();
      for (const auto& s : p.sentences) {
        json tokens = json::array();
        for (const auto& t : s.tokens) tokens.push_back(t.surface);
        sentences.push_back(std::move(tokens));
      }
      const json record = {{"id", p.id}, {"title", p.title}, {"tokens", std::move(sentences)}};
      out << record.dump() << "\n";
    }
  }
}

}  // namespace muppet::corpus
