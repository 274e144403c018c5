#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "muppet/corpus/corpus.hpp"

namespace muppet::corpus {

enum class AnswerKind { kSpan, kYes, kNo };

std::string_view to_string(AnswerKind kind);

enum class HopMode { kSingleHop, kMultiHop };

struct SupportingFact {
  std::string paragraph_id;
  std::size_t sentence_index = 0;

  auto operator<=>(const SupportingFact&) const = default;
};

struct QAExample {
  std::string id;
  std::string question_text;
  Tokens question;
  std::vector<std::string> answers;
  std::vector<std::string> gold_paragraph_ids;  // hop order for multi-hop
  std::vector<SupportingFact> supporting_facts;
  AnswerKind answer_kind = AnswerKind::kSpan;
  std::vector<std::string> distractor_ids;  // optional hard negatives
};

// Line-delimited JSON records:
//   {"id", "question", "answers": [...] | "answer": "...",
//    "gold_paragraph_ids": [...], "supporting_facts": [[pid, idx], ...],
//    "binary": bool, "distractor_ids": [...]}
// answer_kind is yes/no only when "binary" is set and the answer is one of
// yes/no; multi-hop mode requires exactly two gold ids, single-hop one.
std::vector<QAExample> load_qa_dataset(const std::filesystem::path& path, HopMode mode);
std::vector<QAExample> parse_qa_dataset(std::string_view jsonl, HopMode mode,
                                        const std::string& origin = "<memory>");

// Checks gold ids, distractor ids and supporting-fact indices against a corpus.
void validate_against(const std::vector<QAExample>& examples, const KnowledgeSource& ks);

}  // namespace muppet::corpus
