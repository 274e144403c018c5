#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "muppet/corpus/dataset.hpp"

namespace muppet::eval {

// Lowercase, drop punctuation, drop the articles a/an/the, collapse spaces.
std::string normalize_answer(std::string_view text);

struct Score {
  double em = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// EM against any gold; F1 (and its precision/recall) from the best gold.
// A yes/no prediction or gold only matches exactly.
Score answer_em_f1(std::string_view prediction, const std::vector<std::string>& golds);

// Set metrics over (paragraph, sentence) pairs.
Score supporting_fact_metrics(const std::vector<corpus::SupportingFact>& predicted,
                              const std::vector<corpus::SupportingFact>& gold);

// Precisions and recalls multiply; EM requires both.
Score joint_metrics(const Score& answer, const Score& support);

struct Prediction {
  std::string question_id;
  std::string answer;
  std::vector<corpus::SupportingFact> supporting_facts;
};

struct RecallPoint {
  std::size_t k = 0;
  double at_least_one = 0.0;
  double potentially_perfect = 0.0;
};

struct MetricReport {
  std::size_t count = 0;
  std::size_t missing = 0;  // gold questions without a prediction
  double answer_em = 0.0;
  double answer_f1 = 0.0;
  double sp_em = 0.0;
  double sp_f1 = 0.0;
  double joint_em = 0.0;
  double joint_f1 = 0.0;
  std::vector<RecallPoint> recall;

  std::string to_json() const;
};

// Per-example metrics averaged over the gold questions.
MetricReport evaluate(const std::vector<Prediction>& predictions, const std::vector<corpus::QAExample>& gold);

// Line-delimited {"question_id", "answer", "supporting_facts": [[pid, idx]]}.
std::vector<Prediction> parse_predictions(std::string_view jsonl, const std::string& origin = "<memory>");
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

// Each question's ranking is a list of retrieved units (a paragraph or a
// chain of paragraphs). At k, the union of the first k units counts:
// at-least-one needs any gold id in it, potentially-perfect needs all.
std::vector<RecallPoint> recall_at_k(const std::vector<std::vector<std::vector<std::string>>>& rankings,
                                     const std::vector<std::vector<std::string>>& gold,
                                     const std::vector<std::size_t>& ks);
// Flat paragraph rankings, one unit per paragraph.
std::vector<RecallPoint> recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                                     const std::vector<std::vector<std::string>>& gold,
                                     const std::vector<std::size_t>& ks);

std::string recall_csv(const std::vector<RecallPoint>& curve);

}  // namespace muppet::eval
