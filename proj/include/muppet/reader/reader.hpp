#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "muppet/common/config.hpp"
#include "muppet/corpus/corpus.hpp"
#include "muppet/corpus/dataset.hpp"
#include "muppet/encoder/vocabulary.hpp"
#include "muppet/nn/graph.hpp"
#include "muppet/nn/parameters.hpp"

namespace muppet::reader {

using nn::Index;
using nn::Matrix;
using nn::RowVector;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kMaxContextTokens = 2 * corpus::kMaxParagraphTokens;

// Head output indices.
inline constexpr Index kTypeSpan = 0;
inline constexpr Index kTypeBinary = 1;
inline constexpr Index kAnswerNo = 0;
inline constexpr Index kAnswerYes = 1;

struct ReaderConfig {
  Index word_dim = 32;
  Index char_dim = 8;
  Index char_filters = 16;
  Index hidden = 24;  // per GRU direction
  Index sup_hidden = 150;
  double dropout = 0.2;
  std::size_t max_span = 30;
  double sup_threshold = 0.5;

  void validate() const;
  // Keys: reader_word_dim, reader_char_dim, reader_char_filters,
  // reader_hidden, reader_sup_hidden, reader_dropout, max_span, sup_threshold.
  static ReaderConfig from_config(const Config& config);
  Config to_config() const;
};

struct ReaderModel {
  ReaderConfig config;
  encoder::Vocabulary vocab;
  nn::ParameterStore params;

  static ReaderModel create(const ReaderConfig& config, encoder::Vocabulary vocab, std::uint64_t seed);
  void save(const std::filesystem::path& path) const;
  static ReaderModel load(const std::filesystem::path& path);
};

// One reader input: a single paragraph or the concatenation of a pair, with
// sentence boundaries kept.
struct ReaderContext {
  std::vector<std::string> paragraph_ids;
  corpus::Tokens tokens;
  std::vector<std::size_t> sentence_lengths;
  std::vector<corpus::SupportingFact> sentences;  // (paragraph, index) per sentence

  static ReaderContext from_paragraphs(const std::vector<const corpus::Paragraph*>& paragraphs);
  // Paragraph ids joined with '|'; used to order contexts deterministically.
  std::string key() const;
  // Token offset of sentence `s`.
  std::size_t sentence_start(std::size_t s) const;
};

struct ReaderOutput {
  Vector start;  // per token
  Vector end;
  RowVector type_logits;    // 1 x 2, empty without hotpot heads
  RowVector yes_no_logits;  // 1 x 2
  Vector sup_logits;        // per sentence
  Vector sup_probs;
};

struct ReaderVars {
  nn::Var start, end;  // n x 1
  nn::Var type, yes_no;  // 1 x 2
  nn::Var sup;  // sentences x 1 (logits)
};

// Builds the reader on a graph; the hotpot heads are skipped unless asked for.
ReaderVars reader_graph(nn::Graph& g, const ReaderModel& m, const corpus::Tokens& question,
                        const ReaderContext& context, bool hotpot_heads);
ReaderOutput output_of(const nn::Graph& g, const ReaderVars& vars);

// Span scores only. Throws ValidationError for contexts over kMaxContextTokens.
ReaderOutput read_spans(const ReaderModel& m, const corpus::Tokens& question, const ReaderContext& context);
// Span scores plus answer-type, yes/no and supporting-fact heads.
ReaderOutput hotpot_forward(const ReaderModel& m, const corpus::Tokens& question, const ReaderContext& context);

// Gold for one question over its contexts. Spans are inclusive token ranges.
struct ReaderGold {
  corpus::AnswerKind kind = corpus::AnswerKind::kSpan;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> spans;  // per context
  std::vector<std::vector<double>> sup_labels;  // per context, per sentence
};

// Every occurrence of any answer (token-normalized exact match).
std::vector<std::pair<std::size_t, std::size_t>> find_answer_spans(const corpus::Tokens& context,
                                                                   const std::vector<std::string>& answers);
ReaderGold make_gold(const corpus::QAExample& example, const std::vector<ReaderContext>& contexts);

// Gradients of a loss with respect to each context's outputs.
struct OutputGradients {
  Vector start, end;
  RowVector type, yes_no;
  Vector sup;
};

struct LossResult {
  double value = 0.0;
  double span = 0.0;
  double type = 0.0;
  double yes_no = 0.0;
  double sup = 0.0;
  std::vector<OutputGradients> grads;
};

// Shared-norm span loss: -log of the gold mass over all tokens of all
// contexts, for starts plus ends. Throws ValidationError when no context has
// a gold span.
LossResult snorm_loss(const std::vector<ReaderOutput>& outputs,
                      const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& spans);

// Span + answer type + yes/no + supporting-fact loss.
LossResult hotpot_loss(const std::vector<ReaderOutput>& outputs, const ReaderGold& gold);

struct AnswerPrediction {
  std::string answer;
  corpus::AnswerKind kind = corpus::AnswerKind::kSpan;
  std::size_t context = 0;  // position in the inputs
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  std::vector<corpus::SupportingFact> supporting_facts;
  double confidence = 0.0;
};

AnswerPrediction predict_answer(const std::vector<ReaderOutput>& outputs,
                                const std::vector<ReaderContext>& contexts, std::size_t max_span = 30,
                                double sup_threshold = 0.5);

// {"question_id", "answer", "kind", "supporting_facts": [[pid, idx], ...]}
std::string prediction_to_json(const std::string& question_id, const AnswerPrediction& p);

}  // namespace muppet::reader
