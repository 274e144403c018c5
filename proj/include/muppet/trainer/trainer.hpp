#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "muppet/corpus/corpus.hpp"
#include "muppet/corpus/dataset.hpp"
#include "muppet/encoder/encoder.hpp"
#include "muppet/nn/adadelta.hpp"
#include "muppet/reader/reader.hpp"
#include "muppet/tfidf/tfidf.hpp"

namespace muppet::trainer {

// ---- losses

enum class IncompleteQuestions {
  kReject,  // ranking term requires a positive and a negative per question
  kSkip,    // questions lacking either side are left out of the ranking mean
};

struct LossConfig {
  double margin = 1.0;          // gamma
  double ranking_weight = 1.0;  // lambda
  IncompleteQuestions incomplete = IncompleteQuestions::kReject;

  void validate() const;
};

// One relevance prediction: the logit whose sigmoid is rel(Q, P).
struct RelevanceRecord {
  std::size_t question = 0;
  double logit = 0.0;
  int label = 0;
};

inline constexpr int kIterations = 2;

struct EncoderLossResult {
  double value = 0.0;
  std::array<double, kIterations> cross_entropy{};
  std::array<double, kIterations> ranking{};
  // d value / d logit, parallel to the input records.
  std::array<std::vector<double>, kIterations> grads;
};

// -(y log r + (1 - y) log(1 - r)) for r = sigmoid(logit).
double binary_cross_entropy(double logit, int label);
// max(0, margin - mean_pos + mean_neg).
double ranking_term(double mean_pos, double mean_neg, double margin);

// Sum over iterations of mean cross-entropy plus lambda times the mean
// per-question ranking term. An empty iteration contributes nothing.
EncoderLossResult encoder_loss(const std::array<std::vector<RelevanceRecord>, kIterations>& records,
                               const LossConfig& config);

// ---- samples

enum class SampleType {
  kGold,
  kGoldDistractor,
  kDistractorGold,
  kDistractors,
  kForeignGold,
  kSingleHopPositive,
  kSingleHopNegative,
};

std::string_view to_string(SampleType type);

struct TrainingSample {
  std::size_t question = 0;  // index into the example list
  std::string p1;
  std::string p2;  // empty for single-hop samples
  int y1 = 0;
  int y2 = 0;
  SampleType type = SampleType::kGold;

  bool operator==(const TrainingSample&) const = default;
};

// 30 common English function words.
const std::vector<std::string>& stopwords();
bool only_stopwords(const corpus::Tokens& tokens);

// Negatives for a single-hop question: 3 + 3 paragraphs of the gold document
// closest to the question and to the gold paragraph, 2 + 2 first paragraphs
// of other documents closest to each, and 2 uniform random paragraphs. The
// gold paragraph is never included and ids are unique.
std::vector<std::string> gather_squad_negatives(const corpus::QAExample& example, const corpus::KnowledgeSource& ks,
                                                const tfidf::TfidfIndex& paragraphs, std::mt19937_64& rng);

// Every question four times (one positive, three negatives drawn without
// replacement where possible), shuffled.
std::vector<TrainingSample> build_squad_epoch(const std::vector<corpus::QAExample>& examples,
                                              const std::vector<std::vector<std::string>>& negatives,
                                              std::mt19937_64& rng);

struct HotpotSampler {
  const std::vector<corpus::QAExample>& examples;
  const corpus::KnowledgeSource& ks;
  std::vector<std::vector<std::string>> distractors;  // per example
  std::vector<std::string> training_paragraphs;      // every gold and distractor id

  HotpotSampler(const std::vector<corpus::QAExample>& examples, const corpus::KnowledgeSource& ks,
                std::vector<std::vector<std::string>> distractors);

  // Type probabilities for the two non-gold samples per question.
  static constexpr std::array<double, 4> kTypeMix = {0.35, 0.35, 0.25, 0.05};
  SampleType draw_type(std::mt19937_64& rng) const;
  TrainingSample draw(std::size_t question, SampleType type, std::mt19937_64& rng) const;
};

// One gold sample and two mixed samples for each listed question.
std::vector<TrainingSample> sample_hotpot_batch(const HotpotSampler& sampler, const std::vector<std::size_t>& questions,
                                                std::mt19937_64& rng);

// Distractor pools: the dataset's own lists, or the top tf-idf paragraphs for
// the question (minus golds) when a list is empty and `index` is given.
std::vector<std::vector<std::string>> distractor_pools(const std::vector<corpus::QAExample>& examples,
                                                       const tfidf::TfidfIndex* index, std::size_t size = 10);

// ---- training loops

enum class DatasetKind { kHotpot, kSquad };

struct TrainConfig {
  DatasetKind kind = DatasetKind::kHotpot;
  std::size_t epochs = 10;
  std::size_t questions_per_batch = 25;  // hotpot batches (3 samples per question)
  std::size_t batch_size = 45;           // squad batches
  LossConfig loss;
  nn::AdadeltaConfig optimizer;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::filesystem::path checkpoint_prefix;  // "<prefix>.epochN" per epoch when set
  std::ostream* metrics = nullptr;          // JSON lines, one per batch and per epoch
  // Higher is better; when set, the best epoch's parameters are returned.
  std::function<double(std::size_t epoch)> dev_metric;

  // Keys: epochs, questions_per_batch, batch_size, margin, ranking_weight,
  // rho, epsilon, learning_rate, seed, threads, incomplete_questions
  // (reject | skip; hotpot defaults to skip, squad to reject).
  static TrainConfig from_config(const Config& config, DatasetKind kind);
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  double mean_loss = 0.0;
  std::array<double, kIterations> cross_entropy{};
  std::array<double, kIterations> ranking{};
  double dev = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
};

// Loss of one batch of encoder samples with gradients added to `grads`
// (skipped when null). Samples are evaluated in eval mode when `mode` says so.
EncoderLossResult encoder_batch(const encoder::EncoderModel& model, const std::vector<corpus::QAExample>& examples,
                                const corpus::KnowledgeSource& ks, const std::vector<TrainingSample>& batch,
                                const LossConfig& loss, nn::Mode mode, std::uint64_t seed,
                                nn::ParameterStore* grads, std::size_t threads = 1);

// Hotpot mode needs `distractors` (see distractor_pools); squad mode needs
// `negatives` (see gather_squad_negatives), one list per example.
TrainReport train_encoder(encoder::EncoderModel& model, const std::vector<corpus::QAExample>& examples,
                          const corpus::KnowledgeSource& ks, const std::vector<std::vector<std::string>>& pools,
                          const TrainConfig& config);

// Three contexts per question: the gold pair and two pairs joining one gold
// paragraph with a distractor (hotpot), or the gold paragraph and two
// negatives (squad).
std::vector<reader::ReaderContext> reader_contexts(const corpus::QAExample& example, const corpus::KnowledgeSource& ks,
                                                   const std::vector<std::string>& pool, DatasetKind kind,
                                                   std::mt19937_64& rng);

// Mean per-question reader loss of a batch; gradients added to `grads` when
// non-null. Questions without a labelable answer are skipped and counted.
struct ReaderBatchResult {
  double loss = 0.0;
  std::size_t questions = 0;
  std::size_t skipped = 0;
};
ReaderBatchResult reader_batch(const reader::ReaderModel& model, const std::vector<corpus::QAExample>& examples,
                               const std::vector<std::size_t>& questions,
                               const std::vector<std::vector<reader::ReaderContext>>& contexts, DatasetKind kind,
                               nn::Mode mode, std::uint64_t seed, nn::ParameterStore* grads, std::size_t threads = 1);

TrainReport train_reader(reader::ReaderModel& model, const std::vector<corpus::QAExample>& examples,
                         const corpus::KnowledgeSource& ks, const std::vector<std::vector<std::string>>& pools,
                         const TrainConfig& config);

}  // namespace muppet::trainer
