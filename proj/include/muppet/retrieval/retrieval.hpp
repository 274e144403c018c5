#pragma once

#include <string>
#include <vector>

#include "muppet/corpus/corpus.hpp"
#include "muppet/encoder/encoder.hpp"
#include "muppet/index/dense_index.hpp"
#include "muppet/tfidf/tfidf.hpp"

namespace muppet::retrieval {

struct RetrievalConfig {
  std::size_t beam_width = 8;     // k1
  std::size_t second_fanout = 0;  // k2; 0 means ceil(2 * max_contexts / k1)
  std::size_t n1 = 32;
  std::size_t n2 = 512;
  std::size_t max_contexts = 45;
  int iterations = 2;

  void validate() const;
  std::size_t fanout() const;
  // Keys: beam_width, second_fanout, n1, n2, max_contexts, iterations.
  static RetrievalConfig from_config(const Config& config);
};

struct ParagraphChain {
  std::vector<std::string> paragraph_ids;
  std::vector<double> scores;  // relevance per iteration
  double final_score = 0.0;
};

struct RetrievalBeam {
  int iteration = 1;
  std::vector<ParagraphChain> chains;  // non-increasing score
};

struct RetrievalResult {
  std::vector<ParagraphChain> chains;
  bool no_candidates = false;  // the tf-idf stage returned nothing
};

// One dense search restricted to `candidates`: search vector from `enc`,
// exact MIPS, and the sigmoid relevance attached to every hit.
RetrievalBeam retrieve_iteration(const encoder::QuestionEncoding& enc,
                                 const std::vector<std::string>& candidates,
                                 const index::DenseIndex& index, const nn::ParameterStore& params,
                                 std::size_t width, int iteration = 1);

// TF-IDF narrowing, first dense search, one reformulation per beam entry and
// a second dense search per reformulated vector. Chains are deduplicated as
// unordered pairs (keeping the higher score), sorted by final score (ties by
// paragraph ids) and truncated to max_contexts. With iterations = 1 the beam
// holds max_contexts single-paragraph chains.
RetrievalResult multi_hop_retrieve(const corpus::Tokens& question, const corpus::KnowledgeSource& ks,
                                   const tfidf::CandidateRetriever& candidates,
                                   const index::DenseIndex& index, const encoder::EncoderModel& model,
                                   const RetrievalConfig& config, std::size_t threads = 1);

// {"id"?, "question", "chains": [{"paragraph_ids", "scores", "final"}]}
std::string result_to_json(const std::string& question, const RetrievalResult& result,
                           const std::string& id = {});

// Paragraph ids of the chains in order, first occurrence kept.
std::vector<std::string> ranked_paragraphs(const std::vector<ParagraphChain>& chains);

}  // namespace muppet::retrieval
