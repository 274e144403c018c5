#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "muppet/common/config.hpp"
#include "muppet/corpus/corpus.hpp"
#include "muppet/encoder/vocabulary.hpp"
#include "muppet/nn/graph.hpp"
#include "muppet/nn/parameters.hpp"

namespace muppet::encoder {

using nn::Index;
using nn::Matrix;
using nn::RowVector;

struct EncoderConfig {
  Index encoding_dim = 64;  // d; each GRU direction holds d/2
  Index word_dim = 32;
  Index char_dim = 8;
  Index char_filters = 16;
  double dropout = 0.2;
  std::string pretrained_vectors;  // optional "word v1 v2 ..." text file

  void validate() const;
  // Keys: encoding_dim, word_dim, char_dim, char_filters, dropout,
  // pretrained_vectors. Missing keys keep their defaults.
  static EncoderConfig from_config(const Config& config);
  Config to_config() const;
};

// Parameter names.
namespace names {
inline constexpr const char* kWord = "enc.word";
inline constexpr const char* kChar = "enc.char";
inline constexpr const char* kGru = "enc.gru";
inline constexpr const char* kAttQ = "att.w1";
inline constexpr const char* kAttP = "att.w2";
inline constexpr const char* kAttQP = "att.w3";
inline constexpr const char* kLinW = "ref.lin.W";
inline constexpr const char* kLinB = "ref.lin.b";
inline constexpr const char* kResGru = "ref.res.gru";
inline constexpr const char* kResW = "ref.res.W";
inline constexpr const char* kResB = "ref.res.b";
inline constexpr const char* kScoreW1 = "score.w1";
inline constexpr const char* kScoreW2 = "score.w2";
inline constexpr const char* kScoreW3 = "score.w3";  // 1 x 1
inline constexpr const char* kScoreW4 = "score.w4";
inline constexpr const char* kScoreB = "score.b";  // 1 x 1
}  // namespace names

// Registers word table, char table/filters and a BiGRU under `prefix`:
// "<prefix>.word", "<prefix>.char.*", "<prefix>.gru.*".
void add_text_layers(nn::ParameterStore& store, const std::string& prefix, std::size_t vocab_size,
                     Index word_dim, Index char_dim, Index char_filters, Index hidden,
                     std::mt19937_64& rng);

struct EncoderModel {
  EncoderConfig config;
  Vocabulary vocab;
  nn::ParameterStore params;

  static EncoderModel create(const EncoderConfig& config, Vocabulary vocab, std::uint64_t seed);

  // Parameters to `path`, vocabulary to `path`.vocab, config to `path`.cfg.
  void save(const std::filesystem::path& path) const;
  static EncoderModel load(const std::filesystem::path& path);
};

// Overwrites word rows of the words listed in a "word v1 v2 ..." file.
// Returns the number of rows set.
std::size_t load_pretrained_vectors(EncoderModel& model, const std::filesystem::path& path);

// ---- graph building blocks (shared with training)

// [word embedding ; char-CNN embedding] per token.
nn::Var embed_tokens(nn::Graph& g, const Vocabulary& vocab, const corpus::Tokens& tokens,
                     const std::string& prefix = "enc");
// Embedding, variational dropout, BiGRU.
nn::Var contextualize(nn::Graph& g, const Vocabulary& vocab, const corpus::Tokens& tokens,
                      double dropout, const std::string& prefix = "enc");

nn::Var paragraph_encoding(nn::Graph& g, const EncoderModel& m, const corpus::Paragraph& p);
nn::Var question_encoding(nn::Graph& g, const EncoderModel& m, const corpus::Tokens& question);

struct AttentionVars {
  nn::Var scores;      // a_ij, n_q x n_p
  nn::Var alpha;       // row softmax of scores
  nn::Var attended;    // a_i, n_q x d
  nn::Var maxima;      // m_i, n_q x 1
  nn::Var beta;        // 1 x n_q
  nn::Var paragraph;   // a^p, 1 x d
};
// Weights are three 1 x d parameters; scores
// a_ij = w_q . cq_i + w_p . cp_j + w_qp . (cq_i * cp_j).
AttentionVars attention(nn::Graph& g, nn::Var cq, nn::Var cp, const std::string& w_q,
                        const std::string& w_p, const std::string& w_qp);

// Reformulated question vector (1 x d) from question and paragraph contexts.
nn::Var reformulation(nn::Graph& g, const EncoderModel& m, nn::Var cq, nn::Var cp);
nn::Var reformulation(nn::Graph& g, const EncoderModel& m, const corpus::Tokens& question,
                      const corpus::Paragraph& p);

// q_s = w1 + w2 * q + w3 q.
nn::Var search_vector(nn::Graph& g, nn::Var q);
// Per-sentence relevance logits s_i . q_s + w4 . q + b (k x 1).
nn::Var relevance_logits(nn::Graph& g, nn::Var sentences, nn::Var q);
// Largest per-sentence logit (1 x 1); sigmoid of it is the relevance score.
nn::Var relevance_logit(nn::Graph& g, nn::Var sentences, nn::Var q);

// ---- plain-value interface (evaluation mode)

struct SentenceEncodings {
  std::string paragraph_id;
  Matrix sentences;  // k x d
};

struct QuestionEncoding {
  RowVector q;
  // Set for reformulated encodings: the paragraph that produced them.
  std::string reformulated_by;
};

struct SearchVector {
  RowVector q_s;
  int iteration = 1;
};

struct AttentionOutputs {
  Matrix scores;
  Matrix alpha;
  Matrix attended;
  Matrix maxima;
  Matrix beta;
  RowVector paragraph;
};

Matrix embed_tokens(const EncoderModel& m, const corpus::Tokens& tokens);
// Columnwise max over consecutive row groups of the given lengths.
Matrix sentence_max_pool(const Matrix& contextual, const std::vector<std::size_t>& lengths);
SentenceEncodings encode_paragraph(const EncoderModel& m, const corpus::Paragraph& p);
QuestionEncoding encode_question(const EncoderModel& m, const corpus::Tokens& question);
AttentionOutputs bidirectional_attention(const Matrix& cq, const Matrix& cp,
                                         const nn::ParameterStore& params);
QuestionEncoding reformulate(const EncoderModel& m, const corpus::Tokens& question,
                             const corpus::Paragraph& p);
SearchVector derive_search_vector(const QuestionEncoding& enc, const nn::ParameterStore& params,
                                  int iteration = 1);
// The constant part w4 . q + b of every sentence logit.
double relevance_offset(const RowVector& q, const nn::ParameterStore& params);
double relevance_logit(const Matrix& sentences, const RowVector& q, const nn::ParameterStore& params);
double relevance_score(const SentenceEncodings& s, const QuestionEncoding& enc,
                       const nn::ParameterStore& params);

double sigmoid(double x);

}  // namespace muppet::encoder
