#include "muppet/encoder/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "muppet/common/error.hpp"
#include "muppet/nn/char_cnn.hpp"
#include "muppet/nn/gru.hpp"

namespace muppet::encoder {

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path, const char* suffix) {
  return std::filesystem::path(path.string() + suffix);
}

// Sequential f64 dot product. The index uses the same loop so that dense
// search and relevance scoring agree bit for bit.
double dot(const RowVector& a, const Matrix& rows, Index r) {
  double total = 0.0;
  for (Index j = 0; j < a.size(); ++j) total += rows(r, j) * a(j);
  return total;
}

}  // namespace

void EncoderConfig::validate() const {
  if (encoding_dim < 2 || encoding_dim % 2 != 0) {
    throw ValidationError("encoder: encoding_dim must be even and >= 2");
  }
  if (word_dim < 1 || char_dim < 1 || char_filters < 1) {
    throw ValidationError("encoder: embedding sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("encoder: dropout must be in [0,1)");
}

EncoderConfig EncoderConfig::from_config(const Config& c) {
  EncoderConfig out;
  out.encoding_dim = c.get_int("encoding_dim", out.encoding_dim);
  out.word_dim = c.get_int("word_dim", out.word_dim);
  out.char_dim = c.get_int("char_dim", out.char_dim);
  out.char_filters = c.get_int("char_filters", out.char_filters);
  out.dropout = c.get_double("dropout", out.dropout);
  out.pretrained_vectors = c.get_string("pretrained_vectors", "");
  out.validate();
  return out;
}

Config EncoderConfig::to_config() const {
  Config c;
  c.set("encoding_dim", std::to_string(encoding_dim));
  c.set("word_dim", std::to_string(word_dim));
  c.set("char_dim", std::to_string(char_dim));
  c.set("char_filters", std::to_string(char_filters));
  std::ostringstream drop;
  drop.precision(17);
  drop << dropout;
  c.set("dropout", drop.str());
  if (!pretrained_vectors.empty()) c.set("pretrained_vectors", pretrained_vectors);
  return c;
}

void add_text_layers(nn::ParameterStore& store, const std::string& prefix, std::size_t vocab_size,
                     Index word_dim, Index char_dim, Index char_filters, Index hidden,
                     std::mt19937_64& rng) {
  store.add(prefix + ".word", static_cast<Index>(vocab_size), word_dim, nn::Init::kUnit, rng);
  store.add(prefix + ".char.chars", 256, char_dim, nn::Init::kGlorot, rng);
  store.add(prefix + ".char.filters", nn::kCharFilterWidth * char_dim, char_filters, nn::Init::kGlorot, rng);
  store.add_zero(prefix + ".char.bias", 1, char_filters);
  nn::add_bigru(store, prefix + ".gru", word_dim + char_filters, hidden, rng);
}

EncoderModel EncoderModel::create(const EncoderConfig& config, Vocabulary vocab, std::uint64_t seed) {
  config.validate();
  EncoderModel m{config, std::move(vocab), {}};
  std::mt19937_64 rng(seed);
  const Index d = config.encoding_dim;
  auto& s = m.params;
  add_text_layers(s, "enc", m.vocab.size(), config.word_dim, config.char_dim, config.char_filters, d / 2, rng);
  s.add(names::kAttQ, 1, d, nn::Init::kGlorot, rng);
  s.add(names::kAttP, 1, d, nn::Init::kGlorot, rng);
  s.add(names::kAttQP, 1, d, nn::Init::kGlorot, rng);
  s.add(names::kLinW, 4 * d, d, nn::Init::kGlorot, rng);
  s.add_zero(names::kLinB, 1, d);
  nn::add_bigru(s, names::kResGru, 4 * d, d / 2, rng);
  s.add(names::kResW, d, d, nn::Init::kGlorot, rng);
  s.add_zero(names::kResB, 1, d);
  s.add(names::kScoreW1, 1, d, nn::Init::kGlorot, rng);
  s.add(names::kScoreW2, 1, d, nn::Init::kGlorot, rng);
  s.add_zero(names::kScoreW3, 1, 1)(0, 0) = 1.0;
  s.add(names::kScoreW4, 1, d, nn::Init::kGlorot, rng);
  s.add_zero(names::kScoreB, 1, 1);
  if (!config.pretrained_vectors.empty()) load_pretrained_vectors(m, config.pretrained_vectors);
  return m;
}

void EncoderModel::save(const std::filesystem::path& path) const {
  params.save(path);
  vocab.save(sidecar(path, ".vocab"));
  config.to_config().save(sidecar(path, ".cfg"));
}

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
  auto config = EncoderConfig::from_config(Config::load(sidecar(path, ".cfg")));
  config.pretrained_vectors.clear();  // the stored weights already include them
  auto vocab = Vocabulary::load(sidecar(path, ".vocab"));
  auto model = create(config, std::move(vocab), 0);
  auto loaded = nn::ParameterStore::load(path);
  if (!model.params.same_shapes(loaded)) {
    throw ValidationError("encoder checkpoint " + path.string() + " does not match its config");
  }
  model.params = std::move(loaded);
  return model;
}

std::size_t load_pretrained_vectors(EncoderModel& model, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read pretrained vectors " + path.string());
  auto& table = model.params.at(names::kWord);
  std::size_t set = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (static_cast<Index>(values.size()) != table.cols()) {
      throw ParseError(path.string(), line_no,
                       "expected " + std::to_string(table.cols()) + " values, got " + std::to_string(values.size()));
    }
    const Index row = model.vocab.id(corpus::Token::make(word).normalized);
    if (row == Vocabulary::kOov) continue;
    for (Index j = 0; j < table.cols(); ++j) table(row, j) = values[static_cast<std::size_t>(j)];
    ++set;
  }
  return set;
}

nn::Var embed_tokens(nn::Graph& g, const Vocabulary& vocab, const corpus::Tokens& tokens,
                     const std::string& prefix) {
  if (tokens.empty()) throw ValidationError("cannot embed an empty token sequence");
  std::vector<std::string> surfaces;
  surfaces.reserve(tokens.size());
  for (const auto& t : tokens) surfaces.push_back(t.surface);
  const auto words = g.gather_rows(g.param(prefix + ".word"), vocab.ids(tokens));
  const auto chars = g.char_cnn(surfaces, prefix + ".char");
  return g.concat_cols({words, chars});
}

nn::Var contextualize(nn::Graph& g, const Vocabulary& vocab, const corpus::Tokens& tokens,
                      double dropout, const std::string& prefix) {
  return g.bigru(g.dropout(embed_tokens(g, vocab, tokens, prefix), dropout), prefix + ".gru");
}

nn::Var paragraph_encoding(nn::Graph& g, const EncoderModel& m, const corpus::Paragraph& p) {
  const auto ctx = contextualize(g, m.vocab, p.tokens(), m.config.dropout);
  return g.segment_max(ctx, p.sentence_lengths());
}

nn::Var question_encoding(nn::Graph& g, const EncoderModel& m, const corpus::Tokens& question) {
  return g.max_rows(contextualize(g, m.vocab, question, m.config.dropout));
}

AttentionVars attention(nn::Graph& g, nn::Var cq, nn::Var cp, const std::string& w_q,
                        const std::string& w_p, const std::string& w_qp) {
  AttentionVars out;
  const auto q_term = g.matmul_nt(cq, g.param(w_q));                        // n_q x 1
  const auto p_term = g.matmul_nt(g.param(w_p), cp);                        // 1 x n_p
  const auto joint = g.matmul_nt(g.mul_row(cq, g.param(w_qp)), cp);        // n_q x n_p
  out.scores = g.add_row(g.add_col(joint, q_term), p_term);
  out.alpha = g.softmax_rows(out.scores);
  out.attended = g.matmul(out.alpha, cp);
  out.maxima = g.row_max(out.scores);
  out.beta = g.softmax_rows(g.transpose(out.maxima));
  out.paragraph = g.matmul(out.beta, cq);
  return out;
}

nn::Var reformulation(nn::Graph& g, const EncoderModel& m, nn::Var cq, nn::Var cp) {
  const auto att = attention(g, cq, cp, names::kAttQ, names::kAttP, names::kAttQP);
  const auto features = g.concat_cols(
      {cq, att.attended, g.mul(cq, att.attended), g.mul_row(att.attended, att.paragraph)});
  const auto direct = g.relu(g.linear(features, g.param(names::kLinW), g.param(names::kLinB)));
  const auto recurrent = g.bigru(g.dropout(features, m.config.dropout), names::kResGru);
  const auto residual = g.relu(g.linear(recurrent, g.param(names::kResW), g.param(names::kResB)));
  return g.max_rows(g.add(direct, residual));
}

nn::Var reformulation(nn::Graph& g, const EncoderModel& m, const corpus::Tokens& question,
                      const corpus::Paragraph& p) {
  const auto cq = contextualize(g, m.vocab, question, m.config.dropout);
  const auto cp = contextualize(g, m.vocab, p.tokens(), m.config.dropout);
  return reformulation(g, m, cq, cp);
}

nn::Var search_vector(nn::Graph& g, nn::Var q) {
  return g.add(g.add(g.param(names::kScoreW1), g.mul(g.param(names::kScoreW2), q)),
               g.scale_by(q, g.param(names::kScoreW3)));
}

nn::Var relevance_logits(nn::Graph& g, nn::Var sentences, nn::Var q) {
  const auto offset = g.add(g.matmul_nt(q, g.param(names::kScoreW4)), g.param(names::kScoreB));
  return g.add_scalar(g.matmul_nt(sentences, search_vector(g, q)), offset);
}

nn::Var relevance_logit(nn::Graph& g, nn::Var sentences, nn::Var q) {
  return g.max_rows(relevance_logits(g, sentences, q));
}

Matrix embed_tokens(const EncoderModel& m, const corpus::Tokens& tokens) {
  nn::Graph g(m.params);
  return g.value(embed_tokens(g, m.vocab, tokens));
}

Matrix sentence_max_pool(const Matrix& contextual, const std::vector<std::size_t>& lengths) {
  nn::ParameterStore empty;
  nn::Graph g(empty);
  return g.value(g.segment_max(g.constant(contextual), lengths));
}

SentenceEncodings encode_paragraph(const EncoderModel& m, const corpus::Paragraph& p) {
  nn::Graph g(m.params);
  return {p.id, g.value(paragraph_encoding(g, m, p))};
}

QuestionEncoding encode_question(const EncoderModel& m, const corpus::Tokens& question) {
  nn::Graph g(m.params);
  return {g.value(question_encoding(g, m, question)).row(0), {}};
}

AttentionOutputs bidirectional_attention(const Matrix& cq, const Matrix& cp, const nn::ParameterStore& params) {
  if (cq.rows() == 0 || cp.rows() == 0) throw ValidationError("attention: empty sequence");
  nn::Graph g(params);
  const auto a = attention(g, g.constant(cq), g.constant(cp), names::kAttQ, names::kAttP, names::kAttQP);
  return {g.value(a.scores), g.value(a.alpha), g.value(a.attended),
          g.value(a.maxima), g.value(a.beta),  g.value(a.paragraph).row(0)};
}

QuestionEncoding reformulate(const EncoderModel& m, const corpus::Tokens& question, const corpus::Paragraph& p) {
  nn::Graph g(m.params);
  return {g.value(reformulation(g, m, question, p)).row(0), p.id};
}

SearchVector derive_search_vector(const QuestionEncoding& enc, const nn::ParameterStore& params, int iteration) {
  const auto& w1 = params.at(names::kScoreW1);
  const auto& w2 = params.at(names::kScoreW2);
  const double w3 = params.at(names::kScoreW3)(0, 0);
  if (enc.q.size() != w1.cols()) throw ShapeError("search vector: encoding width does not match parameters");
  RowVector qs(enc.q.size());
  for (Index j = 0; j < qs.size(); ++j) qs(j) = w1(0, j) + w2(0, j) * enc.q(j) + w3 * enc.q(j);
  return {qs, iteration};
}

double relevance_offset(const RowVector& q, const nn::ParameterStore& params) {
  return dot(q, params.at(names::kScoreW4), 0) + params.at(names::kScoreB)(0, 0);
}

double relevance_logit(const Matrix& sentences, const RowVector& q, const nn::ParameterStore& params) {
  if (sentences.rows() == 0) throw ValidationError("relevance: paragraph has no sentences");
  if (sentences.cols() != q.size()) throw ShapeError("relevance: sentence width does not match encoding");
  const auto qs = derive_search_vector({q, {}}, params).q_s;
  double best = dot(qs, sentences, 0);
  for (Index i = 1; i < sentences.rows(); ++i) best = std::max(best, dot(qs, sentences, i));
  return best + relevance_offset(q, params);
}

double relevance_score(const SentenceEncodings& s, const QuestionEncoding& enc, const nn::ParameterStore& params) {
  return sigmoid(relevance_logit(s.sentences, enc.q, params));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace muppet::encoder
