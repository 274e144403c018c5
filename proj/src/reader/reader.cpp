#include "muppet/reader/reader.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "muppet/common/error.hpp"
#include "muppet/encoder/encoder.hpp"
#include "muppet/nn/gru.hpp"

namespace muppet::reader {

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path, const char* suffix) {
  return std::filesystem::path(path.string() + suffix);
}

double log_sum_exp(const std::vector<double>& xs) {
  double peak = -std::numeric_limits<double>::infinity();
  for (const double x : xs) peak = std::max(peak, x);
  if (!std::isfinite(peak)) return peak;
  double total = 0.0;
  for (const double x : xs) total += std::exp(x - peak);
  return peak + std::log(total);
}

// -log(sum over gold entries of e^x / sum over all entries of e^x) for
// scores split across contexts, plus its gradient.
double shared_norm(const std::vector<const Vector*>& scores, const std::vector<std::vector<std::size_t>>& gold,
                   std::vector<Vector>& grads) {
  std::vector<double> all;
  std::vector<double> gold_scores;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    for (Index i = 0; i < scores[c]->size(); ++i) all.push_back((*scores[c])(i));
    for (const auto i : gold[c]) gold_scores.push_back((*scores[c])(static_cast<Index>(i)));
  }
  const double log_z = log_sum_exp(all);
  const double log_g = log_sum_exp(gold_scores);
  grads.resize(scores.size());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    grads[c] = ((scores[c]->array() - log_z).exp()).matrix();
    for (const auto i : gold[c]) grads[c](static_cast<Index>(i)) -= std::exp((*scores[c])(static_cast<Index>(i)) - log_g);
  }
  return log_z - log_g;
}

std::vector<std::size_t> unique_sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void check_outputs(const std::vector<ReaderOutput>& outputs, std::size_t contexts) {
  if (outputs.empty()) throw ValidationError("reader loss: no contexts");
  if (outputs.size() != contexts) throw ValidationError("reader loss: gold does not match the number of contexts");
}

double softmax_at(const RowVector& logits, Index k) {
  const double peak = logits.maxCoeff();
  return std::exp(logits(k) - peak) / (logits.array() - peak).exp().sum();
}

}  // namespace

void ReaderConfig::validate() const {
  if (word_dim < 1 || char_dim < 1 || char_filters < 1 || hidden < 1 || sup_hidden < 1) {
    throw ValidationError("reader: layer sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("reader: dropout must be in [0,1)");
  if (max_span < 1) throw ValidationError("reader: max_span must be >= 1");
  if (!(sup_threshold >= 0.0 && sup_threshold <= 1.0)) throw ValidationError("reader: sup_threshold must be in [0,1]");
}

ReaderConfig ReaderConfig::from_config(const Config& c) {
  ReaderConfig out;
  out.word_dim = c.get_int("reader_word_dim", out.word_dim);
  out.char_dim = c.get_int("reader_char_dim", out.char_dim);
  out.char_filters = c.get_int("reader_char_filters", out.char_filters);
  out.hidden = c.get_int("reader_hidden", out.hidden);
  out.sup_hidden = c.get_int("reader_sup_hidden", out.sup_hidden);
  out.dropout = c.get_double("reader_dropout", out.dropout);
  const auto span = c.get_int("max_span", static_cast<long long>(out.max_span));
  if (span < 1) throw ValidationError("reader: max_span must be >= 1");
  out.max_span = static_cast<std::size_t>(span);
  out.sup_threshold = c.get_double("sup_threshold", out.sup_threshold);
  out.validate();
  return out;
}

Config ReaderConfig::to_config() const {
  Config c;
  auto real = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  c.set("reader_word_dim", std::to_string(word_dim));
  c.set("reader_char_dim", std::to_string(char_dim));
  c.set("reader_char_filters", std::to_string(char_filters));
  c.set("reader_hidden", std::to_string(hidden));
  c.set("reader_sup_hidden", std::to_string(sup_hidden));
  c.set("reader_dropout", real(dropout));
  c.set("max_span", std::to_string(max_span));
  c.set("sup_threshold", real(sup_threshold));
  return c;
}

ReaderModel ReaderModel::create(const ReaderConfig& config, encoder::Vocabulary vocab, std::uint64_t seed) {
  config.validate();
  ReaderModel m{config, std::move(vocab), {}};
  std::mt19937_64 rng(seed);
  const Index h = config.hidden;
  const Index w = 2 * h;
  auto& s = m.params;
  encoder::add_text_layers(s, "rd", m.vocab.size(), config.word_dim, config.char_dim, config.char_filters, h, rng);
  for (const char* name : {"rd.att.wc", "rd.att.wq", "rd.att.wcq", "rd.self.w1", "rd.self.w2", "rd.self.w3"}) {
    s.add(name, 1, w, nn::Init::kGlorot, rng);
  }
  s.add("rd.att.W", 4 * w, w, nn::Init::kGlorot, rng);
  s.add_zero("rd.att.b", 1, w);
  nn::add_bigru(s, "rd.self.gru", w, h, rng);
  s.add("rd.self.W", 3 * w, w, nn::Init::kGlorot, rng);
  s.add_zero("rd.self.b", 1, w);
  nn::add_bigru(s, "rd.start.gru", w, h, rng);
  s.add("rd.start.W", w, 1, nn::Init::kGlorot, rng);
  s.add_zero("rd.start.b", 1, 1);
  nn::add_bigru(s, "rd.end.gru", 2 * w, h, rng);
  s.add("rd.end.W", w, 1, nn::Init::kGlorot, rng);
  s.add_zero("rd.end.b", 1, 1);
  s.add("rd.type.W", w, 2, nn::Init::kGlorot, rng);
  s.add_zero("rd.type.b", 1, 2);
  s.add("rd.yn.W", w, 2, nn::Init::kGlorot, rng);
  s.add_zero("rd.yn.b", 1, 2);
  nn::add_bigru(s, "rd.sp.gru", w, h, rng);
  s.add("rd.sp.W1", w, config.sup_hidden, nn::Init::kGlorot, rng);
  s.add_zero("rd.sp.b1", 1, config.sup_hidden);
  s.add("rd.sp.W2", config.sup_hidden, 1, nn::Init::kGlorot, rng);
  s.add_zero("rd.sp.b2", 1, 1);
  return m;
}

void ReaderModel::save(const std::filesystem::path& path) const {
  params.save(path);
  vocab.save(sidecar(path, ".vocab"));
  config.to_config().save(sidecar(path, ".cfg"));
}

ReaderModel ReaderModel::load(const std::filesystem::path& path) {
  const auto config = ReaderConfig::from_config(Config::load(sidecar(path, ".cfg")));
  auto model = create(config, encoder::Vocabulary::load(sidecar(path, ".vocab")), 0);
  auto loaded = nn::ParameterStore::load(path);
  if (!model.params.same_shapes(loaded)) {
    throw ValidationError("reader checkpoint " + path.string() + " does not match its config");
  }
  model.params = std::move(loaded);
  return model;
}

ReaderContext ReaderContext::from_paragraphs(const std::vector<const corpus::Paragraph*>& paragraphs) {
  if (paragraphs.empty()) throw ValidationError("reader context needs at least one paragraph");
  ReaderContext ctx;
  for (const auto* p : paragraphs) {
    ctx.paragraph_ids.push_back(p->id);
    for (std::size_t s = 0; s < p->sentences.size(); ++s) {
      const auto& tokens = p->sentences[s].tokens;
      ctx.tokens.insert(ctx.tokens.end(), tokens.begin(), tokens.end());
      ctx.sentence_lengths.push_back(tokens.size());
      ctx.sentences.push_back({p->id, s});
    }
  }
  return ctx;
}

std::string ReaderContext::key() const {
  std::string out;
  for (std::size_t i = 0; i < paragraph_ids.size(); ++i) {
    if (i > 0) out += '|';
    out += paragraph_ids[i];
  }
  return out;
}

std::size_t ReaderContext::sentence_start(std::size_t s) const {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < s; ++i) offset += sentence_lengths.at(i);
  return offset;
}

ReaderVars reader_graph(nn::Graph& g, const ReaderModel& m, const corpus::Tokens& question,
                        const ReaderContext& context, bool hotpot_heads) {
  if (context.tokens.size() > kMaxContextTokens) {
    throw ValidationError("reader: context of " + std::to_string(context.tokens.size()) + " tokens exceeds " +
                          std::to_string(kMaxContextTokens));
  }
  const double drop = m.config.dropout;
  const auto cq = encoder::contextualize(g, m.vocab, question, drop, "rd");
  const auto cc = encoder::contextualize(g, m.vocab, context.tokens, drop, "rd");

  // Context tokens attend over the question.
  const auto att = encoder::attention(g, cc, cq, "rd.att.wc", "rd.att.wq", "rd.att.wcq");
  const auto features =
      g.concat_cols({cc, att.attended, g.mul(cc, att.attended), g.mul_row(att.attended, att.paragraph)});
  const auto x = g.relu(g.linear(features, g.param("rd.att.W"), g.param("rd.att.b")));

  // Residual self-attention; a token never attends to itself.
  const auto hs = g.bigru(g.dropout(x, drop), "rd.self.gru");
  const auto scores = g.add_row(g.add_col(g.matmul_nt(g.mul_row(hs, g.param("rd.self.w3")), hs),
                                          g.matmul_nt(hs, g.param("rd.self.w1"))),
                                g.matmul_nt(g.param("rd.self.w2"), hs));
  const auto self_attended = g.matmul(g.softmax_rows(scores, true), hs);
  const auto y = g.relu(g.linear(g.concat_cols({hs, self_attended, g.mul(hs, self_attended)}),
                                 g.param("rd.self.W"), g.param("rd.self.b")));
  const auto r = g.add(x, y);

  ReaderVars out;
  const auto start_states = g.bigru(g.dropout(r, drop), "rd.start.gru");
  out.start = g.linear(start_states, g.param("rd.start.W"), g.param("rd.start.b"));
  const auto end_states = g.bigru(g.dropout(g.concat_cols({start_states, r}), drop), "rd.end.gru");
  out.end = g.linear(end_states, g.param("rd.end.W"), g.param("rd.end.b"));
  if (!hotpot_heads) return out;

  out.type = g.linear(g.max_rows(cq), g.param("rd.type.W"), g.param("rd.type.b"));
  out.yes_no = g.linear(g.max_rows(r), g.param("rd.yn.W"), g.param("rd.yn.b"));
  const auto sp = g.bigru(g.dropout(r, drop), "rd.sp.gru");
  const auto pooled = g.segment_max(sp, context.sentence_lengths);
  const auto hidden = g.relu(g.linear(pooled, g.param("rd.sp.W1"), g.param("rd.sp.b1")));
  out.sup = g.linear(hidden, g.param("rd.sp.W2"), g.param("rd.sp.b2"));
  return out;
}

ReaderOutput output_of(const nn::Graph& g, const ReaderVars& vars) {
  ReaderOutput out;
  out.start = g.value(vars.start).col(0);
  out.end = g.value(vars.end).col(0);
  if (vars.type.valid()) {
    out.type_logits = g.value(vars.type).row(0);
    out.yes_no_logits = g.value(vars.yes_no).row(0);
    out.sup_logits = g.value(vars.sup).col(0);
    out.sup_probs = out.sup_logits.unaryExpr([](double v) { return encoder::sigmoid(v); });
  }
  return out;
}

ReaderOutput read_spans(const ReaderModel& m, const corpus::Tokens& question, const ReaderContext& context) {
  nn::Graph g(m.params);
  return output_of(g, reader_graph(g, m, question, context, false));
}

ReaderOutput hotpot_forward(const ReaderModel& m, const corpus::Tokens& question, const ReaderContext& context) {
  nn::Graph g(m.params);
  return output_of(g, reader_graph(g, m, question, context, true));
}

std::vector<std::pair<std::size_t, std::size_t>> find_answer_spans(const corpus::Tokens& context,
                                                                   const std::vector<std::string>& answers) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& answer : answers) {
    const auto needle = corpus::tokenize(answer);
    if (needle.empty() || needle.size() > context.size()) continue;
    for (std::size_t i = 0; i + needle.size() <= context.size(); ++i) {
      bool match = true;
      for (std::size_t k = 0; k < needle.size() && match; ++k) {
        match = context[i + k].normalized == needle[k].normalized;
      }
      if (match) spans.emplace_back(i, i + needle.size() - 1);
    }
  }
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  return spans;
}

ReaderGold make_gold(const corpus::QAExample& example, const std::vector<ReaderContext>& contexts) {
  ReaderGold gold;
  gold.kind = example.answer_kind;
  for (const auto& ctx : contexts) {
    if (example.answer_kind == corpus::AnswerKind::kSpan) {
      gold.spans.push_back(find_answer_spans(ctx.tokens, example.answers));
    } else {
      gold.spans.emplace_back();
    }
    std::vector<double> labels;
    for (const auto& sentence : ctx.sentences) {
      const bool gold_sentence = std::find(example.supporting_facts.begin(), example.supporting_facts.end(),
                                           sentence) != example.supporting_facts.end();
      labels.push_back(gold_sentence ? 1.0 : 0.0);
    }
    gold.sup_labels.push_back(std::move(labels));
  }
  return gold;
}

LossResult snorm_loss(const std::vector<ReaderOutput>& outputs,
                      const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& spans) {
  check_outputs(outputs, spans.size());
  std::vector<const Vector*> starts;
  std::vector<const Vector*> ends;
  std::vector<std::vector<std::size_t>> gold_starts;
  std::vector<std::vector<std::size_t>> gold_ends;
  bool any = false;
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    starts.push_back(&outputs[c].start);
    ends.push_back(&outputs[c].end);
    std::vector<std::size_t> s;
    std::vector<std::size_t> e;
    for (const auto& [a, b] : spans[c]) {
      if (a > b || b >= static_cast<std::size_t>(outputs[c].start.size())) {
        throw ValidationError("snorm_loss: span outside the context");
      }
      s.push_back(a);
      e.push_back(b);
    }
    any = any || !s.empty();
    gold_starts.push_back(unique_sorted(std::move(s)));
    gold_ends.push_back(unique_sorted(std::move(e)));
  }
  if (!any) throw ValidationError("snorm_loss: no context contains the answer");
  LossResult result;
  std::vector<Vector> d_start;
  std::vector<Vector> d_end;
  result.span = shared_norm(starts, gold_starts, d_start) + shared_norm(ends, gold_ends, d_end);
  result.value = result.span;
  result.grads.resize(outputs.size());
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    result.grads[c].start = std::move(d_start[c]);
    result.grads[c].end = std::move(d_end[c]);
  }
  return result;
}

LossResult hotpot_loss(const std::vector<ReaderOutput>& outputs, const ReaderGold& gold) {
  check_outputs(outputs, gold.spans.size());
  if (gold.sup_labels.size() != outputs.size()) throw ValidationError("hotpot_loss: missing supporting-fact labels");
  const bool binary = gold.kind != corpus::AnswerKind::kSpan;
  for (const auto& s : gold.spans) {
    if (binary && !s.empty()) throw ValidationError("hotpot_loss: span offsets given for a yes/no question");
  }
  for (const auto& o : outputs) {
    if (o.type_logits.size() != 2 || o.yes_no_logits.size() != 2) {
      throw ValidationError("hotpot_loss: outputs lack the answer-type heads");
    }
  }

  LossResult result;
  if (binary) {
    result.grads.resize(outputs.size());
    for (std::size_t c = 0; c < outputs.size(); ++c) {
      result.grads[c].start = Vector::Zero(outputs[c].start.size());
      result.grads[c].end = Vector::Zero(outputs[c].end.size());
    }
  } else {
    result = snorm_loss(outputs, gold.spans);
  }

  // Shared-norm over (context, class) pairs for a two-way head.
  auto head = [&](auto logits_of, Index target, auto grad_of) {
    std::vector<double> all;
    std::vector<double> positive;
    for (const auto& o : outputs) {
      const RowVector& l = logits_of(o);
      all.push_back(l(0));
      all.push_back(l(1));
      positive.push_back(l(target));
    }
    const double log_z = log_sum_exp(all);
    const double log_p = log_sum_exp(positive);
    for (std::size_t c = 0; c < outputs.size(); ++c) {
      const RowVector& l = logits_of(outputs[c]);
      RowVector g = (l.array() - log_z).exp().matrix();
      g(target) -= std::exp(l(target) - log_p);
      grad_of(result.grads[c]) = g;
    }
    return log_z - log_p;
  };
  result.type = head([](const ReaderOutput& o) -> const RowVector& { return o.type_logits; },
                     binary ? kTypeBinary : kTypeSpan, [](OutputGradients& g) -> RowVector& { return g.type; });
  if (binary) {
    result.yes_no = head([](const ReaderOutput& o) -> const RowVector& { return o.yes_no_logits; },
                         gold.kind == corpus::AnswerKind::kYes ? kAnswerYes : kAnswerNo,
                         [](OutputGradients& g) -> RowVector& { return g.yes_no; });
  } else {
    for (auto& g : result.grads) g.yes_no = RowVector::Zero(2);
  }

  std::size_t sentences = 0;
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    if (static_cast<std::size_t>(outputs[c].sup_logits.size()) != gold.sup_labels[c].size()) {
      throw ValidationError("hotpot_loss: supporting-fact labels do not match sentence count");
    }
    sentences += gold.sup_labels[c].size();
  }
  double bce = 0.0;
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    const auto& x = outputs[c].sup_logits;
    Vector g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const double y = gold.sup_labels[c][static_cast<std::size_t>(i)];
      bce += std::max(x(i), 0.0) - x(i) * y + std::log1p(std::exp(-std::abs(x(i))));
      g(i) = (encoder::sigmoid(x(i)) - y) / static_cast<double>(sentences);
    }
    result.grads[c].sup = std::move(g);
  }
  result.sup = sentences == 0 ? 0.0 : bce / static_cast<double>(sentences);
  result.value = result.span + result.type + result.yes_no + result.sup;
  return result;
}

AnswerPrediction predict_answer(const std::vector<ReaderOutput>& outputs, const std::vector<ReaderContext>& contexts,
                                std::size_t max_span, double sup_threshold) {
  if (outputs.empty() || outputs.size() != contexts.size()) {
    throw ValidationError("predict_answer: need one output per context");
  }
  if (max_span < 1) throw ValidationError("predict_answer: max_span must be >= 1");
  std::vector<std::size_t> order(outputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return contexts[a].key() < contexts[b].key(); });

  AnswerPrediction pred;
  const bool typed = outputs.front().type_logits.size() == 2;
  if (typed) {
    std::size_t best = order.front();
    double best_binary = -1.0;
    double best_conf = -1.0;
    for (const auto c : order) {
      const double p = softmax_at(outputs[c].type_logits, kTypeBinary);
      const double conf = std::max(softmax_at(outputs[c].yes_no_logits, kAnswerYes),
                                   softmax_at(outputs[c].yes_no_logits, kAnswerNo));
      if (p > best_binary || (p == best_binary && conf > best_conf)) {
        best = c;
        best_binary = p;
        best_conf = conf;
      }
    }
    if (best_binary > 0.5) {
      const auto& yn = outputs[best].yes_no_logits;
      const bool yes = yn(kAnswerYes) > yn(kAnswerNo);
      pred.kind = yes ? corpus::AnswerKind::kYes : corpus::AnswerKind::kNo;
      pred.answer = yes ? "yes" : "no";
      pred.context = best;
      pred.confidence = yn.maxCoeff();
    }
  }
  if (pred.answer.empty()) {
    bool found = false;
    for (const auto c : order) {
      const auto& o = outputs[c];
      const auto n = static_cast<std::size_t>(o.start.size());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n && j - i < max_span; ++j) {
          const double score = o.start(static_cast<Index>(i)) + o.end(static_cast<Index>(j));
          if (!found || score > pred.confidence) {
            found = true;
            pred.confidence = score;
            pred.context = c;
            pred.span_start = i;
            pred.span_end = j;
          }
        }
      }
    }
    const auto& tokens = contexts[pred.context].tokens;
    for (std::size_t k = pred.span_start; k <= pred.span_end && k < tokens.size(); ++k) {
      if (k > pred.span_start) pred.answer += ' ';
      pred.answer += tokens[k].surface;
    }
  }
  if (typed) {
    const auto& probs = outputs[pred.context].sup_probs;
    const auto& sentences = contexts[pred.context].sentences;
    for (Index s = 0; s < probs.size() && static_cast<std::size_t>(s) < sentences.size(); ++s) {
      if (probs(s) > sup_threshold) pred.supporting_facts.push_back(sentences[static_cast<std::size_t>(s)]);
    }
  }
  return pred;
}

std::string prediction_to_json(const std::string& question_id, const AnswerPrediction& p) {
  nlohmann::ordered_json out;
  out["question_id"] = question_id;
  out["answer"] = p.answer;
  out["kind"] = std::string(corpus::to_string(p.kind));
  auto facts = nlohmann::ordered_json::array();
  for (const auto& f : p.supporting_facts) facts.push_back({f.paragraph_id, f.sentence_index});
  out["supporting_facts"] = std::move(facts);
  return out.dump();
}

}  // namespace muppet::reader
