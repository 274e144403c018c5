#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "muppet/common/error.hpp"
#include "muppet/reader/reader.hpp"
#include "test_helpers.hpp"

using namespace muppet;
using namespace muppet::reader;
using corpus::AnswerKind;

namespace {

using Spans = std::vector<std::vector<std::pair<std::size_t, std::size_t>>>;

ReaderModel tiny_reader(const corpus::KnowledgeSource& ks, std::uint64_t seed) {
  ReaderConfig cfg;
  cfg.word_dim = 5;
  cfg.char_dim = 2;
  cfg.char_filters = 3;
  cfg.hidden = 4;
  cfg.sup_hidden = 6;
  auto m = ReaderModel::create(cfg, encoder::Vocabulary::build(ks), seed);
  testing::randomize(m.params, seed + 1, 0.6);
  return m;
}

corpus::KnowledgeSource small_corpus() {
  std::vector<corpus::Paragraph> ps = {
      corpus::make_paragraph("a", "A", "Anna was born in Oslo. She plays chess."),
      corpus::make_paragraph("b", "B", "Oslo is the capital of Norway."),
      corpus::make_paragraph("c", "C", "Chess is a board game. It has 64 squares. Kings matter."),
      corpus::make_paragraph("d", "D", "Word")};
  return corpus::KnowledgeSource(std::move(ps), corpus::CorpusMode::kParagraphPerDoc);
}

ReaderContext pair_of(const corpus::KnowledgeSource& ks, const std::string& x, const std::string& y) {
  return ReaderContext::from_paragraphs({&ks.at(x), &ks.at(y)});
}

ReaderOutput random_output(std::size_t tokens, std::size_t sentences, std::mt19937_64& rng, bool typed = true) {
  ReaderOutput o;
  o.start = testing::random_matrix(static_cast<Index>(tokens), 1, rng, 2.0).col(0);
  o.end = testing::random_matrix(static_cast<Index>(tokens), 1, rng, 2.0).col(0);
  if (typed) {
    o.type_logits = testing::random_matrix(1, 2, rng, 2.0).row(0);
    o.yes_no_logits = testing::random_matrix(1, 2, rng, 2.0).row(0);
    o.sup_logits = testing::random_matrix(static_cast<Index>(sentences), 1, rng, 3.0).col(0);
    o.sup_probs = o.sup_logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  return o;
}

// -log(sum over gold of e^s / sum over everything of e^s), by direct enumeration.
double direct_nll(const std::vector<const Vector*>& scores, const std::vector<std::vector<std::size_t>>& gold) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    for (Index i = 0; i < scores[c]->size(); ++i) den += std::exp((*scores[c])(i));
    for (const auto i : gold[c]) num += std::exp((*scores[c])(static_cast<Index>(i)));
  }
  return -std::log(num / den);
}

double direct_span_loss(const std::vector<ReaderOutput>& outs, const Spans& spans) {
  std::vector<const Vector*> s, e;
  std::vector<std::vector<std::size_t>> gs, ge;
  for (std::size_t c = 0; c < outs.size(); ++c) {
    s.push_back(&outs[c].start);
    e.push_back(&outs[c].end);
    std::vector<std::size_t> a, b;
    for (const auto& [x, y] : spans[c]) {
      if (std::find(a.begin(), a.end(), x) == a.end()) a.push_back(x);
      if (std::find(b.begin(), b.end(), y) == b.end()) b.push_back(y);
    }
    gs.push_back(a);
    ge.push_back(b);
  }
  return direct_nll(s, gs) + direct_nll(e, ge);
}

// Shared norm over (context, class) pairs of a 2-way head.
double direct_head(const std::vector<RowVector>& logits, Index target) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& l : logits) {
    den += std::exp(l(0)) + std::exp(l(1));
    num += std::exp(l(target));
  }
  return -std::log(num / den);
}

}  // namespace

TEST_CASE("reader output shapes follow the context") {
  const auto ks = small_corpus();
  const auto model = tiny_reader(ks, 1);
  const auto question = corpus::tokenize("Where was Anna born?");
  const auto ctx = pair_of(ks, "a", "b");
  const auto spans = read_spans(model, question, ctx);
  CHECK(spans.start.size() == static_cast<Index>(ctx.tokens.size()));
  CHECK(spans.end.size() == static_cast<Index>(ctx.tokens.size()));
  CHECK(spans.type_logits.size() == 0);

  const auto full = hotpot_forward(model, question, ctx);
  CHECK(full.type_logits.size() == 2);
  CHECK(full.yes_no_logits.size() == 2);
  CHECK(full.sup_probs.size() == 3);
  CHECK(full.start == spans.start);
  for (Index i = 0; i < full.sup_probs.size(); ++i) {
    CHECK(full.sup_probs(i) >= 0.0);
    CHECK(full.sup_probs(i) <= 1.0);
  }

  const auto single = ReaderContext::from_paragraphs({&ks.at("d")});
  REQUIRE(single.tokens.size() == 1);
  const auto one = hotpot_forward(model, question, single);
  CHECK(one.start.size() == 1);
  CHECK(one.end.size() == 1);
  CHECK(std::isfinite(one.start(0)));
  CHECK(one.sup_probs.size() == 1);
}

TEST_CASE("reader rejects oversized contexts") {
  const auto ks = small_corpus();
  const auto model = tiny_reader(ks, 2);
  ReaderContext ctx = ReaderContext::from_paragraphs({&ks.at("d")});
  ctx.tokens.assign(kMaxContextTokens + 1, ctx.tokens.front());
  ctx.sentence_lengths = {ctx.tokens.size()};
  CHECK_THROWS_AS(read_spans(model, corpus::tokenize("q"), ctx), ValidationError);
  CHECK_THROWS_AS(ReaderContext::from_paragraphs({}), ValidationError);
}

TEST_CASE("type head is independent of the context and sup head covers every sentence") {
  const auto ks = small_corpus();
  const auto model = tiny_reader(ks, 3);
  const auto question = corpus::tokenize("Is chess a board game?");
  const auto ab = pair_of(ks, "a", "b");
  const auto bc = pair_of(ks, "b", "c");
  const auto x = hotpot_forward(model, question, ab);
  const auto y = hotpot_forward(model, question, bc);
  CHECK(x.type_logits == y.type_logits);
  CHECK(x.sup_probs.size() == 3);
  CHECK(y.sup_probs.size() == 4);
  CHECK(bc.sentences[1] == corpus::SupportingFact{"c", 0});
  CHECK(bc.sentence_start(2) == ks.at("b").sentences[0].tokens.size() + ks.at("c").sentences[0].tokens.size());
  CHECK(bc.key() == "b|c");
}

TEST_CASE("snorm loss examples") {
  ReaderOutput o;
  o.start = Vector::Zero(10);
  o.end = Vector::Zero(10);
  auto r = snorm_loss({o}, Spans{{{3, 3}}});
  CHECK(r.span == doctest::Approx(2 * std::log(10.0)).epsilon(1e-12));
  // Two gold starts, one gold end.
  r = snorm_loss({o}, Spans{{{2, 6}, {5, 6}}});
  CHECK(r.span == doctest::Approx(std::log(5.0) + std::log(10.0)).epsilon(1e-12));
  CHECK(std::log(5.0) == doctest::Approx(1.6094).epsilon(1e-4));
  CHECK_THROWS_AS(snorm_loss({o}, Spans{{}}), ValidationError);
  CHECK_THROWS_AS(snorm_loss({o}, Spans{{{4, 3}}}), ValidationError);
  CHECK_THROWS_AS(snorm_loss({o}, Spans{{{3, 10}}}), ValidationError);
}

TEST_CASE("snorm loss matches direct normalization over three contexts") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ReaderOutput> outs;
    Spans spans(3);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto n = 3 + rng() % 8;
      outs.push_back(random_output(n, 1, rng, false));
      if (c != 1 || trial % 2 == 0) {
        const auto a = rng() % n;
        spans[c].push_back({a, a + rng() % (n - a)});
      }
    }
    const auto r = snorm_loss(outs, spans);
    CHECK(r.value == doctest::Approx(direct_span_loss(outs, spans)).epsilon(1e-12));
    // Probabilities over every (context, token) pair sum to one, so the
    // gradient entries cancel.
    double start_sum = 0.0;
    double end_sum = 0.0;
    for (const auto& g : r.grads) {
      start_sum += g.start.sum();
      end_sum += g.end.sum();
    }
    CHECK(std::abs(start_sum) < 1e-9);
    CHECK(std::abs(end_sum) < 1e-9);
  }
}

TEST_CASE("hotpot loss examples") {
  ReaderOutput o;
  o.start = Vector::Zero(4);
  o.end = Vector::Zero(4);
  o.type_logits = RowVector::Zero(2);
  o.yes_no_logits = RowVector::Zero(2);
  o.sup_logits = Vector::Zero(2);
  o.sup_probs = Vector::Constant(2, 0.5);
  ReaderGold gold;
  gold.kind = AnswerKind::kYes;
  gold.spans = {{}};
  gold.sup_labels = {{1.0, 0.0}};
  auto r = hotpot_loss({o}, gold);
  CHECK(r.type == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.yes_no == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.span == 0.0);
  CHECK(r.sup == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  gold.kind = AnswerKind::kSpan;
  gold.spans = {{{1, 2}}};
  r = hotpot_loss({o}, gold);
  CHECK(r.yes_no == 0.0);
  CHECK(r.grads[0].yes_no == RowVector::Zero(2));
  CHECK(r.span == doctest::Approx(2 * std::log(4.0)).epsilon(1e-12));

  gold.kind = AnswerKind::kNo;
  CHECK_THROWS_AS(hotpot_loss({o}, gold), ValidationError);
  ReaderOutput plain = o;
  plain.type_logits.resize(0);
  gold.kind = AnswerKind::kSpan;
  CHECK_THROWS_AS(hotpot_loss({plain}, gold), ValidationError);
}

TEST_CASE("hotpot loss equals its four terms summed independently") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ReaderOutput> outs;
    ReaderGold gold;
    const int kind = trial % 3;
    gold.kind = kind == 0 ? AnswerKind::kSpan : kind == 1 ? AnswerKind::kYes : AnswerKind::kNo;
    double bce = 0.0;
    std::size_t sentences = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      const auto n = 4 + rng() % 6;
      const auto k = 1 + rng() % 4;
      outs.push_back(random_output(n, k, rng));
      gold.spans.emplace_back();
      if (kind == 0 && (c == 0 || rng() % 2 == 0)) {
        const auto a = rng() % n;
        gold.spans.back().push_back({a, std::min<std::size_t>(n - 1, a + rng() % 3)});
      }
      std::vector<double> labels;
      for (std::size_t s = 0; s < k; ++s) {
        const double y = static_cast<double>(rng() % 2);
        const double p = outs.back().sup_probs(static_cast<Index>(s));
        bce += -(y * std::log(p) + (1 - y) * std::log(1 - p));
        labels.push_back(y);
        ++sentences;
      }
      gold.sup_labels.push_back(labels);
    }
    std::vector<RowVector> types, yns;
    for (const auto& o : outs) {
      types.push_back(o.type_logits);
      yns.push_back(o.yes_no_logits);
    }
    const double span = kind == 0 ? direct_span_loss(outs, gold.spans) : 0.0;
    const double type = direct_head(types, kind == 0 ? kTypeSpan : kTypeBinary);
    const double yn = kind == 0 ? 0.0 : direct_head(yns, kind == 1 ? kAnswerYes : kAnswerNo);
    const double sup = bce / static_cast<double>(sentences);
    const auto r = hotpot_loss(outs, gold);
    CHECK(r.span == doctest::Approx(span).epsilon(1e-12));
    CHECK(r.type == doctest::Approx(type).epsilon(1e-12));
    CHECK(r.yes_no == doctest::Approx(yn).epsilon(1e-12));
    CHECK(r.sup == doctest::Approx(sup).epsilon(1e-10));
    CHECK(r.value == doctest::Approx(span + type + yn + sup).epsilon(1e-10));
  }
}

TEST_CASE("answer spans and gold labels") {
  const auto ks = small_corpus();
  const auto ctx = pair_of(ks, "a", "b");
  const auto spans = find_answer_spans(ctx.tokens, {"Oslo", "capital of norway"});
  // "Oslo" at 4 and 11, "capital of Norway" at 14..16.
  REQUIRE(spans.size() == 3);
  CHECK(ctx.tokens[spans[0].first].surface == "Oslo");
  CHECK(ctx.tokens[spans[1].first].surface == "Oslo");
  CHECK(spans[2].second - spans[2].first == 2);
  corpus::QAExample ex;
  ex.id = "x";
  ex.answers = {"Oslo"};
  ex.supporting_facts = {{"a", 0}, {"b", 0}};
  const auto gold = make_gold(ex, {ctx, pair_of(ks, "c", "d")});
  CHECK(gold.spans[0].size() == 2);
  CHECK(gold.spans[1].empty());
  CHECK(gold.sup_labels[0] == std::vector<double>{1.0, 0.0, 1.0});
  CHECK(gold.sup_labels[1] == std::vector<double>{0.0, 0.0, 0.0, 0.0});
  ex.answer_kind = AnswerKind::kYes;
  ex.answers = {"yes"};
  CHECK(make_gold(ex, {ctx}).spans[0].empty());
}

TEST_CASE("predict_answer examples") {
  const auto ks = small_corpus();
  const auto ctx = ReaderContext::from_paragraphs({&ks.at("c")});
  REQUIRE(ctx.tokens.size() >= 8);
  ReaderOutput o;
  o.start = Vector::Zero(static_cast<Index>(ctx.tokens.size()));
  o.end = o.start;
  o.start(3) = 5.0;
  o.end(5) = 4.0;
  auto p = predict_answer({o}, {ctx}, 30);
  CHECK(p.kind == AnswerKind::kSpan);
  CHECK(p.span_start == 3);
  CHECK(p.span_end == 5);
  CHECK(p.confidence == 9.0);
  CHECK(p.answer == ctx.tokens[3].surface + " " + ctx.tokens[4].surface + " " + ctx.tokens[5].surface);
  CHECK(p.supporting_facts.empty());
  // A span limit of 2 excludes [3,5].
  p = predict_answer({o}, {ctx}, 2);
  CHECK(p.span_end - p.span_start < 2);

  o.type_logits = RowVector(2);
  o.type_logits << 0.0, 3.0;
  o.yes_no_logits = RowVector(2);
  o.yes_no_logits << 0.2, 1.5;
  o.sup_probs = Vector::Constant(3, 0.2);
  o.sup_probs(1) = 0.9;
  p = predict_answer({o}, {ctx});
  CHECK(p.kind == AnswerKind::kYes);
  CHECK(p.answer == "yes");
  CHECK(p.supporting_facts == std::vector<corpus::SupportingFact>{{"c", 1}});
  o.yes_no_logits << 1.5, 0.2;
  CHECK(predict_answer({o}, {ctx}).kind == AnswerKind::kNo);
  CHECK(prediction_to_json("q", predict_answer({o}, {ctx})) ==
        R"({"question_id":"q","answer":"no","kind":"no","supporting_facts":[["c",1]]})");
  CHECK_THROWS_AS(predict_answer({}, {}), ValidationError);
}

TEST_CASE("predict_answer falls back to the best valid pair") {
  std::mt19937_64 rng(11);
  const auto ks = small_corpus();
  const auto ctx = pair_of(ks, "a", "c");
  const auto n = static_cast<Index>(ctx.tokens.size());
  for (int trial = 0; trial < 30; ++trial) {
    ReaderOutput o;
    o.start = Vector::Constant(n, -5.0) + testing::random_matrix(n, 1, rng, 1.0).col(0);
    o.end = Vector::Constant(n, -5.0) + testing::random_matrix(n, 1, rng, 1.0).col(0);
    // End peak before the start peak.
    o.start(9) = 3.0;
    o.end(2) = 3.0;
    const std::size_t limit = 1 + rng() % 8;
    double best = -INFINITY;
    std::size_t bi = 0, bj = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (j < i || static_cast<std::size_t>(j - i) >= limit) continue;
        if (o.start(i) + o.end(j) > best) {
          best = o.start(i) + o.end(j);
          bi = static_cast<std::size_t>(i);
          bj = static_cast<std::size_t>(j);
        }
      }
    }
    const auto p = predict_answer({o}, {ctx}, limit);
    CHECK(p.span_start == bi);
    CHECK(p.span_end == bj);
    CHECK(p.confidence == best);
  }
}

TEST_CASE("predict_answer ignores context order and keeps facts in the answering context") {
  std::mt19937_64 rng(13);
  const auto ks = small_corpus();
  std::vector<ReaderContext> contexts = {pair_of(ks, "a", "b"), pair_of(ks, "b", "c"), pair_of(ks, "a", "c"),
                                         ReaderContext::from_paragraphs({&ks.at("d")})};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<ReaderOutput> outs;
    for (const auto& c : contexts) outs.push_back(random_output(c.tokens.size(), c.sentences.size(), rng));
    const auto p = predict_answer(outs, contexts);
    std::vector<std::size_t> perm(contexts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ReaderOutput> outs2;
    std::vector<ReaderContext> ctx2;
    for (const auto i : perm) {
      outs2.push_back(outs[i]);
      ctx2.push_back(contexts[i]);
    }
    const auto q = predict_answer(outs2, ctx2);
    CHECK(p.answer == q.answer);
    CHECK(p.kind == q.kind);
    CHECK(contexts[p.context].key() == ctx2[q.context].key());
    CHECK(p.supporting_facts == q.supporting_facts);
    const auto& ids = contexts[p.context].paragraph_ids;
    for (const auto& f : p.supporting_facts) {
      CHECK(std::find(ids.begin(), ids.end(), f.paragraph_id) != ids.end());
    }
    if (p.kind == AnswerKind::kSpan) CHECK(p.span_start <= p.span_end);
  }
}

TEST_CASE("reader checkpoint round trip") {
  const auto dir = testing::scratch_dir("reader");
  const auto ks = small_corpus();
  const auto model = tiny_reader(ks, 17);
  model.save(dir / "r.bin");
  const auto back = ReaderModel::load(dir / "r.bin");
  CHECK(back.params.same_shapes(model.params));
  const auto question = corpus::tokenize("Where was Anna born?");
  const auto ctx = pair_of(ks, "a", "b");
  const auto a = hotpot_forward(back, question, ctx);
  back.save(dir / "again.bin");
  CHECK(testing::read_bytes(dir / "r.bin") == testing::read_bytes(dir / "again.bin"));
  const auto b = hotpot_forward(ReaderModel::load(dir / "again.bin"), question, ctx);
  CHECK(a.start == b.start);
  CHECK(a.sup_probs == b.sup_probs);
}

TEST_CASE("reader config keys") {
  Config c;
  c.set("reader_hidden", "7");
  c.set("max_span", "12");
  const auto cfg = ReaderConfig::from_config(c);
  CHECK(cfg.hidden == 7);
  CHECK(cfg.max_span == 12);
  CHECK(cfg.sup_hidden == 150);
  CHECK(ReaderConfig::from_config(cfg.to_config()).hidden == 7);
  c.set("reader_dropout", "1.5");
  CHECK_THROWS_AS(ReaderConfig::from_config(c), ValidationError);
}
