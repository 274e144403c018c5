#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <memory>
#include <numeric>
#include <ostream>

#include "muppet/common/error.hpp"
#include "muppet/common/parallel.hpp"
#include "muppet/trainer/trainer.hpp"

namespace muppet::trainer {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

nn::Matrix scalar(double v) { return nn::Matrix::Constant(1, 1, v); }

void write_line(std::ostream* out, const nlohmann::ordered_json& j) {
  if (out != nullptr) *out << j.dump() << '\n' << std::flush;
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& items, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  }
  return out;
}

struct SampleGraph {
  std::unique_ptr<nn::Graph> graph;
  nn::Var first;
  nn::Var second;
};

}  // namespace

TrainConfig TrainConfig::from_config(const Config& c, DatasetKind kind) {
  TrainConfig t;
  t.kind = kind;
  if (kind == DatasetKind::kSquad) t.loss.ranking_weight = 0.0;
  if (kind == DatasetKind::kHotpot) t.loss.incomplete = IncompleteQuestions::kSkip;
  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 1) throw ValidationError(std::string("training: ") + key + " must be >= 1");
    return static_cast<std::size_t>(v);
  };
  t.epochs = count("epochs", t.epochs);
  t.questions_per_batch = count("questions_per_batch", t.questions_per_batch);
  t.batch_size = count("batch_size", t.batch_size);
  t.threads = count("threads", t.threads);
  t.loss.margin = c.get_double("margin", t.loss.margin);
  t.loss.ranking_weight = c.get_double("ranking_weight", t.loss.ranking_weight);
  t.optimizer.rho = c.get_double("rho", t.optimizer.rho);
  t.optimizer.epsilon = c.get_double("epsilon", t.optimizer.epsilon);
  t.optimizer.learning_rate = c.get_double("learning_rate", t.optimizer.learning_rate);
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(t.seed)));
  if (const auto policy = c.get("incomplete_questions")) {
    if (*policy == "reject") {
      t.loss.incomplete = IncompleteQuestions::kReject;
    } else if (*policy == "skip") {
      t.loss.incomplete = IncompleteQuestions::kSkip;
    } else {
      throw ValidationError("training: incomplete_questions must be 'reject' or 'skip', got '" + *policy + "'");
    }
  }
  t.loss.validate();
  return t;
}

EncoderLossResult encoder_batch(const encoder::EncoderModel& model, const std::vector<corpus::QAExample>& examples,
                                const corpus::KnowledgeSource& ks, const std::vector<TrainingSample>& batch,
                                const LossConfig& loss, nn::Mode mode, std::uint64_t seed, nn::ParameterStore* grads,
                                std::size_t threads) {
  std::vector<SampleGraph> graphs(batch.size());
  const double drop = model.config.dropout;
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto& s = batch[i];
    auto& sg = graphs[i];
    sg.graph = std::make_unique<nn::Graph>(model.params, mode, mix_seed(seed, i));
    auto& g = *sg.graph;
    const auto& question = examples.at(s.question).question;
    const auto& p1 = ks.at(s.p1);
    const auto cq = encoder::contextualize(g, model.vocab, question, drop);
    const auto q = g.max_rows(cq);
    const auto c1 = encoder::contextualize(g, model.vocab, p1.tokens(), drop);
    sg.first = encoder::relevance_logit(g, g.segment_max(c1, p1.sentence_lengths()), q);
    if (!s.p2.empty()) {
      const auto reformulated = encoder::reformulation(g, model, cq, c1);
      const auto s2 = encoder::paragraph_encoding(g, model, ks.at(s.p2));
      sg.second = encoder::relevance_logit(g, s2, reformulated);
    }
  });

  std::array<std::vector<RelevanceRecord>, kIterations> records;
  std::vector<std::size_t> second_slot(batch.size(), 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& g = *graphs[i].graph;
    records[0].push_back({batch[i].question, g.value(graphs[i].first)(0, 0), batch[i].y1});
    if (graphs[i].second.valid()) {
      second_slot[i] = records[1].size();
      records[1].push_back({batch[i].question, g.value(graphs[i].second)(0, 0), batch[i].y2});
    }
  }
  auto result = encoder_loss(records, loss);
  if (grads == nullptr) return result;

  parallel_for(batch.size(), threads, [&](std::size_t i) {
    auto& g = *graphs[i].graph;
    g.seed(graphs[i].first, scalar(result.grads[0][i]));
    if (graphs[i].second.valid()) g.seed(graphs[i].second, scalar(result.grads[1][second_slot[i]]));
    g.backward();
  });
  for (const auto& sg : graphs) sg.graph->accumulate_gradients(*grads);
  return result;
}

TrainReport train_encoder(encoder::EncoderModel& model, const std::vector<corpus::QAExample>& examples,
                          const corpus::KnowledgeSource& ks, const std::vector<std::vector<std::string>>& pools,
                          const TrainConfig& config) {
  config.loss.validate();
  if (examples.empty()) throw ValidationError("train_encoder: no training questions");
  if (pools.size() != examples.size()) throw ValidationError("train_encoder: one pool per question required");
  std::mt19937_64 rng(config.seed);
  nn::OptimizerState optimizer(model.params, config.optimizer);
  std::unique_ptr<HotpotSampler> sampler;
  if (config.kind == DatasetKind::kHotpot) sampler = std::make_unique<HotpotSampler>(examples, ks, pools);

  TrainReport report;
  nn::ParameterStore best;
  double best_dev = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::vector<TrainingSample>> batches;
    if (config.kind == DatasetKind::kHotpot) {
      std::vector<std::size_t> order(examples.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (const auto& questions : chunk(order, config.questions_per_batch)) {
        batches.push_back(sample_hotpot_batch(*sampler, questions, rng));
      }
    } else {
      const auto samples = build_squad_epoch(examples, pools, rng);
      for (std::size_t i = 0; i < samples.size(); i += config.batch_size) {
        batches.emplace_back(samples.begin() + static_cast<std::ptrdiff_t>(i),
                             samples.begin() + static_cast<std::ptrdiff_t>(std::min(samples.size(), i + config.batch_size)));
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      auto grads = model.params.zeros_like();
      const auto seed = rng();
      const auto result = encoder_batch(model, examples, ks, batches[b], config.loss, nn::Mode::kTrain, seed, &grads,
                                        config.threads);
      if (!std::isfinite(result.value)) {
        throw NumericError("train_encoder: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b) + " (ce " + std::to_string(result.cross_entropy[0]) + "/" +
                           std::to_string(result.cross_entropy[1]) + ")");
      }
      try {
        optimizer.step(model.params, grads);
      } catch (const NumericError& e) {
        throw NumericError("train_encoder: epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                           e.what());
      }
      stats.batches += 1;
      stats.mean_loss += result.value;
      for (int it = 0; it < kIterations; ++it) {
        stats.cross_entropy[it] += result.cross_entropy[it];
        stats.ranking[it] += result.ranking[it];
      }
      write_line(config.metrics, {{"event", "batch"},
                                  {"epoch", epoch},
                                  {"batch", b},
                                  {"loss", result.value},
                                  {"ce", result.cross_entropy},
                                  {"ranking", result.ranking}});
    }
    const auto n = static_cast<double>(std::max<std::size_t>(1, stats.batches));
    stats.mean_loss /= n;
    for (int it = 0; it < kIterations; ++it) {
      stats.cross_entropy[it] /= n;
      stats.ranking[it] /= n;
    }
    if (config.dev_metric) {
      stats.dev = config.dev_metric(epoch);
      if (stats.dev > best_dev) {
        best_dev = stats.dev;
        best = model.params;
        report.best_epoch = epoch;
      }
    } else {
      report.best_epoch = epoch;
    }
    if (!config.checkpoint_prefix.empty()) {
      model.save(config.checkpoint_prefix.string() + ".epoch" + std::to_string(epoch));
    }
    write_line(config.metrics, {{"event", "epoch"},
                                {"epoch", epoch},
                                {"loss", stats.mean_loss},
                                {"ce", stats.cross_entropy},
                                {"ranking", stats.ranking},
                                {"dev", stats.dev}});
    report.epochs.push_back(stats);
  }
  if (config.dev_metric && report.best_epoch != 0) model.params = std::move(best);
  return report;
}

std::vector<reader::ReaderContext> reader_contexts(const corpus::QAExample& example, const corpus::KnowledgeSource& ks,
                                                   const std::vector<std::string>& pool, DatasetKind kind,
                                                   std::mt19937_64& rng) {
  const auto& gold = example.gold_paragraph_ids;
  auto is_gold = [&](const std::string& id) { return std::find(gold.begin(), gold.end(), id) != gold.end(); };
  std::vector<std::string> negatives;
  for (const auto& id : pool) {
    if (!is_gold(id)) negatives.push_back(id);
  }
  if (negatives.empty()) {
    for (const auto& p : ks.paragraphs()) {
      if (!is_gold(p.id)) negatives.push_back(p.id);
    }
  }
  std::uniform_int_distribution<std::size_t> any(0, negatives.empty() ? 0 : negatives.size() - 1);
  std::uniform_int_distribution<int> coin(0, 1);

  std::vector<reader::ReaderContext> contexts;
  if (kind == DatasetKind::kHotpot) {
    if (gold.size() != 2) throw ValidationError("reader: question " + example.id + " needs two gold paragraphs");
    contexts.push_back(reader::ReaderContext::from_paragraphs({&ks.at(gold[0]), &ks.at(gold[1])}));
    for (int k = 0; k < 2 && !negatives.empty(); ++k) {
      const auto* g = &ks.at(gold[static_cast<std::size_t>(coin(rng))]);
      const auto* d = &ks.at(negatives[any(rng)]);
      contexts.push_back(coin(rng) == 0 ? reader::ReaderContext::from_paragraphs({g, d})
                                        : reader::ReaderContext::from_paragraphs({d, g}));
    }
  } else {
    contexts.push_back(reader::ReaderContext::from_paragraphs({&ks.at(gold.front())}));
    if (!negatives.empty()) {
      std::shuffle(negatives.begin(), negatives.end(), rng);
      for (std::size_t k = 0; k < 2 && k < negatives.size(); ++k) {
        contexts.push_back(reader::ReaderContext::from_paragraphs({&ks.at(negatives[k])}));
      }
    }
  }
  return contexts;
}

ReaderBatchResult reader_batch(const reader::ReaderModel& model, const std::vector<corpus::QAExample>& examples,
                               const std::vector<std::size_t>& questions,
                               const std::vector<std::vector<reader::ReaderContext>>& contexts, DatasetKind kind,
                               nn::Mode mode, std::uint64_t seed, nn::ParameterStore* grads, std::size_t threads) {
  if (contexts.size() != questions.size()) throw ValidationError("reader batch: one context list per question");
  const bool hotpot = kind == DatasetKind::kHotpot;
  struct Work {
    std::vector<std::unique_ptr<nn::Graph>> graphs;
    std::vector<reader::ReaderVars> vars;
    reader::LossResult loss;
    bool used = false;
  };
  std::vector<Work> work(questions.size());
  parallel_for(questions.size(), threads, [&](std::size_t k) {
    const auto& example = examples.at(questions[k]);
    const auto& ctxs = contexts[k];
    auto& w = work[k];
    std::vector<reader::ReaderOutput> outputs;
    for (std::size_t c = 0; c < ctxs.size(); ++c) {
      w.graphs.push_back(std::make_unique<nn::Graph>(model.params, mode, mix_seed(seed, k * 16 + c)));
      w.vars.push_back(reader::reader_graph(*w.graphs.back(), model, example.question, ctxs[c], hotpot));
      outputs.push_back(reader::output_of(*w.graphs.back(), w.vars.back()));
    }
    const auto gold = reader::make_gold(example, ctxs);
    const bool binary = example.answer_kind != corpus::AnswerKind::kSpan;
    const bool labelled = std::any_of(gold.spans.begin(), gold.spans.end(), [](const auto& s) { return !s.empty(); });
    if (!hotpot && binary) return;
    if (!binary && !labelled) return;
    w.loss = hotpot ? reader::hotpot_loss(outputs, gold) : reader::snorm_loss(outputs, gold.spans);
    w.used = true;
  });

  ReaderBatchResult result;
  for (const auto& w : work) {
    if (w.used) {
      result.loss += w.loss.value;
      ++result.questions;
    } else {
      ++result.skipped;
    }
  }
  if (result.questions == 0) return result;
  const double scale = 1.0 / static_cast<double>(result.questions);
  result.loss *= scale;
  if (grads == nullptr) return result;

  parallel_for(work.size(), threads, [&](std::size_t k) {
    auto& w = work[k];
    if (!w.used) return;
    for (std::size_t c = 0; c < w.graphs.size(); ++c) {
      auto& g = *w.graphs[c];
      const auto& d = w.loss.grads[c];
      const auto& v = w.vars[c];
      g.seed(v.start, scale * d.start);
      g.seed(v.end, scale * d.end);
      if (hotpot) {
        g.seed(v.type, scale * d.type);
        g.seed(v.yes_no, scale * d.yes_no);
        g.seed(v.sup, scale * d.sup);
      }
      g.backward();
    }
  });
  for (const auto& w : work) {
    if (!w.used) continue;
    for (const auto& g : w.graphs) g->accumulate_gradients(*grads);
  }
  return result;
}

TrainReport train_reader(reader::ReaderModel& model, const std::vector<corpus::QAExample>& examples,
                         const corpus::KnowledgeSource& ks, const std::vector<std::vector<std::string>>& pools,
                         const TrainConfig& config) {
  if (examples.empty()) throw ValidationError("train_reader: no training questions");
  if (pools.size() != examples.size()) throw ValidationError("train_reader: one pool per question required");
  std::mt19937_64 rng(config.seed);
  nn::OptimizerState optimizer(model.params, config.optimizer);
  TrainReport report;
  nn::ParameterStore best;
  double best_dev = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t b = 0;
    for (const auto& questions : chunk(order, config.questions_per_batch)) {
      std::vector<std::vector<reader::ReaderContext>> contexts;
      for (const auto q : questions) contexts.push_back(reader_contexts(examples[q], ks, pools[q], config.kind, rng));
      auto grads = model.params.zeros_like();
      const auto seed = rng();
      const auto result = reader_batch(model, examples, questions, contexts, config.kind, nn::Mode::kTrain, seed,
                                       &grads, config.threads);
      if (!std::isfinite(result.loss)) {
        throw NumericError("train_reader: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b));
      }
      if (result.questions > 0) {
        try {
          optimizer.step(model.params, grads);
        } catch (const NumericError& e) {
          throw NumericError("train_reader: epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                             e.what());
        }
        stats.mean_loss += result.loss;
        stats.batches += 1;
      }
      write_line(config.metrics, {{"event", "batch"},
                                  {"epoch", epoch},
                                  {"batch", b},
                                  {"loss", result.loss},
                                  {"questions", result.questions},
                                  {"skipped", result.skipped}});
      ++b;
    }
    stats.mean_loss /= static_cast<double>(std::max<std::size_t>(1, stats.batches));
    if (config.dev_metric) {
      stats.dev = config.dev_metric(epoch);
      if (stats.dev > best_dev) {
        best_dev = stats.dev;
        best = model.params;
        report.best_epoch = epoch;
      }
    } else {
      report.best_epoch = epoch;
    }
    if (!config.checkpoint_prefix.empty()) {
      model.save(config.checkpoint_prefix.string() + ".epoch" + std::to_string(epoch));
    }
    write_line(config.metrics, {{"event", "epoch"}, {"epoch", epoch}, {"loss", stats.mean_loss}, {"dev", stats.dev}});
    report.epochs.push_back(stats);
  }
  if (config.dev_metric && report.best_epoch != 0) model.params = std::move(best);
  return report;
}

}  // namespace muppet::trainer
