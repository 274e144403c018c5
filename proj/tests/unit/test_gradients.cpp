#include <doctest.h>

#include "muppet/nn/grad_check.hpp"
#include "muppet/trainer/trainer.hpp"
#include "synthetic.hpp"
#include "test_helpers.hpp"

using namespace muppet;

namespace {

std::vector<corpus::Tokens> questions_of(const std::vector<corpus::QAExample>& examples) {
  std::vector<corpus::Tokens> out;
  for (const auto& e : examples) out.push_back(e.question);
  return out;
}

}  // namespace

TEST_CASE("encoder batch loss gradient matches finite differences") {
  auto data = testing::make_bridge_dataset(2, 5, 1, 1);
  encoder::EncoderConfig cfg;
  cfg.encoding_dim = 8;
  cfg.word_dim = 6;
  cfg.char_dim = 3;
  cfg.char_filters = 4;
  auto model = encoder::EncoderModel::create(cfg, encoder::Vocabulary::build(data.ks, questions_of(data.examples)), 3);
  testing::randomize(model.params, 4, 0.4);

  trainer::HotpotSampler sampler(data.examples, data.ks, trainer::distractor_pools(data.examples, nullptr));
  std::mt19937_64 rng(6);
  std::vector<trainer::TrainingSample> batch;
  for (std::size_t q = 0; q < 2; ++q) {
    batch.push_back(sampler.draw(q, trainer::SampleType::kGold, rng));
    batch.push_back(sampler.draw(q, trainer::SampleType::kGoldDistractor, rng));
    batch.push_back(sampler.draw(q, trainer::SampleType::kDistractors, rng));
  }
  trainer::LossConfig loss;
  loss.margin = 1.0;
  loss.ranking_weight = 1.0;

  for (const auto mode : {nn::Mode::kEval, nn::Mode::kTrain}) {
    CAPTURE(static_cast<int>(mode));
    const nn::LossFn fn = [&](const nn::ParameterStore& p, nn::ParameterStore* grads) {
      auto m = model;
      m.params = p;
      return trainer::encoder_batch(m, data.examples, data.ks, batch, loss, mode, 9, grads).value;
    };
    const auto report = nn::grad_check(fn, model.params, 1e-3, 11, 300, 1e-5);
    CAPTURE(report.worst_parameter);
    CAPTURE(report.worst_analytic);
    CAPTURE(report.worst_numeric);
    CHECK(report.max_relative_error < 1e-3);
    CHECK(report.coordinates_checked == 300);
  }
}

TEST_CASE("reader losses have matching gradients for span and hotpot training") {
  auto data = testing::make_reader_dataset(1, 1, 8);
  reader::ReaderConfig cfg;
  cfg.word_dim = 6;
  cfg.char_dim = 3;
  cfg.char_filters = 4;
  cfg.hidden = 4;
  cfg.sup_hidden = 5;
  auto model = reader::ReaderModel::create(cfg, encoder::Vocabulary::build(data.ks, questions_of(data.examples)), 2);
  testing::randomize(model.params, 12, 0.4);

  const auto pools = trainer::distractor_pools(data.examples, nullptr);
  for (const auto kind : {trainer::DatasetKind::kHotpot, trainer::DatasetKind::kSquad}) {
    CAPTURE(static_cast<int>(kind));
    std::mt19937_64 rng(13);
    std::vector<std::vector<reader::ReaderContext>> contexts;
    std::vector<std::size_t> questions;
    for (std::size_t q = 0; q < data.examples.size(); ++q) {
      if (kind == trainer::DatasetKind::kSquad && data.examples[q].answer_kind != corpus::AnswerKind::kSpan) continue;
      auto ex = data.examples[q];
      if (kind == trainer::DatasetKind::kSquad) ex.gold_paragraph_ids = {ex.gold_paragraph_ids.back()};
      contexts.push_back(trainer::reader_contexts(ex, data.ks, pools[q], kind, rng));
      questions.push_back(q);
    }
    const nn::LossFn fn = [&](const nn::ParameterStore& p, nn::ParameterStore* grads) {
      auto m = model;
      m.params = p;
      const auto r = trainer::reader_batch(m, data.examples, questions, contexts, kind, nn::Mode::kEval, 1, grads);
      REQUIRE(r.skipped == 0);
      return r.loss;
    };
    const auto report = nn::grad_check(fn, model.params, 1e-3, 14, 300);
    CHECK(report.max_relative_error < 1e-3);
  }
}
