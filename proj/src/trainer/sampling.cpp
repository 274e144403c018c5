#include <algorithm>
#include <cctype>
#include <set>

#include "muppet/common/error.hpp"
#include "muppet/trainer/trainer.hpp"

namespace muppet::trainer {

namespace {

bool has_word_char(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

template <typename Pred>
const std::string* pick(const std::vector<std::string>& items, Pred eligible, std::mt19937_64& rng) {
  if (items.empty()) return nullptr;
  std::uniform_int_distribution<std::size_t> any(0, items.size() - 1);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto& item = items[any(rng)];
    if (eligible(item)) return &item;
  }
  std::vector<const std::string*> rest;
  for (const auto& item : items) {
    if (eligible(item)) rest.push_back(&item);
  }
  if (rest.empty()) return nullptr;
  return rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
}

void append_hits(std::vector<std::string>& out, std::set<std::string>& seen, const std::vector<tfidf::Hit>& hits) {
  for (const auto& h : hits) {
    if (seen.insert(h.paragraph_id).second) out.push_back(h.paragraph_id);
  }
}

}  // namespace

std::string_view to_string(SampleType type) {
  switch (type) {
    case SampleType::kGold: return "gold";
    case SampleType::kGoldDistractor: return "gold+distractor";
    case SampleType::kDistractorGold: return "distractor+gold";
    case SampleType::kDistractors: return "distractors";
    case SampleType::kForeignGold: return "foreign-gold";
    case SampleType::kSingleHopPositive: return "single-hop-pos";
    case SampleType::kSingleHopNegative: return "single-hop-neg";
  }
  return "unknown";
}

const std::vector<std::string>& stopwords() {
  static const std::vector<std::string> words = {
      "a",  "an",   "the",  "of",    "in",  "on",  "at",   "to",   "for",   "by",
      "with", "from", "and", "or",   "is",  "was", "are",  "were", "be",    "it",
      "this", "that", "what", "which", "who", "whom", "how", "when", "where", "why"};
  return words;
}

bool only_stopwords(const corpus::Tokens& tokens) {
  const auto& list = stopwords();
  for (const auto& t : tokens) {
    if (!has_word_char(t.normalized)) continue;
    if (std::find(list.begin(), list.end(), t.normalized) == list.end()) return false;
  }
  return true;
}

std::vector<std::string> gather_squad_negatives(const corpus::QAExample& example, const corpus::KnowledgeSource& ks,
                                                const tfidf::TfidfIndex& paragraphs, std::mt19937_64& rng) {
  if (example.gold_paragraph_ids.empty()) throw ValidationError("question " + example.id + " has no gold paragraph");
  const auto& gold = example.gold_paragraph_ids.front();
  const auto gold_tokens = ks.at(gold).tokens();
  const auto& doc = ks.document_of(gold);

  std::vector<std::string> same_doc;
  for (const auto& id : ks.document_paragraphs(doc)) {
    if (id != gold) same_doc.push_back(id);
  }
  std::vector<std::string> firsts;
  for (const auto& other : ks.document_order()) {
    if (other == doc) continue;
    const auto& ids = ks.document_paragraphs(other);
    if (!ids.empty() && ids.front() != gold) firsts.push_back(ids.front());
  }

  std::vector<std::string> out;
  std::set<std::string> seen{gold};
  if (!same_doc.empty()) {
    append_hits(out, seen, paragraphs.top_n(example.question, 3, same_doc));
    append_hits(out, seen, paragraphs.top_n(gold_tokens, 3, same_doc));
  }
  if (!firsts.empty()) {
    append_hits(out, seen, paragraphs.top_n(example.question, 2, firsts));
    append_hits(out, seen, paragraphs.top_n(gold_tokens, 2, firsts));
  }
  const auto all = ks.paragraphs();
  std::vector<std::string> ids;
  ids.reserve(all.size());
  for (const auto& p : all) ids.push_back(p.id);
  for (int r = 0; r < 2; ++r) {
    const auto* id = pick(ids, [&](const std::string& s) { return seen.count(s) == 0; }, rng);
    if (id == nullptr) break;
    seen.insert(*id);
    out.push_back(*id);
  }
  return out;
}

std::vector<TrainingSample> build_squad_epoch(const std::vector<corpus::QAExample>& examples,
                                              const std::vector<std::vector<std::string>>& negatives,
                                              std::mt19937_64& rng) {
  if (negatives.size() != examples.size()) throw ValidationError("squad epoch: one negative list per question needed");
  std::vector<TrainingSample> samples;
  samples.reserve(examples.size() * 4);
  for (std::size_t q = 0; q < examples.size(); ++q) {
    const auto& negs = negatives[q];
    if (negs.empty()) throw ValidationError("squad epoch: question " + examples[q].id + " has no negatives");
    samples.push_back({q, examples[q].gold_paragraph_ids.front(), {}, 1, 0, SampleType::kSingleHopPositive});
    std::vector<std::string> drawn;
    if (negs.size() >= 3) {
      std::vector<std::string> pool = negs;
      for (std::size_t k = 0; k < 3; ++k) {
        std::uniform_int_distribution<std::size_t> d(k, pool.size() - 1);
        std::swap(pool[k], pool[d(rng)]);
        drawn.push_back(pool[k]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> d(0, negs.size() - 1);
      for (int k = 0; k < 3; ++k) drawn.push_back(negs[d(rng)]);
    }
    for (auto& id : drawn) samples.push_back({q, std::move(id), {}, 0, 0, SampleType::kSingleHopNegative});
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  return samples;
}

HotpotSampler::HotpotSampler(const std::vector<corpus::QAExample>& examples_in, const corpus::KnowledgeSource& ks_in,
                             std::vector<std::vector<std::string>> distractors_in)
    : examples(examples_in), ks(ks_in), distractors(std::move(distractors_in)) {
  if (distractors.size() != examples.size()) throw ValidationError("hotpot sampler: one distractor pool per question");
  std::set<std::string> pool;
  for (std::size_t q = 0; q < examples.size(); ++q) {
    if (examples[q].gold_paragraph_ids.size() != 2) {
      throw ValidationError("hotpot sampler: question " + examples[q].id + " needs two gold paragraphs");
    }
    for (const auto& id : examples[q].gold_paragraph_ids) pool.insert(id);
    for (const auto& id : distractors[q]) {
      if (!ks.contains(id)) throw ValidationError("hotpot sampler: unknown distractor '" + id + "'");
      pool.insert(id);
    }
  }
  training_paragraphs.assign(pool.begin(), pool.end());
}

SampleType HotpotSampler::draw_type(std::mt19937_64& rng) const {
  std::discrete_distribution<int> mix(kTypeMix.begin(), kTypeMix.end());
  switch (mix(rng)) {
    case 0: return SampleType::kGoldDistractor;
    case 1: return SampleType::kDistractorGold;
    case 2: return SampleType::kDistractors;
    default: return SampleType::kForeignGold;
  }
}

TrainingSample HotpotSampler::draw(std::size_t question, SampleType type, std::mt19937_64& rng) const {
  const auto& gold = examples.at(question).gold_paragraph_ids;
  const auto& pool = distractors[question];
  auto not_gold = [&](const std::string& id) { return id != gold[0] && id != gold[1]; };
  auto any_corpus = [&](const std::string& avoid) {
    const auto all = ks.paragraphs();
    std::uniform_int_distribution<std::size_t> d(0, all.size() - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const auto& id = all[d(rng)].id;
      if (not_gold(id) && id != avoid) return id;
    }
    for (const auto& p : all) {
      if (not_gold(p.id) && p.id != avoid) return p.id;
    }
    throw ValidationError("hotpot sampler: corpus has no non-gold paragraph");
  };
  auto random_training = [&](const std::string& avoid) {
    const auto* id = pick(training_paragraphs, [&](const std::string& s) { return not_gold(s) && s != avoid; }, rng);
    return id != nullptr ? *id : any_corpus(avoid);
  };
  auto distractor = [&](const std::string& avoid) {
    const auto* id = pick(pool, [&](const std::string& s) { return not_gold(s) && s != avoid; }, rng);
    return id != nullptr ? *id : any_corpus(avoid);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);

  TrainingSample s;
  s.question = question;
  s.type = type;
  switch (type) {
    case SampleType::kGold:
      s.p1 = gold[0];
      s.p2 = gold[1];
      s.y1 = 1;
      s.y2 = 1;
      break;
    case SampleType::kGoldDistractor: {
      s.p1 = gold[static_cast<std::size_t>(coin(rng))];
      const double u = unit(rng);
      if (u < 0.05) {
        s.p2 = random_training(s.p1);
      } else if (u < 0.15) {
        s.p2 = s.p1;
      } else {
        s.p2 = distractor(s.p1);
      }
      s.y1 = 1;
      break;
    }
    case SampleType::kDistractorGold:
      s.p1 = unit(rng) < 0.9 ? distractor({}) : random_training({});
      s.p2 = gold[static_cast<std::size_t>(coin(rng))];
      break;
    case SampleType::kForeignGold:
      if (examples.size() > 1) {
        std::uniform_int_distribution<std::size_t> other(0, examples.size() - 2);
        auto j = other(rng);
        if (j >= question) ++j;
        s.p1 = examples[j].gold_paragraph_ids[0];
        s.p2 = examples[j].gold_paragraph_ids[1];
        break;
      }
      s.type = SampleType::kDistractors;
      [[fallthrough]];
    case SampleType::kDistractors:
      s.p1 = distractor({});
      s.p2 = distractor(s.p1);
      break;
    default:
      throw ValidationError("hotpot sampler: single-hop sample type requested");
  }
  return s;
}

std::vector<TrainingSample> sample_hotpot_batch(const HotpotSampler& sampler, const std::vector<std::size_t>& questions,
                                                std::mt19937_64& rng) {
  std::vector<TrainingSample> batch;
  batch.reserve(questions.size() * 3);
  for (const auto q : questions) {
    batch.push_back(sampler.draw(q, SampleType::kGold, rng));
    for (int k = 0; k < 2; ++k) batch.push_back(sampler.draw(q, sampler.draw_type(rng), rng));
  }
  return batch;
}

std::vector<std::vector<std::string>> distractor_pools(const std::vector<corpus::QAExample>& examples,
                                                       const tfidf::TfidfIndex* index, std::size_t size) {
  std::vector<std::vector<std::string>> pools;
  pools.reserve(examples.size());
  for (const auto& e : examples) {
    if (!e.distractor_ids.empty() || index == nullptr) {
      pools.push_back(e.distractor_ids);
      continue;
    }
    std::vector<std::string> pool;
    for (const auto& hit : index->top_n(e.question, size + e.gold_paragraph_ids.size())) {
      if (std::find(e.gold_paragraph_ids.begin(), e.gold_paragraph_ids.end(), hit.paragraph_id) ==
          e.gold_paragraph_ids.end()) {
        pool.push_back(hit.paragraph_id);
      }
      if (pool.size() == size) break;
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

}  // namespace muppet::trainer
