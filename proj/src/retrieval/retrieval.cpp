#include "muppet/retrieval/retrieval.hpp"

#include <algorithm>
#include <map>
#include <json.hpp>
#include <set>

#include "muppet/common/error.hpp"
#include "muppet/common/parallel.hpp"

namespace muppet::retrieval {

namespace {

std::vector<std::string> hit_ids(const std::vector<tfidf::Hit>& hits) {
  std::vector<std::string> ids;
  ids.reserve(hits.size());
  for (const auto& h : hits) ids.push_back(h.paragraph_id);
  return ids;
}

bool chain_before(const ParagraphChain& a, const ParagraphChain& b) {
  if (a.final_score != b.final_score) return a.final_score > b.final_score;
  return a.paragraph_ids < b.paragraph_ids;
}

}  // namespace

void RetrievalConfig::validate() const {
  if (beam_width < 1 || n1 < 1 || n2 < 1 || max_contexts < 1) {
    throw ValidationError("retrieval: beam width, n1, n2 and max contexts must be >= 1");
  }
  if (iterations != 1 && iterations != 2) throw ValidationError("retrieval: iterations must be 1 or 2");
}

std::size_t RetrievalConfig::fanout() const {
  if (second_fanout != 0) return second_fanout;
  return (2 * max_contexts + beam_width - 1) / beam_width;
}

RetrievalConfig RetrievalConfig::from_config(const Config& c) {
  RetrievalConfig out;
  auto size = [&](const char* key, std::size_t fallback) {
    const auto v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ValidationError(std::string("retrieval: ") + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  out.beam_width = size("beam_width", out.beam_width);
  out.second_fanout = size("second_fanout", out.second_fanout);
  out.n1 = size("n1", out.n1);
  out.n2 = size("n2", out.n2);
  out.max_contexts = size("max_contexts", out.max_contexts);
  out.iterations = static_cast<int>(c.get_int("iterations", out.iterations));
  out.validate();
  return out;
}

RetrievalBeam retrieve_iteration(const encoder::QuestionEncoding& enc, const std::vector<std::string>& candidates,
                                 const index::DenseIndex& index, const nn::ParameterStore& params,
                                 std::size_t width, int iteration) {
  RetrievalBeam beam;
  beam.iteration = iteration;
  if (candidates.empty()) return beam;
  const auto qs = encoder::derive_search_vector(enc, params, iteration);
  const double offset = encoder::relevance_offset(enc.q, params);
  for (const auto& hit : index.mips_top_k(qs.q_s, width, &candidates)) {
    const double score = encoder::sigmoid(hit.inner_product + offset);
    beam.chains.push_back({{hit.paragraph_id}, {score}, score});
  }
  return beam;
}

RetrievalResult multi_hop_retrieve(const corpus::Tokens& question, const corpus::KnowledgeSource& ks,
                                   const tfidf::CandidateRetriever& candidates, const index::DenseIndex& index,
                                   const encoder::EncoderModel& model, const RetrievalConfig& config,
                                   std::size_t threads) {
  config.validate();
  RetrievalResult result;
  const auto first = hit_ids(candidates.retrieve(question, config.n1));
  if (first.empty()) {
    result.no_candidates = true;
    return result;
  }
  const auto q = encoder::encode_question(model, question);
  if (config.iterations == 1) {
    result.chains = retrieve_iteration(q, first, index, model.params, config.max_contexts, 1).chains;
    return result;
  }

  const auto beam = retrieve_iteration(q, first, index, model.params, config.beam_width, 1);
  const auto second = hit_ids(candidates.retrieve(question, config.n2));
  std::vector<std::vector<ParagraphChain>> expanded(beam.chains.size());
  parallel_for(beam.chains.size(), threads, [&](std::size_t b) {
    const auto& head = beam.chains[b];
    const auto& pid = head.paragraph_ids.front();
    std::vector<std::string> pool;
    pool.reserve(second.size());
    for (const auto& id : second) {
      if (id != pid) pool.push_back(id);
    }
    const auto reformulated = encoder::reformulate(model, question, ks.at(pid));
    const auto hop = retrieve_iteration(reformulated, pool, index, model.params, config.fanout(), 2);
    for (const auto& tail : hop.chains) {
      expanded[b].push_back({{pid, tail.paragraph_ids.front()}, {head.scores.front(), tail.final_score},
                             tail.final_score});
    }
  });

  std::map<std::pair<std::string, std::string>, ParagraphChain> unique;
  for (auto& group : expanded) {
    for (auto& chain : group) {
      auto key = std::minmax(chain.paragraph_ids[0], chain.paragraph_ids[1]);
      std::pair<std::string, std::string> k{key.first, key.second};
      auto it = unique.find(k);
      if (it == unique.end()) {
        unique.emplace(std::move(k), std::move(chain));
      } else if (chain.final_score > it->second.final_score) {
        it->second = std::move(chain);
      }
    }
  }
  for (auto& [key, chain] : unique) result.chains.push_back(std::move(chain));
  std::sort(result.chains.begin(), result.chains.end(), chain_before);
  if (result.chains.size() > config.max_contexts) result.chains.resize(config.max_contexts);
  return result;
}

std::string result_to_json(const std::string& question, const RetrievalResult& result, const std::string& id) {
  nlohmann::ordered_json out;
  if (!id.empty()) out["id"] = id;
  out["question"] = question;
  auto chains = nlohmann::ordered_json::array();
  for (const auto& c : result.chains) {
    nlohmann::ordered_json chain;
    chain["paragraph_ids"] = c.paragraph_ids;
    chain["scores"] = c.scores;
    chain["final"] = c.final_score;
    chains.push_back(std::move(chain));
  }
  out["chains"] = std::move(chains);
  return out.dump();
}

std::vector<std::string> ranked_paragraphs(const std::vector<ParagraphChain>& chains) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& c : chains) {
    for (const auto& id : c.paragraph_ids) {
      if (seen.insert(id).second) out.push_back(id);
    }
  }
  return out;
}

}  // namespace muppet::retrieval
