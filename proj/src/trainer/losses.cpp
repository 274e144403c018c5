#include <cmath>
#include <map>

#include "muppet/common/error.hpp"
#include "muppet/trainer/trainer.hpp"

namespace muppet::trainer {

void LossConfig::validate() const {
  if (!(margin >= 0.0) || !(ranking_weight >= 0.0)) {
    throw ValidationError("loss: margin and ranking weight must be non-negative");
  }
}

double binary_cross_entropy(double logit, int label) {
  const double y = label != 0 ? 1.0 : 0.0;
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double ranking_term(double mean_pos, double mean_neg, double margin) {
  return std::max(0.0, margin - mean_pos + mean_neg);
}

EncoderLossResult encoder_loss(const std::array<std::vector<RelevanceRecord>, kIterations>& records,
                               const LossConfig& config) {
  config.validate();
  EncoderLossResult result;
  for (int it = 0; it < kIterations; ++it) {
    const auto& recs = records[it];
    auto& grad = result.grads[it];
    grad.assign(recs.size(), 0.0);
    if (recs.empty()) continue;
    const auto n = static_cast<double>(recs.size());
    double ce = 0.0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      ce += binary_cross_entropy(recs[i].logit, recs[i].label);
      grad[i] = (encoder::sigmoid(recs[i].logit) - (recs[i].label != 0 ? 1.0 : 0.0)) / n;
    }
    result.cross_entropy[it] = ce / n;

    if (config.ranking_weight > 0.0) {
      std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        auto& g = groups[recs[i].question];
        (recs[i].label != 0 ? g.first : g.second).push_back(i);
      }
      std::vector<const std::pair<std::vector<std::size_t>, std::vector<std::size_t>>*> used;
      for (const auto& [question, g] : groups) {
        if (g.first.empty() || g.second.empty()) {
          if (config.incomplete == IncompleteQuestions::kReject) {
            throw ValidationError("ranking loss: question " + std::to_string(question) + " in iteration " +
                                  std::to_string(it + 1) + " lacks " +
                                  (g.first.empty() ? "a positive" : "a negative") + " sample");
          }
          continue;
        }
        used.push_back(&g);
      }
      double total = 0.0;
      const auto m = static_cast<double>(used.size());
      for (const auto* g : used) {
        double pos = 0.0;
        double neg = 0.0;
        for (const auto i : g->first) pos += encoder::sigmoid(recs[i].logit);
        for (const auto i : g->second) neg += encoder::sigmoid(recs[i].logit);
        pos /= static_cast<double>(g->first.size());
        neg /= static_cast<double>(g->second.size());
        const double term = ranking_term(pos, neg, config.margin);
        total += term;
        if (term <= 0.0) continue;
        const double scale = config.ranking_weight / m;
        for (const auto i : g->first) {
          const double s = encoder::sigmoid(recs[i].logit);
          grad[i] -= scale * s * (1.0 - s) / static_cast<double>(g->first.size());
        }
        for (const auto i : g->second) {
          const double s = encoder::sigmoid(recs[i].logit);
          grad[i] += scale * s * (1.0 - s) / static_cast<double>(g->second.size());
        }
      }
      result.ranking[it] = used.empty() ? 0.0 : total / m;
    }
    result.value += result.cross_entropy[it] + config.ranking_weight * result.ranking[it];
  }
  return result;
}

}  // namespace muppet::trainer
