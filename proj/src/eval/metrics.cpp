#include "muppet/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

#include "muppet/common/error.hpp"

namespace muppet::eval {

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool is_binary(const std::string& normalized) { return normalized == "yes" || normalized == "no" || normalized == "noanswer"; }

Score token_f1(const std::string& pred, const std::string& gold) {
  Score s;
  if ((is_binary(pred) || is_binary(gold)) && pred != gold) return s;
  const auto p = split_words(pred);
  const auto g = split_words(gold);
  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int same = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return s;
  s.precision = static_cast<double>(same) / static_cast<double>(p.size());
  s.recall = static_cast<double>(same) / static_cast<double>(g.size());
  s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

double mean(double total, std::size_t n) { return n == 0 ? 0.0 : total / static_cast<double>(n); }

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (const unsigned char c : text) {
    if (std::ispunct(c) != 0) continue;
    lowered.push_back(static_cast<char>(std::tolower(c)));
  }
  std::string out;
  for (const auto& w : split_words(lowered)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

Score answer_em_f1(std::string_view prediction, const std::vector<std::string>& golds) {
  Score best;
  const auto pred = normalize_answer(prediction);
  bool first = true;
  for (const auto& gold : golds) {
    const auto g = normalize_answer(gold);
    if (pred == g) best.em = 1.0;
    const auto s = token_f1(pred, g);
    if (first || s.f1 > best.f1) {
      best.f1 = s.f1;
      best.precision = s.precision;
      best.recall = s.recall;
      first = false;
    }
  }
  return best;
}

Score supporting_fact_metrics(const std::vector<corpus::SupportingFact>& predicted,
                              const std::vector<corpus::SupportingFact>& gold) {
  const std::set<corpus::SupportingFact> p(predicted.begin(), predicted.end());
  const std::set<corpus::SupportingFact> g(gold.begin(), gold.end());
  std::size_t tp = 0;
  for (const auto& f : p) tp += g.count(f);
  const std::size_t fp = p.size() - tp;
  const std::size_t fn = g.size() - tp;
  Score s;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.em = fp + fn == 0 ? 1.0 : 0.0;
  return s;
}

Score joint_metrics(const Score& answer, const Score& support) {
  Score s;
  s.precision = answer.precision * support.precision;
  s.recall = answer.recall * support.recall;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.em = answer.em * support.em;
  return s;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["count"] = count;
  j["missing"] = missing;
  j["answer_em"] = answer_em;
  j["answer_f1"] = answer_f1;
  j["sp_em"] = sp_em;
  j["sp_f1"] = sp_f1;
  j["joint_em"] = joint_em;
  j["joint_f1"] = joint_f1;
  if (!recall.empty()) {
    auto curve = nlohmann::ordered_json::array();
    for (const auto& r : recall) {
      curve.push_back({{"k", r.k}, {"at_least_one", r.at_least_one}, {"potentially_perfect", r.potentially_perfect}});
    }
    j["recall"] = std::move(curve);
  }
  return j.dump(2);
}

MetricReport evaluate(const std::vector<Prediction>& predictions, const std::vector<corpus::QAExample>& gold) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.question_id] = &p;
  MetricReport r;
  double a_em = 0, a_f1 = 0, s_em = 0, s_f1 = 0, j_em = 0, j_f1 = 0;
  for (const auto& ex : gold) {
    ++r.count;
    const auto it = by_id.find(ex.id);
    if (it == by_id.end()) {
      ++r.missing;
      continue;
    }
    const auto ans = answer_em_f1(it->second->answer, ex.answers);
    const auto sup = supporting_fact_metrics(it->second->supporting_facts, ex.supporting_facts);
    const auto joint = joint_metrics(ans, sup);
    a_em += ans.em;
    a_f1 += ans.f1;
    s_em += sup.em;
    s_f1 += sup.f1;
    j_em += joint.em;
    j_f1 += joint.f1;
  }
  r.answer_em = mean(a_em, r.count);
  r.answer_f1 = mean(a_f1, r.count);
  r.sp_em = mean(s_em, r.count);
  r.sp_f1 = mean(s_f1, r.count);
  r.joint_em = mean(j_em, r.count);
  r.joint_f1 = mean(j_f1, r.count);
  return r;
}

std::vector<Prediction> parse_predictions(std::string_view jsonl, const std::string& origin) {
  std::vector<Prediction> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.question_id = j.at("question_id").get<std::string>();
      p.answer = j.value("answer", std::string());
      if (j.contains("supporting_facts")) {
        for (const auto& f : j.at("supporting_facts")) {
          p.supporting_facts.push_back({f.at(0).get<std::string>(), f.at(1).get<std::size_t>()});
        }
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(origin, line_no, e.what());
    }
  }
  return out;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read predictions " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_predictions(buffer.str(), path.string());
}

std::vector<RecallPoint> recall_at_k(const std::vector<std::vector<std::vector<std::string>>>& rankings,
                                     const std::vector<std::vector<std::string>>& gold,
                                     const std::vector<std::size_t>& ks) {
  if (rankings.size() != gold.size()) throw ValidationError("recall_at_k: rankings and gold differ in length");
  std::vector<RecallPoint> curve;
  for (const auto k : ks) {
    if (k == 0) throw ValidationError("recall_at_k: k must be >= 1");
    RecallPoint point;
    point.k = k;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
      std::set<std::string> seen;
      for (std::size_t u = 0; u < k && u < rankings[q].size(); ++u) {
        seen.insert(rankings[q][u].begin(), rankings[q][u].end());
      }
      std::size_t found = 0;
      for (const auto& g : gold[q]) found += seen.count(g);
      if (found > 0) point.at_least_one += 1.0;
      if (!gold[q].empty() && found == gold[q].size()) point.potentially_perfect += 1.0;
    }
    point.at_least_one = mean(point.at_least_one, rankings.size());
    point.potentially_perfect = mean(point.potentially_perfect, rankings.size());
    curve.push_back(point);
  }
  return curve;
}

std::vector<RecallPoint> recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                                     const std::vector<std::vector<std::string>>& gold,
                                     const std::vector<std::size_t>& ks) {
  std::vector<std::vector<std::vector<std::string>>> units;
  units.reserve(rankings.size());
  for (const auto& r : rankings) {
    std::vector<std::vector<std::string>> u;
    u.reserve(r.size());
    for (const auto& id : r) u.push_back({id});
    units.push_back(std::move(u));
  }
  return recall_at_k(units, gold, ks);
}

std::string recall_csv(const std::vector<RecallPoint>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "k,at_least_one,potentially_perfect\n";
  for (const auto& p : curve) out << p.k << ',' << p.at_least_one << ',' << p.potentially_perfect << '\n';
  return out.str();
}

}  // namespace muppet::eval
