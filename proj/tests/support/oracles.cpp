#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>

namespace muppet::oracle {

namespace {

std::uint32_t fnv_bin(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return static_cast<std::uint32_t>(h & ((1ull << 24) - 1));
}

std::map<std::uint32_t, double> bin_counts(const corpus::Tokens& tokens) {
  std::map<std::string, double> grams;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    grams[tokens[i].normalized] += 1;
    if (i + 1 < tokens.size()) grams[tokens[i].normalized + " " + tokens[i + 1].normalized] += 1;
  }
  std::map<std::uint32_t, double> bins;
  for (const auto& [g, c] : grams) bins[fnv_bin(g)] += c;
  return bins;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool binary(const std::string& s) { return s == "yes" || s == "no" || s == "noanswer"; }

void token_f1(const std::string& pred, const std::string& gold, double& p, double& r, double& f) {
  p = r = f = 0;
  if ((binary(pred) || binary(gold)) && pred != gold) return;
  const auto pw = words(pred);
  const auto gw = words(gold);
  std::vector<bool> used(gw.size(), false);
  int same = 0;
  for (const auto& w : pw) {
    for (std::size_t j = 0; j < gw.size(); ++j) {
      if (!used[j] && gw[j] == w) {
        used[j] = true;
        ++same;
        break;
      }
    }
  }
  if (same == 0) return;
  p = same / static_cast<double>(pw.size());
  r = same / static_cast<double>(gw.size());
  f = 2 * p * r / (p + r);
}

template <class T>
std::vector<T> unique(const std::vector<T>& v) {
  std::vector<T> out;
  for (const auto& x : v) {
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  }
  return out;
}

}  // namespace

std::vector<tfidf::Hit> tfidf_scan(const corpus::KnowledgeSource& ks, const corpus::Tokens& query, std::size_t n) {
  std::vector<std::map<std::uint32_t, double>> docs;
  std::map<std::uint32_t, double> df;
  for (const auto& p : ks.paragraphs()) {
    docs.push_back(bin_counts(p.tokens()));
    for (const auto& [bin, c] : docs.back()) df[bin] += 1;
  }
  const double total = static_cast<double>(docs.size());
  const auto q = bin_counts(query);
  std::vector<tfidf::Hit> hits;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double score = 0;
    for (const auto& [bin, c] : q) {
      const auto it = docs[d].find(bin);
      if (it == docs[d].end()) continue;
      const double idf = std::max(0.0, std::log((total - df[bin] + 0.5) / (df[bin] + 0.5)));
      score += static_cast<double>(static_cast<float>(c)) * static_cast<double>(static_cast<float>(it->second * idf));
    }
    hits.push_back({ks.paragraphs()[d].id, score});
  }
  std::sort(hits.begin(), hits.end(), [](const tfidf::Hit& a, const tfidf::Hit& b) {
    return a.score != b.score ? a.score > b.score : a.paragraph_id < b.paragraph_id;
  });
  if (hits.size() > n) hits.resize(n);
  return hits;
}

std::string normalize(const std::string& text) {
  std::string kept;
  for (const char c : text) {
    const bool punct = (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
                       (c >= '{' && c <= '~');
    if (punct) continue;
    kept += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : (c == '\t' || c == '\n' ? ' ' : c);
  }
  std::string out;
  for (const auto& w : words(kept)) {
    if (w == "a" || w == "an" || w == "the") continue;
    out += out.empty() ? w : " " + w;
  }
  return out;
}

Metrics metrics(const std::string& answer, const std::vector<corpus::SupportingFact>& facts,
                const std::vector<std::string>& gold_answers, const std::vector<corpus::SupportingFact>& gold_facts) {
  Metrics m;
  const auto pred = normalize(answer);
  bool first = true;
  for (const auto& g : gold_answers) {
    const auto gn = normalize(g);
    if (gn == pred) m.answer_em = 1;
    double p, r, f;
    token_f1(pred, gn, p, r, f);
    if (first || f > m.answer_f1) {
      m.answer_f1 = f;
      m.answer_precision = p;
      m.answer_recall = r;
      first = false;
    }
  }

  const auto pf = unique(facts);
  const auto gf = unique(gold_facts);
  double tp = 0;
  for (const auto& f : pf) tp += std::find(gf.begin(), gf.end(), f) != gf.end();
  m.sp_precision = pf.empty() ? 0 : tp / static_cast<double>(pf.size());
  m.sp_recall = gf.empty() ? 0 : tp / static_cast<double>(gf.size());
  m.sp_f1 = m.sp_precision + m.sp_recall > 0 ? 2 * m.sp_precision * m.sp_recall / (m.sp_precision + m.sp_recall) : 0;
  m.sp_em = (tp == static_cast<double>(pf.size()) && tp == static_cast<double>(gf.size())) ? 1 : 0;

  const double jp = m.answer_precision * m.sp_precision;
  const double jr = m.answer_recall * m.sp_recall;
  m.joint_f1 = jp + jr > 0 ? 2 * jp * jr / (jp + jr) : 0;
  m.joint_em = m.answer_em == 1 && m.sp_em == 1 ? 1 : 0;
  return m;
}

std::vector<MetricCase> random_metric_cases(std::size_t count, std::uint64_t seed) {
  static const std::vector<std::string> vocab = {"The", "a", "red", "Red", "fox", "fox.", "an", "1986", "to",
                                                 "2013", "club,", "(club)", "yes", "no", "Manchester"};
  std::mt19937_64 rng(seed);
  const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  const auto phrase = [&] {
    if (pick(6) == 0) return std::string(pick(2) ? "yes" : "No");
    std::string s;
    const auto len = pick(5);
    for (std::size_t i = 0; i < len; ++i) s += (i ? " " : "") + vocab[pick(vocab.size())];
    return s;
  };
  const auto fact_set = [&] {
    std::vector<corpus::SupportingFact> f;
    const auto n = pick(5);
    for (std::size_t i = 0; i < n; ++i) f.push_back({pick(2) ? "p1" : "p2", pick(3)});
    return f;
  };
  std::vector<MetricCase> out;
  for (std::size_t i = 0; i < count; ++i) {
    MetricCase c;
    const auto golds = 1 + pick(3);
    for (std::size_t g = 0; g < golds; ++g) c.gold_answers.push_back(phrase());
    c.answer = pick(3) == 0 ? c.gold_answers[pick(golds)] : phrase();
    c.gold_facts = fact_set();
    c.facts = pick(3) == 0 ? c.gold_facts : fact_set();
    out.push_back(std::move(c));
  }
  return out;
}

Recall recall(const std::vector<std::vector<std::vector<std::string>>>& rankings,
              const std::vector<std::vector<std::string>>& gold, std::size_t k) {
  Recall out;
  if (rankings.empty()) return out;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    std::vector<std::string> top;
    for (std::size_t u = 0; u < rankings[q].size() && u < k; ++u) {
      for (const auto& id : rankings[q][u]) top.push_back(id);
    }
    std::size_t hit = 0;
    for (const auto& g : gold[q]) hit += std::find(top.begin(), top.end(), g) != top.end();
    out.at_least_one += hit > 0;
    out.potentially_perfect += !gold[q].empty() && hit == gold[q].size();
  }
  out.at_least_one /= static_cast<double>(rankings.size());
  out.potentially_perfect /= static_cast<double>(rankings.size());
  return out;
}

}  // namespace muppet::oracle
