#include "muppet/corpus/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "muppet/common/error.hpp"

namespace muppet::corpus {

namespace {

using nlohmann::json;

std::vector<std::string> string_list(const json& record, const char* key, const std::string& origin,
                                     std::size_t line) {
  std::vector<std::string> out;
  if (!record.contains(key)) return out;
  const auto& list = record[key];
  if (!list.is_array()) throw ParseError(origin, line, std::string("'") + key + "' must be a list");
  for (const auto& v : list) {
    if (!v.is_string()) throw ParseError(origin, line, std::string("'") + key + "' entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

QAExample example_from_record(const json& record, HopMode mode, const std::string& origin,
                              std::size_t line) {
  if (!record.is_object()) throw ParseError(origin, line, "record is not an object");
  QAExample ex;
  if (!record.contains("id") || !record["id"].is_string()) {
    throw ParseError(origin, line, "missing string field 'id'");
  }
  ex.id = record["id"].get<std::string>();
  if (!record.contains("question") || !record["question"].is_string()) {
    throw ParseError(origin, line, "missing string field 'question'");
  }
  ex.question_text = record["question"].get<std::string>();
  ex.question = tokenize(ex.question_text);
  if (ex.question.empty()) throw ValidationError(origin + ":" + std::to_string(line) + ": empty question");

  ex.answers = string_list(record, "answers", origin, line);
  if (record.contains("answer")) {
    if (!record["answer"].is_string()) throw ParseError(origin, line, "'answer' must be a string");
    ex.answers.insert(ex.answers.begin(), record["answer"].get<std::string>());
  }
  ex.gold_paragraph_ids = string_list(record, "gold_paragraph_ids", origin, line);
  ex.distractor_ids = string_list(record, "distractor_ids", origin, line);

  if (record.contains("supporting_facts")) {
    const auto& facts = record["supporting_facts"];
    if (!facts.is_array()) throw ParseError(origin, line, "'supporting_facts' must be a list");
    for (const auto& f : facts) {
      if (!f.is_array() || f.size() != 2 || !f[0].is_string() || !f[1].is_number_integer() ||
          f[1].get<long long>() < 0) {
        throw ParseError(origin, line, "supporting fact must be [paragraph_id, sentence_index]");
      }
      ex.supporting_facts.push_back(
          {f[0].get<std::string>(), static_cast<std::size_t>(f[1].get<long long>())});
    }
  }

  const bool binary = record.value("binary", false);
  if (binary) {
    if (ex.answers.empty()) {
      throw ValidationError(origin + ":" + std::to_string(line) + ": binary question without answer");
    }
    const auto answer = tokenize(ex.answers.front());
    const auto word = answer.size() == 1 ? answer.front().normalized : std::string();
    if (word == "yes") {
      ex.answer_kind = AnswerKind::kYes;
    } else if (word == "no") {
      ex.answer_kind = AnswerKind::kNo;
    } else {
      throw ValidationError(origin + ":" + std::to_string(line) +
                            ": binary question answer must be yes or no");
    }
  }

  const std::size_t expected = mode == HopMode::kMultiHop ? 2 : 1;
  if (ex.gold_paragraph_ids.size() != expected) {
    throw ValidationError(origin + ":" + std::to_string(line) + ": expected " +
                          std::to_string(expected) + " gold paragraph ids, got " +
                          std::to_string(ex.gold_paragraph_ids.size()));
  }
  if (expected == 2 && ex.gold_paragraph_ids[0] == ex.gold_paragraph_ids[1]) {
    throw ValidationError(origin + ":" + std::to_string(line) + ": gold paragraph ids must differ");
  }
  const std::set<std::string> gold(ex.gold_paragraph_ids.begin(), ex.gold_paragraph_ids.end());
  for (const auto& f : ex.supporting_facts) {
    if (!gold.count(f.paragraph_id)) {
      throw ValidationError(origin + ":" + std::to_string(line) + ": supporting fact paragraph '" +
                            f.paragraph_id + "' is not a gold paragraph");
    }
  }
  return ex;
}

}  // namespace

std::string_view to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::kYes: return "yes";
    case AnswerKind::kNo: return "no";
    case AnswerKind::kSpan: break;
  }
  return "span";
}

std::vector<QAExample> parse_qa_dataset(std::string_view jsonl, HopMode mode, const std::string& origin) {
  std::vector<QAExample> out;
  std::set<std::string> ids;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(origin, line_no, std::string("malformed JSON: ") + e.what());
    }
    auto ex = example_from_record(record, mode, origin, line_no);
    if (!ids.insert(ex.id).second) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": duplicate example id '" + ex.id + "'");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<QAExample> load_qa_dataset(const std::filesystem::path& path, HopMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_qa_dataset(buffer.str(), mode, path.string());
}

void validate_against(const std::vector<QAExample>& examples, const KnowledgeSource& ks) {
  for (const auto& ex : examples) {
    for (const auto& id : ex.gold_paragraph_ids) {
      if (!ks.contains(id)) {
        throw ValidationError("example '" + ex.id + "': unknown gold paragraph '" + id + "'");
      }
    }
    for (const auto& id : ex.distractor_ids) {
      if (!ks.contains(id)) {
        throw ValidationError("example '" + ex.id + "': unknown distractor '" + id + "'");
      }
    }
    for (const auto& f : ex.supporting_facts) {
      if (f.sentence_index >= ks.at(f.paragraph_id).sentences.size()) {
        throw ValidationError("example '" + ex.id + "': supporting fact index " +
                              std::to_string(f.sentence_index) + " out of range for '" +
                              f.paragraph_id + "'");
      }
    }
  }
}

}  // namespace muppet::corpus
