#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "muppet/common/error.hpp"
#include "muppet/corpus/corpus.hpp"
#include "muppet/corpus/dataset.hpp"
#include "muppet/encoder/encoder.hpp"
#include "muppet/eval/metrics.hpp"
#include "muppet/index/dense_index.hpp"
#include "muppet/reader/reader.hpp"
#include "muppet/retrieval/retrieval.hpp"
#include "muppet/tfidf/tfidf.hpp"
#include "muppet/trainer/trainer.hpp"

namespace muppet::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Flag values collected by CLI11. Optional flags override config keys only
// when given on the command line.
struct Invocation {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;

  std::string input, output, corpus, train, tfidf, model, index, mode;
  std::string question, questions, reader, predictions, gold, retrievals, manifest, hop = "multi";
  std::string k_list = "1,2,5,10,20,45";
  bool paragraph_level = false, hotpot = false, squad = false, paragraphs = false;
  std::optional<int> iterations;
  std::optional<std::size_t> beam_width, n1, n2, top, epochs;
};

// Options shared by every subcommand.
void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--config", inv.config_path, "key = value configuration file (default: $MUPPET_CONFIG)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", inv.seed, "random seed");
  sub->add_option("--threads", inv.threads, "worker thread cap")->check(CLI::PositiveNumber);
}

void build_app(CLI::App& app, Invocation& inv) {
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "parse a JSONL corpus into a corpus store");
  ingest->add_option("--input", inv.input, "raw JSONL corpus")->required()->check(CLI::ExistingFile);
  ingest->add_option("--output", inv.output, "corpus store path")->required();
  ingest->add_option("--mode", inv.mode, "paragraph | multi");

  auto* tfidf = app.add_subcommand("tfidf-build", "build the hashed bigram TF-IDF index");
  tfidf->add_option("--corpus", inv.corpus)->required()->check(CLI::ExistingFile);
  tfidf->add_option("--output", inv.output)->required();
  tfidf->add_option("--mode", inv.mode, "paragraph | multi");

  auto* enc = app.add_subcommand("train-encoder", "train the retrieval encoder");
  enc->add_option("--corpus", inv.corpus)->required()->check(CLI::ExistingFile);
  enc->add_option("--train", inv.train, "JSONL training questions")->required()->check(CLI::ExistingFile);
  enc->add_option("--output", inv.output, "checkpoint path")->required();
  enc->add_option("--tfidf", inv.tfidf, "TF-IDF index (negatives / empty distractor lists)")
      ->check(CLI::ExistingFile);
  enc->add_option("--mode", inv.mode, "paragraph | multi");
  enc->add_option("--epochs", inv.epochs);
  auto* enc_hotpot = enc->add_flag("--hotpot", inv.hotpot, "two-hop training (default)");
  auto* enc_squad = enc->add_flag("--squad", inv.squad, "single-hop training");
  enc_hotpot->excludes(enc_squad);

  auto* idx = app.add_subcommand("index-build", "encode every sentence of the corpus");
  idx->add_option("--corpus", inv.corpus)->required()->check(CLI::ExistingFile);
  idx->add_option("--model", inv.model)->required()->check(CLI::ExistingFile);
  idx->add_option("--output", inv.output)->required();
  idx->add_option("--mode", inv.mode, "paragraph | multi");
  idx->add_flag("--paragraph-level", inv.paragraph_level, "one max-pooled vector per paragraph");

  auto* rd = app.add_subcommand("train-reader", "train the reader");
  rd->add_option("--corpus", inv.corpus)->required()->check(CLI::ExistingFile);
  rd->add_option("--train", inv.train)->required()->check(CLI::ExistingFile);
  rd->add_option("--output", inv.output)->required();
  rd->add_option("--tfidf", inv.tfidf)->check(CLI::ExistingFile);
  rd->add_option("--mode", inv.mode, "paragraph | multi");
  rd->add_option("--epochs", inv.epochs);
  auto* rd_hotpot = rd->add_flag("--hotpot", inv.hotpot, "answer type and supporting-fact heads (default)");
  auto* rd_squad = rd->add_flag("--squad", inv.squad, "span-only training");
  rd_hotpot->excludes(rd_squad);

  auto* q = app.add_subcommand("query", "retrieve paragraph chains for questions");
  q->add_option("--corpus", inv.corpus)->required()->check(CLI::ExistingFile);
  q->add_option("--tfidf", inv.tfidf)->required()->check(CLI::ExistingFile);
  q->add_option("--model", inv.model)->required()->check(CLI::ExistingFile);
  q->add_option("--index", inv.index)->required()->check(CLI::ExistingFile);
  q->add_option("--mode", inv.mode, "paragraph | multi");
  auto* q_text = q->add_option("--question", inv.question, "question text");
  auto* q_file = q->add_option("--questions", inv.questions, "JSONL with \"question\" and optional \"id\"")
                     ->check(CLI::ExistingFile);
  q_text->excludes(q_file);
  q->add_option("--iterations", inv.iterations)->check(CLI::Range(1, 2));
  q->add_option("--beam-width", inv.beam_width)->check(CLI::PositiveNumber);
  q->add_option("--n1", inv.n1)->check(CLI::PositiveNumber);
  q->add_option("--n2", inv.n2)->check(CLI::PositiveNumber);
  q->add_option("--top", inv.top, "chains kept per question")->check(CLI::PositiveNumber);
  q->add_option("--output", inv.output, "retrieval JSONL (default: stdout)");
  q->add_option("--reader", inv.reader, "reader checkpoint; answers the retrieved chains")
      ->check(CLI::ExistingFile);
  q->add_option("--predictions", inv.predictions, "prediction JSONL written when --reader is set");

  auto* ev = app.add_subcommand("eval", "answer, supporting-fact and joint metrics");
  ev->add_option("--predictions", inv.predictions)->required()->check(CLI::ExistingFile);
  ev->add_option("--gold", inv.gold)->required()->check(CLI::ExistingFile);
  ev->add_option("--hop", inv.hop, "single | multi")->check(CLI::IsMember({"single", "multi"}));
  ev->add_option("--output", inv.output, "report JSON (default: stdout)");

  auto* rc = app.add_subcommand("recall", "At-Least-One / Potentially-Perfect recall curve");
  rc->add_option("--retrievals", inv.retrievals, "query output JSONL")->required()->check(CLI::ExistingFile);
  rc->add_option("--gold", inv.gold)->required()->check(CLI::ExistingFile);
  rc->add_option("--k-list", inv.k_list, "comma separated cutoffs");
  rc->add_option("--hop", inv.hop, "single | multi")->check(CLI::IsMember({"single", "multi"}));
  rc->add_flag("--paragraphs", inv.paragraphs, "rank paragraphs instead of chains");
  rc->add_option("--output", inv.output, "CSV (default: stdout)");

  auto* rp = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  rp->add_option("--manifest", inv.manifest)->required()->check(CLI::ExistingFile);
  rp->add_option("--output", inv.output, "write the primary output here instead");

  for (auto* sub : app.get_subcommands({})) add_common(sub, inv);
}

corpus::CorpusMode parse_mode(const std::string& name) {
  if (name == "paragraph") return corpus::CorpusMode::kParagraphPerDoc;
  if (name == "multi") return corpus::CorpusMode::kMultiParagraphDocs;
  return corpus::corpus_mode_from_string(name);
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v <= 0) throw ValidationError("bad --k-list entry '" + item + "'");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw ValidationError("--k-list is empty");
  return ks;
}

class Runner {
 public:
  Runner(const Invocation& inv, RunManifest& manifest, std::ostream& out, std::ostream& err)
      : inv_(inv), m_(manifest), out_(out), err_(err) {}

  int dispatch() {
    const auto& cmd = m_.subcommand;
    if (cmd == "ingest") return ingest();
    if (cmd == "tfidf-build") return tfidf_build();
    if (cmd == "train-encoder") return train_encoder();
    if (cmd == "index-build") return index_build();
    if (cmd == "train-reader") return train_reader();
    if (cmd == "query") return query();
    if (cmd == "eval") return eval();
    if (cmd == "recall") return recall();
    throw ValidationError("unknown subcommand " + cmd);
  }

 private:
  const Config& cfg() const { return m_.config; }

  void log(const std::string& line) { err_ << "muppet " << m_.subcommand << ": " << line << "\n"; }

  // Corpus mode from --mode, the config, or the manifest of the corpus store.
  corpus::CorpusMode corpus_mode() {
    if (!inv_.mode.empty()) return parse_mode(inv_.mode);
    if (auto v = cfg().get("corpus_mode")) return parse_mode(*v);
    const auto mp = manifest_path(inv_.corpus);
    if (fs::exists(mp)) {
      if (auto v = RunManifest::load(mp).config.get("corpus_mode")) return parse_mode(*v);
    }
    return corpus::CorpusMode::kParagraphPerDoc;
  }

  corpus::KnowledgeSource load_corpus() {
    m_.inputs["corpus"] = inv_.corpus;
    const auto mode = corpus_mode();
    m_.config.set("corpus_mode", std::string(corpus::to_string(mode)));
    auto ks = corpus::ingest_corpus(inv_.corpus, mode);
    log("corpus: " + std::to_string(ks.size()) + " paragraphs");
    return ks;
  }

  void finish(const fs::path& artifact) {
    m_.outputs["output"] = artifact.string();
    m_.finished = utc_now();
    m_.save(manifest_path(artifact));
  }

  int ingest() {
    m_.inputs["input"] = inv_.input;
    const auto mode = parse_mode(inv_.mode.empty() ? cfg().get_string("corpus_mode", "paragraph") : inv_.mode);
    m_.config.set("corpus_mode", std::string(corpus::to_string(mode)));
    const auto ks = corpus::ingest_corpus(inv_.input, mode);
    corpus::save_corpus(ks, inv_.output);
    log(std::to_string(ks.size()) + " paragraphs in " + std::to_string(ks.document_order().size()) +
        " documents");
    finish(inv_.output);
    return kExitOk;
  }

  int tfidf_build() {
    const auto ks = load_corpus();
    const auto index = tfidf::TfidfIndex::build(ks);
    index.save(inv_.output);
    finish(inv_.output);
    return kExitOk;
  }

  trainer::DatasetKind kind() const {
    return inv_.squad ? trainer::DatasetKind::kSquad : trainer::DatasetKind::kHotpot;
  }

  std::vector<corpus::QAExample> load_training(const corpus::KnowledgeSource& ks) {
    m_.inputs["train"] = inv_.train;
    const auto hop = kind() == trainer::DatasetKind::kSquad ? corpus::HopMode::kSingleHop
                                                            : corpus::HopMode::kMultiHop;
    auto examples = corpus::load_qa_dataset(inv_.train, hop);
    corpus::validate_against(examples, ks);
    log(std::to_string(examples.size()) + " training questions");
    return examples;
  }

  std::optional<tfidf::TfidfIndex> load_tfidf() {
    if (inv_.tfidf.empty()) return std::nullopt;
    m_.inputs["tfidf"] = inv_.tfidf;
    return tfidf::TfidfIndex::load(inv_.tfidf);
  }

  // Distractor lists (hotpot) or gathered negatives (squad), one per question.
  std::vector<std::vector<std::string>> pools(const std::vector<corpus::QAExample>& examples,
                                              const corpus::KnowledgeSource& ks,
                                              const std::optional<tfidf::TfidfIndex>& index) {
    if (kind() == trainer::DatasetKind::kHotpot) {
      const auto size = static_cast<std::size_t>(cfg().get_int("distractor_pool_size", 10));
      return trainer::distractor_pools(examples, index ? &*index : nullptr, size);
    }
    if (!index) throw ValidationError("--squad training needs --tfidf for negative sampling");
    std::mt19937_64 rng(m_.seed ^ 0x5eedULL);
    std::vector<std::vector<std::string>> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(trainer::gather_squad_negatives(e, ks, *index, rng));
    return out;
  }

  encoder::Vocabulary vocabulary(const corpus::KnowledgeSource& ks, const std::vector<corpus::QAExample>& examples) {
    std::vector<corpus::Tokens> questions;
    for (const auto& e : examples) questions.push_back(e.question);
    const auto min_count = static_cast<std::size_t>(std::max<long long>(1, cfg().get_int("min_count", 1)));
    return encoder::Vocabulary::build(ks, questions, min_count);
  }

  trainer::TrainConfig train_config(std::ofstream& metrics) {
    if (inv_.epochs) m_.config.set("epochs", std::to_string(*inv_.epochs));
    auto tc = trainer::TrainConfig::from_config(cfg(), kind());
    tc.seed = m_.seed;
    tc.threads = m_.threads;
    const fs::path metrics_path = inv_.output + ".metrics.jsonl";
    metrics.open(metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + metrics_path.string());
    m_.outputs["metrics"] = metrics_path.string();
    tc.metrics = &metrics;
    if (cfg().get_bool("save_epochs", false)) tc.checkpoint_prefix = inv_.output;
    return tc;
  }

  void log_report(const trainer::TrainReport& report) {
    for (const auto& e : report.epochs) {
      std::ostringstream s;
      s << "epoch " << e.epoch << " batches " << e.batches << " loss " << e.mean_loss;
      log(s.str());
    }
  }

  int train_encoder() {
    const auto ks = load_corpus();
    const auto examples = load_training(ks);
    const auto index = load_tfidf();
    const auto p = pools(examples, ks, index);
    m_.config.set("dataset", kind() == trainer::DatasetKind::kSquad ? "squad" : "hotpot");
    auto model = encoder::EncoderModel::create(encoder::EncoderConfig::from_config(cfg()), vocabulary(ks, examples),
                                               m_.seed);
    std::ofstream metrics;
    const auto tc = train_config(metrics);
    const auto report = trainer::train_encoder(model, examples, ks, p, tc);
    log_report(report);
    model.save(inv_.output);
    finish(inv_.output);
    return kExitOk;
  }

  int index_build() {
    const auto ks = load_corpus();
    m_.inputs["model"] = inv_.model;
    const auto model = encoder::EncoderModel::load(inv_.model);
    const auto gran = inv_.paragraph_level ? index::DenseIndex::Granularity::kParagraph : index::DenseIndex::Granularity::kSentence;
    m_.config.set("index_granularity", inv_.paragraph_level ? "paragraph" : "sentence");
    const auto idx = index::DenseIndex::build(ks, model, gran, m_.threads);
    idx.save(inv_.output);
    finish(inv_.output);
    return kExitOk;
  }

  int train_reader() {
    const auto ks = load_corpus();
    const auto examples = load_training(ks);
    const auto index = load_tfidf();
    const auto p = pools(examples, ks, index);
    m_.config.set("dataset", kind() == trainer::DatasetKind::kSquad ? "squad" : "hotpot");
    auto model = reader::ReaderModel::create(reader::ReaderConfig::from_config(cfg()), vocabulary(ks, examples),
                                             m_.seed);
    std::ofstream metrics;
    const auto tc = train_config(metrics);
    const auto report = trainer::train_reader(model, examples, ks, p, tc);
    log_report(report);
    model.save(inv_.output);
    finish(inv_.output);
    return kExitOk;
  }

  struct Question {
    std::string id;
    std::string text;
  };

  std::vector<Question> load_questions() {
    if (!inv_.question.empty()) return {{"", inv_.question}};
    if (inv_.questions.empty()) throw ValidationError("query needs --question or --questions");
    m_.inputs["questions"] = inv_.questions;
    std::vector<Question> out;
    std::istringstream lines(read_file(inv_.questions));
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(inv_.questions, n, e.what());
      }
      if (!j.is_object() || !j.contains("question") || !j["question"].is_string())
        throw ValidationError(inv_.questions + ":" + std::to_string(n) + ": missing \"question\"");
      Question q;
      q.text = j["question"].get<std::string>();
      if (j.contains("id") && j["id"].is_string()) q.id = j["id"].get<std::string>();
      out.push_back(std::move(q));
    }
    return out;
  }

  int query() {
    if (inv_.iterations) m_.config.set("iterations", std::to_string(*inv_.iterations));
    if (inv_.beam_width) m_.config.set("beam_width", std::to_string(*inv_.beam_width));
    if (inv_.n1) m_.config.set("n1", std::to_string(*inv_.n1));
    if (inv_.n2) m_.config.set("n2", std::to_string(*inv_.n2));
    if (inv_.top) m_.config.set("max_contexts", std::to_string(*inv_.top));
    const auto rc = retrieval::RetrievalConfig::from_config(cfg());
    m_.config.set("beam_width", std::to_string(rc.beam_width));
    m_.config.set("second_fanout", std::to_string(rc.fanout()));
    m_.config.set("n1", std::to_string(rc.n1));
    m_.config.set("n2", std::to_string(rc.n2));
    m_.config.set("max_contexts", std::to_string(rc.max_contexts));
    m_.config.set("iterations", std::to_string(rc.iterations));
    if (!inv_.reader.empty() && inv_.predictions.empty())
      throw ValidationError("--reader needs --predictions");

    const auto questions = load_questions();
    const auto ks = load_corpus();
    m_.inputs["tfidf"] = inv_.tfidf;
    m_.inputs["model"] = inv_.model;
    m_.inputs["index"] = inv_.index;
    const auto paragraph_tfidf = tfidf::TfidfIndex::load(inv_.tfidf);
    const auto model = encoder::EncoderModel::load(inv_.model);
    const auto dense = index::DenseIndex::load(inv_.index);

    std::unique_ptr<tfidf::DocumentRetriever> documents;
    const tfidf::CandidateRetriever* candidates = &paragraph_tfidf;
    if (ks.mode() == corpus::CorpusMode::kMultiParagraphDocs) {
      const auto max_docs = static_cast<std::size_t>(cfg().get_int("max_documents", 10));
      documents = std::make_unique<tfidf::DocumentRetriever>(ks, paragraph_tfidf, max_docs);
      candidates = documents.get();
    }

    std::optional<reader::ReaderModel> rd;
    if (!inv_.reader.empty()) {
      m_.inputs["reader"] = inv_.reader;
      rd = reader::ReaderModel::load(inv_.reader);
    }

    std::ostringstream results, preds;
    for (const auto& q : questions) {
      const auto tokens = corpus::tokenize(q.text);
      const auto result = retrieval::multi_hop_retrieve(tokens, ks, *candidates, dense, model, rc, m_.threads);
      results << retrieval::result_to_json(q.text, result, q.id) << "\n";
      if (rd) preds << reader::prediction_to_json(q.id, answer(*rd, tokens, ks, result, rc.iterations)) << "\n";
    }
    log(std::to_string(questions.size()) + " questions");

    if (inv_.output.empty()) {
      out_ << results.str();
    } else {
      write_file(inv_.output, results.str());
      finish(inv_.output);
    }
    if (rd) {
      write_file(inv_.predictions, preds.str());
      m_.outputs["predictions"] = inv_.predictions;
      m_.finished = utc_now();
      m_.save(manifest_path(inv_.predictions));
    }
    return kExitOk;
  }

  // Chains become reader contexts; the two-hop heads are used for two-hop
  // retrieval and the span heads otherwise.
  reader::AnswerPrediction answer(const reader::ReaderModel& rd, const corpus::Tokens& question,
                                  const corpus::KnowledgeSource& ks, const retrieval::RetrievalResult& result,
                                  int iterations) {
    std::vector<reader::ReaderContext> contexts;
    std::vector<reader::ReaderOutput> outputs;
    for (const auto& chain : result.chains) {
      std::vector<const corpus::Paragraph*> ps;
      for (const auto& id : chain.paragraph_ids) ps.push_back(&ks.at(id));
      contexts.push_back(reader::ReaderContext::from_paragraphs(ps));
      outputs.push_back(iterations == 2 ? reader::hotpot_forward(rd, question, contexts.back())
                                        : reader::read_spans(rd, question, contexts.back()));
    }
    if (contexts.empty()) return {};
    return reader::predict_answer(outputs, contexts, rd.config.max_span, rd.config.sup_threshold);
  }

  corpus::HopMode hop() const {
    return inv_.hop == "single" ? corpus::HopMode::kSingleHop : corpus::HopMode::kMultiHop;
  }

  void emit(const std::string& text) {
    if (inv_.output.empty()) {
      out_ << text;
      return;
    }
    write_file(inv_.output, text);
    finish(inv_.output);
  }

  int eval() {
    m_.inputs["predictions"] = inv_.predictions;
    m_.inputs["gold"] = inv_.gold;
    const auto preds = eval::load_predictions(inv_.predictions);
    const auto gold = corpus::load_qa_dataset(inv_.gold, hop());
    emit(eval::evaluate(preds, gold).to_json() + "\n");
    return kExitOk;
  }

  int recall() {
    m_.inputs["retrievals"] = inv_.retrievals;
    m_.inputs["gold"] = inv_.gold;
    const auto ks = parse_k_list(inv_.k_list);
    const auto gold = corpus::load_qa_dataset(inv_.gold, hop());
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < gold.size(); ++i) by_id[gold[i].id] = i;

    std::vector<std::vector<std::vector<std::string>>> chains(gold.size());
    std::vector<bool> seen(gold.size(), false);
    std::istringstream lines(read_file(inv_.retrievals));
    std::string line;
    std::size_t row = 0;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(inv_.retrievals, row + 1, e.what());
      }
      std::size_t target = row;
      if (j.contains("id") && j["id"].is_string()) {
        const auto it = by_id.find(j["id"].get<std::string>());
        if (it == by_id.end()) throw ValidationError("retrieval for unknown question " + j["id"].dump());
        target = it->second;
      }
      if (target >= gold.size()) throw ValidationError("more retrievals than gold questions");
      if (seen[target]) throw ValidationError("duplicate retrieval for question " + gold[target].id);
      seen[target] = true;
      for (const auto& c : j.at("chains")) chains[target].push_back(c.at("paragraph_ids").get<std::vector<std::string>>());
      ++row;
    }

    std::vector<std::vector<std::string>> gold_ids;
    for (const auto& g : gold) gold_ids.push_back(g.gold_paragraph_ids);
    std::vector<eval::RecallPoint> curve;
    if (inv_.paragraphs) {
      std::vector<std::vector<std::string>> flat;
      for (const auto& q : chains) {
        std::vector<retrieval::ParagraphChain> pcs;
        for (const auto& c : q) pcs.push_back({c, {}, 0.0});
        flat.push_back(retrieval::ranked_paragraphs(pcs));
      }
      curve = eval::recall_at_k(flat, gold_ids, ks);
    } else {
      curve = eval::recall_at_k(chains, gold_ids, ks);
    }
    emit(eval::recall_csv(curve));
    return kExitOk;
  }

  const Invocation& inv_;
  RunManifest& m_;
  std::ostream& out_;
  std::ostream& err_;
};

int run_impl(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const Config* snapshot,
             int depth);

int replay(const Invocation& inv, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw ValidationError("a replay manifest cannot replay another manifest");
  const auto m = RunManifest::load(inv.manifest);
  std::vector<std::string> argv = {"muppet", m.subcommand};
  for (std::size_t i = 0; i < m.args.size(); ++i) {
    argv.push_back(m.args[i]);
    if (!inv.output.empty() && m.args[i] == "--output" && i + 1 < m.args.size()) {
      argv.push_back(inv.output);
      ++i;
    }
  }
  err << "muppet replay: " << m.subcommand << " from " << inv.manifest << "\n";
  return run_impl(argv, out, err, &m.config, depth + 1);
}

int run_impl(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const Config* snapshot,
             int depth) {
  CLI::App app{"muppet: iterative multi-hop retrieval and reading", "muppet"};
  Invocation inv;
  build_app(app, inv);
  try {
    std::vector<std::string> rev(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
    std::reverse(rev.begin(), rev.end());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    if (sub->get_name() == "replay") return replay(inv, out, err, depth);

    RunManifest m;
    m.subcommand = sub->get_name();
    m.args.assign(argv.begin() + 2, argv.end());
    m.started = utc_now();
    if (snapshot) {
      m.config = *snapshot;
    } else {
      m.config_path = inv.config_path;
      if (m.config_path.empty()) {
        if (const char* env = std::getenv("MUPPET_CONFIG"); env && *env) m.config_path = env;
      }
      if (!m.config_path.empty()) m.config = Config::load(m.config_path);
    }
    if (inv.seed) m.config.set("seed", std::to_string(*inv.seed));
    if (inv.threads) m.config.set("threads", std::to_string(*inv.threads));
    const auto seed = m.config.get_int("seed", 1);
    const auto threads = m.config.get_int("threads", 1);
    if (seed < 0) throw ValidationError("seed must be non-negative");
    if (threads < 1) throw ValidationError("threads must be positive");
    m.seed = static_cast<std::uint64_t>(seed);
    m.threads = static_cast<std::size_t>(threads);
    m.config.set("seed", std::to_string(m.seed));
    m.config.set("threads", std::to_string(m.threads));

    Runner runner(inv, m, out, err);
    return runner.dispatch();
  } catch (const ValidationError& e) {
    err << "muppet: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "muppet: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

std::string RunManifest::to_json() const {
  json j;
  j["subcommand"] = subcommand;
  j["args"] = args;
  j["config_path"] = config_path;
  j["config"] = config.entries();
  j["seed"] = seed;
  j["threads"] = threads;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["started"] = started;
  j["finished"] = finished;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = json::parse(text);
    m.subcommand = j.at("subcommand").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config_path = j.value("config_path", std::string());
    for (const auto& [k, v] : j.at("config").get<std::map<std::string, std::string>>()) m.config.set(k, v);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threads = j.at("threads").get<std::size_t>();
    m.inputs = j.value("inputs", std::map<std::string, std::string>());
    m.outputs = j.value("outputs", std::map<std::string, std::string>());
    m.started = j.value("started", std::string());
    m.finished = j.value("finished", std::string());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad run manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& path) { return from_json(read_file(path)); }

void RunManifest::save(const fs::path& path) const { write_file(path, to_json()); }

fs::path manifest_path(const fs::path& artifact) {
  auto p = artifact;
  p += ".manifest.json";
  return p;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  return run_impl(argv, out, err, nullptr, 0);
}

}  // namespace muppet::cli
