#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "muppet/corpus/corpus.hpp"
#include "muppet/corpus/dataset.hpp"

namespace muppet::testing {

// Pronounceable made-up word from 2-3 syllables.
std::string made_up_word(std::mt19937_64& rng);
// `count` distinct made-up words, none in `avoid`.
std::vector<std::string> distinct_words(std::size_t count, std::mt19937_64& rng,
                                        const std::vector<std::string>& avoid = {});

struct ToyDataset {
  corpus::KnowledgeSource ks;
  std::vector<corpus::QAExample> examples;
};

// Bridge-entity two-hop set: per question a first-hop paragraph naming the
// group and its singer, a second-hop paragraph about the singer that shares
// no content word with the question, and a distractor about the group.
// Distractor lists hold the question's distractor plus first- and second-hop
// paragraphs of other questions.
ToyDataset make_bridge_dataset(std::size_t questions, std::uint64_t seed, std::size_t foreign_first_hop = 4,
                               std::size_t foreign_second_hop = 12);

// Planted-answer reader set: span questions answered in the second-hop
// paragraph plus yes/no questions whose answer is stated in it. Distractors
// never contain the answer.
ToyDataset make_reader_dataset(std::size_t span_questions, std::size_t yes_no_questions, std::uint64_t seed);

// Random paragraphs over a small vocabulary, for retrieval tests.
corpus::KnowledgeSource make_random_corpus(std::size_t paragraphs, std::uint64_t seed, std::size_t vocab = 60,
                                           corpus::CorpusMode mode = corpus::CorpusMode::kParagraphPerDoc);
corpus::Tokens random_query(std::size_t length, std::uint64_t seed, std::size_t vocab = 60);

// JSONL writers matching the ingest formats.
void write_corpus_jsonl(const corpus::KnowledgeSource& ks, const std::filesystem::path& path);
void write_dataset_jsonl(const std::vector<corpus::QAExample>& examples, const std::filesystem::path& path);

}  // namespace muppet::testing
