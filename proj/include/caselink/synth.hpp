#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "caselink/corpus.hpp"

namespace caselink {

/// Planted-topic corpus generator. Every topic owns a small word list and one
/// charge phrase; a query and its relevant candidates share a topic.
struct SynthSpec {
    std::uint64_t seed = 7;
    std::size_t train_queries = 10;
    std::size_t train_candidates = 50;
    std::size_t test_queries = 10;
    std::size_t test_candidates = 50;
    /// One charge per topic.
    std::size_t topics = 8;
    std::size_t relevant_per_query = 4;
    std::size_t background_vocab = 300;
    std::size_t topic_vocab = 12;
    std::size_t min_length = 60;
    std::size_t max_length = 90;
    /// Share of tokens drawn from the topic word list.
    double topic_rate = 0.15;
    /// Chance a document mentions its own topic's charge.
    double charge_rate = 0.7;
    /// Chance a document also mentions an unrelated charge.
    double noise_charge_rate = 0.2;

    void validate() const;
};

struct SynthData {
    Corpus train;
    LabelSet train_labels;
    Corpus test;
    LabelSet test_labels;
    ChargeVocabulary charges;
};

SynthData generate_synth(const SynthSpec& spec);

/// train_corpus.jsonl, train_labels.json, test_corpus.jsonl,
/// test_labels.json, charges.txt and a train.conf pointing at them.
void write_synth(const std::filesystem::path& dir, const SynthData& data, const SynthSpec& spec);

}  // namespace caselink
