#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caselink/autodiff.hpp"
#include "caselink/bm25.hpp"
#include "caselink/corpus.hpp"
#include "caselink/gcg.hpp"
#include "caselink/trainer.hpp"

namespace caselink {

struct RankedList {
    std::string query;
    /// (candidate id, score), scores non-increasing, ties by ascending id.
    std::vector<std::pair<std::string, double>> items;

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Builds the GCG of `corpus` on its own, runs the model in Eval mode and
/// returns the case-node rows (corpus order).
ad::Tensor embed_all(const Checkpoint& checkpoint, const Corpus& corpus, const ChargeVocabulary& charges,
                     const EmbeddingTable* embeddings = nullptr);

/// Case rows of the untrained input features (the node-feature baseline).
ad::Tensor feature_embeddings(const Corpus& corpus, const ChargeVocabulary& charges, const TrainConfig& config,
                              const EmbeddingTable* embeddings = nullptr);

/// Cosine ranking of `candidates` (row indices into `embeddings`) for the row
/// `query`. `ids` names every row.
RankedList rank(std::size_t query, const ad::Tensor& embeddings, std::span<const std::size_t> candidates,
                const std::vector<std::string>& ids);

/// Every query of `corpus` against every candidate of `corpus`.
std::vector<RankedList> rank_all(const Corpus& corpus, const ad::Tensor& embeddings);

/// BM25 top `first_k` candidates of the query, re-ordered by cosine.
RankedList two_stage_rank(const Corpus& corpus, std::size_t query, const Bm25Index& index,
                          const ad::Tensor& embeddings, std::size_t first_k = 10);
std::vector<RankedList> two_stage_rank_all(const Corpus& corpus, const Bm25Index& index,
                                           const ad::Tensor& embeddings, std::size_t first_k = 10);

struct QueryMetrics {
    std::string query;
    std::size_t retrieved = 0;  // |ret|, at most the cutoff
    std::size_t relevant = 0;   // |rel|
    std::size_t hits = 0;       // |ret ∩ rel|
    double precision = 0.0;
    double recall = 0.0;
    double reciprocal_rank = 0.0;
    double average_precision = 0.0;
    double ndcg = 0.0;
};

struct EvalReport {
    std::size_t cutoff = 5;
    double precision = 0.0;
    double recall = 0.0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    double mrr = 0.0;
    double map = 0.0;
    double ndcg = 0.0;
    std::vector<QueryMetrics> per_query;  // sorted by query id

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    /// `P@5=... R@5=... ...` on one line.
    [[nodiscard]] std::string summary() const;
};

/// Throws ValidationError for a ranked query without labels.
EvalReport evaluate(std::span<const RankedList> lists, const LabelSet& labels, std::size_t cutoff = 5);

/// `query \t candidate \t rank \t score` rows, ranks 1-based.
void write_run(const std::filesystem::path& path, std::span<const RankedList> lists);
std::vector<RankedList> read_run(const std::filesystem::path& path);
void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace caselink
