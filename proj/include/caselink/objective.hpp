#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "caselink/autodiff.hpp"
#include "caselink/bm25.hpp"
#include "caselink/corpus.hpp"
#include "caselink/gcg.hpp"
#include "caselink/gnn.hpp"

namespace caselink {

struct LossConfig {
    double tau = 0.1;
    double lambda = 1e-3;
    /// Training similarity; inference always ranks by cosine.
    Similarity sim = Similarity::Dot;
    std::size_t n_easy = 1;
    std::size_t n_hard = 5;
    std::size_t hard_pool = 50;
    bool in_batch = true;

    void validate() const;
};

/// Indices are corpus (= case node) indices.
struct BatchEntry {
    std::size_t query = 0;
    std::size_t positive = 0;
    std::vector<std::size_t> easy;
    std::vector<std::size_t> hard;

    friend bool operator==(const BatchEntry&, const BatchEntry&) = default;
};

struct TrainingBatch {
    std::vector<BatchEntry> entries;
    bool in_batch = true;

    friend bool operator==(const TrainingBatch&, const TrainingBatch&) = default;
};

/// Per-query positive, non-relevant and BM25 hard-negative pools, computed
/// once for a training corpus.
class NegativeSampler {
  public:
    NegativeSampler(const Corpus& corpus, const LabelSet& labels, const Bm25Index& index, const LossConfig& config);

    /// Labeled queries, in corpus order.
    [[nodiscard]] const std::vector<std::size_t>& queries() const { return queries_; }
    [[nodiscard]] const std::vector<std::size_t>& positives(std::size_t query) const;
    [[nodiscard]] const std::vector<std::size_t>& hard_pool(std::size_t query) const;
    [[nodiscard]] bool is_relevant(std::size_t query, std::size_t candidate) const;

    /// Positive uniform over labels(query); n_hard distinct negatives uniform
    /// over the hard pool; n_easy distinct negatives uniform over the
    /// remaining non-relevant candidates.
    [[nodiscard]] TrainingBatch sample(std::span<const std::size_t> queries, std::mt19937_64& rng) const;

  private:
    struct Pools {
        std::vector<std::size_t> positives;
        std::vector<std::size_t> negatives;
        std::vector<std::size_t> hard;
    };
    [[nodiscard]] const Pools& pools(std::size_t query) const;

    LossConfig config_;
    std::vector<std::size_t> queries_;
    std::map<std::size_t, Pools> pools_;
};

TrainingBatch sample_batch(std::span<const std::size_t> queries, const NegativeSampler& sampler, std::mt19937_64& rng);

/// -log softmax(scores / tau)[0] via max-shifted log-sum-exp; `scores` is
/// (1 + negatives)×1 with the positive first.
ad::Var info_nce_from_scores(const ad::Var& scores, double tau);

/// Eq.-style InfoNCE for one query. `negatives` may have zero rows.
ad::Var info_nce(const ad::Var& query, const ad::Var& positive, const ad::Var& negatives, double tau, Similarity sim);

/// Sum over candidate rows i and all rows j of cos(h_i, h_j), j = i included.
ad::Var deg_reg(const ad::Var& case_embeddings, std::span<const std::size_t> candidates);

/// mean(infonce) + lambda * degreg.
ad::Var total_loss(std::span<const ad::Var> infonce, const ad::Var& degreg, double lambda);

struct LossTerms {
    ad::Var total;
    double infonce = 0.0;
    double degreg = 0.0;
    double total_value = 0.0;
};

/// Full training objective for one batch over the embeddings of a training
/// graph; DegReg rows are `candidates`, columns the first `num_cases` rows.
LossTerms batch_loss(const ad::Var& embeddings, std::size_t num_cases, const TrainingBatch& batch,
                     const NegativeSampler& sampler, std::span<const std::size_t> candidates,
                     const LossConfig& config, ForwardTrace* trace = nullptr);

}  // namespace caselink
