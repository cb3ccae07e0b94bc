#include "caselink/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "caselink/error.hpp"
#include "caselink/log.hpp"

namespace caselink {

namespace {

/// k distinct draws from `pool` (partial Fisher-Yates on a copy).
std::vector<std::size_t> draw_distinct(std::vector<std::size_t> pool, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace

void LossConfig::validate() const {
    if (!(tau > 0.0)) throw ValidationError("loss.tau must be > 0");
    if (!(lambda >= 0.0)) throw ValidationError("loss.lambda must be >= 0");
    if (hard_pool < n_hard) throw ValidationError("loss.hard_pool must be >= loss.n_hard");
}

NegativeSampler::NegativeSampler(const Corpus& corpus, const LabelSet& labels, const Bm25Index& index,
                                 const LossConfig& config)
    : config_(config) {
    config.validate();
    if (index.doc_count() != corpus.size()) throw ValidationError("BM25 index does not cover the training corpus");
    validate_labels(labels, corpus);

    const auto candidates = corpus.candidate_indices();
    const std::size_t needed = config.n_easy + config.n_hard + 1;
    if (candidates.size() < needed)
        throw ValidationError("candidate pool of " + std::to_string(candidates.size()) + " is smaller than n_easy + n_hard + 1 = " +
                              std::to_string(needed));

    for (auto q : corpus.query_indices()) {
        const auto* rel = labels.find(corpus[q].id);
        if (rel == nullptr) continue;
        Pools p;
        std::set<std::size_t> rel_idx;
        for (const auto& id : *rel) rel_idx.insert(*corpus.find(id));
        p.positives.assign(rel_idx.begin(), rel_idx.end());
        for (auto c : candidates)
            if (!rel_idx.contains(c)) p.negatives.push_back(c);
        if (p.negatives.size() < config.n_easy + config.n_hard)
            throw ValidationError("query '" + corpus[q].id + "' has " + std::to_string(p.negatives.size()) +
                                  " non-relevant candidates, fewer than n_easy + n_hard");

        std::vector<bool> candidate_mask(corpus.size(), false);
        for (auto c : p.negatives) candidate_mask[c] = true;
        for (const auto& hit : top_k(index, q, corpus.size())) {
            if (p.hard.size() == config.hard_pool) break;
            if (candidate_mask[hit.doc]) p.hard.push_back(hit.doc);
        }
        queries_.push_back(q);
        pools_.emplace(q, std::move(p));
    }
    if (queries_.empty()) throw ValidationError("no labeled training queries");
}

const NegativeSampler::Pools& NegativeSampler::pools(std::size_t query) const {
    auto it = pools_.find(query);
    if (it == pools_.end()) throw ValidationError("query index " + std::to_string(query) + " has no positives");
    return it->second;
}

const std::vector<std::size_t>& NegativeSampler::positives(std::size_t query) const { return pools(query).positives; }
const std::vector<std::size_t>& NegativeSampler::hard_pool(std::size_t query) const { return pools(query).hard; }

bool NegativeSampler::is_relevant(std::size_t query, std::size_t candidate) const {
    const auto& pos = pools(query).positives;
    return std::binary_search(pos.begin(), pos.end(), candidate);
}

TrainingBatch NegativeSampler::sample(std::span<const std::size_t> queries, std::mt19937_64& rng) const {
    TrainingBatch batch;
    batch.in_batch = config_.in_batch;
    for (auto q : queries) {
        const auto& p = pools(q);
        BatchEntry e;
        e.query = q;
        std::uniform_int_distribution<std::size_t> pick(0, p.positives.size() - 1);
        e.positive = p.positives[pick(rng)];
        e.hard = draw_distinct(p.hard, config_.n_hard, rng);
        std::vector<std::size_t> rest;
        for (auto c : p.negatives)
            if (std::find(e.hard.begin(), e.hard.end(), c) == e.hard.end()) rest.push_back(c);
        e.easy = draw_distinct(std::move(rest), config_.n_easy, rng);
        batch.entries.push_back(std::move(e));
    }
    return batch;
}

TrainingBatch sample_batch(std::span<const std::size_t> queries, const NegativeSampler& sampler, std::mt19937_64& rng) {
    return sampler.sample(queries, rng);
}

// ---------------------------------------------------------------------------

ad::Var info_nce_from_scores(const ad::Var& scores, double tau) {
    if (!(tau > 0.0)) throw ValidationError("InfoNCE temperature must be > 0");
    if (scores.cols() != 1 || scores.rows() == 0) throw std::invalid_argument("info_nce: scores must be a k×1 column");
    ad::Tape& tape = scores.tape();
    ad::Var logits = ad::scale(scores, 1.0 / tau);
    const auto& values = logits.value().data();
    const double shift = *std::max_element(values.begin(), values.end());
    ad::Var shift_c = tape.constant(ad::Tensor::scalar(shift));
    ad::Var lse = ad::add(ad::log(ad::sum(ad::exp(ad::sub(logits, shift_c)))), shift_c);
    const std::size_t first[] = {0};
    return ad::sub(lse, ad::gather_rows(logits, first));
}

ad::Var info_nce(const ad::Var& query, const ad::Var& positive, const ad::Var& negatives, double tau, Similarity sim) {
    if (query.rows() != 1 || positive.rows() != 1 || query.cols() != positive.cols() ||
        negatives.cols() != query.cols())
        throw std::invalid_argument("info_nce: query/positive must be 1×d and negatives k×d");
    const ad::Var parts[] = {positive, negatives};
    ad::Var candidates = ad::concat_rows(parts);
    std::vector<std::size_t> repeat(candidates.rows(), 0);
    ad::Var queries = ad::gather_rows(query, repeat);
    ad::Var scores = sim == Similarity::Cosine ? ad::cosine_rows(queries, candidates)
                                               : ad::row_sum(ad::hadamard(queries, candidates));
    return info_nce_from_scores(scores, tau);
}

ad::Var deg_reg(const ad::Var& case_embeddings, std::span<const std::size_t> candidates) {
    if (candidates.empty()) throw ValidationError("deg_reg needs at least one candidate");
    const auto& h = case_embeddings.value();
    for (std::size_t r = 0; r < h.rows(); ++r) {
        bool zero = std::all_of(h.row(r).begin(), h.row(r).end(), [](double v) { return v == 0.0; });
        if (zero) log::warn("deg_reg: case row " + std::to_string(r) + " is zero and contributes nothing");
    }
    ad::Var unit = ad::l2_normalize_rows(case_embeddings);
    ad::Var pseudo_adjacency = ad::matmul(ad::gather_rows(unit, candidates), ad::transpose(unit));
    return ad::sum(pseudo_adjacency);
}

ad::Var total_loss(std::span<const ad::Var> infonce, const ad::Var& degreg, double lambda) {
    if (infonce.empty()) throw std::invalid_argument("total_loss: empty batch");
    ad::Var mean_nce = ad::mean(ad::concat_rows(infonce));
    if (lambda == 0.0) return mean_nce;
    return ad::add(mean_nce, ad::scale(degreg, lambda));
}

LossTerms batch_loss(const ad::Var& embeddings, std::size_t num_cases, const TrainingBatch& batch,
                     const NegativeSampler& sampler, std::span<const std::size_t> candidates,
                     const LossConfig& config, ForwardTrace* trace) {
    config.validate();
    if (batch.entries.empty()) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<ad::Var> per_query;
    per_query.reserve(batch.entries.size());
    std::size_t total_negatives = 0;
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const auto& e = batch.entries[i];
        std::vector<std::size_t> negatives = e.easy;
        negatives.insert(negatives.end(), e.hard.begin(), e.hard.end());
        if (batch.in_batch) {
            // Positives of the other queries, unless relevant to this one or
            // already present.
            for (std::size_t j = 0; j < batch.entries.size(); ++j) {
                if (j == i) continue;
                auto other = batch.entries[j].positive;
                if (other == e.positive || sampler.is_relevant(e.query, other)) continue;
                if (std::find(negatives.begin(), negatives.end(), other) != negatives.end()) continue;
                negatives.push_back(other);
            }
        }
        total_negatives += negatives.size();
        const std::size_t q[] = {e.query};
        const std::size_t p[] = {e.positive};
        per_query.push_back(info_nce(ad::gather_rows(embeddings, q), ad::gather_rows(embeddings, p),
                                     ad::gather_rows(embeddings, negatives), config.tau, config.sim));
    }
    std::vector<std::size_t> case_rows(num_cases);
    std::iota(case_rows.begin(), case_rows.end(), 0);
    ad::Var degreg = deg_reg(ad::gather_rows(embeddings, case_rows), candidates);

    LossTerms terms;
    terms.total = total_loss(per_query, degreg, config.lambda);
    double nce = 0.0;
    for (const auto& v : per_query) nce += v.value().item();
    terms.infonce = nce / static_cast<double>(per_query.size());
    terms.degreg = degreg.value().item();
    terms.total_value = terms.total.value().item();
    if (trace) {
        trace->set("loss.tau", std::to_string(config.tau));
        trace->set("loss.lambda", std::to_string(config.lambda));
        trace->set("loss.sim", config.sim == Similarity::Dot ? "dot" : "cosine");
        trace->set("loss.entries", std::to_string(batch.entries.size()));
        trace->set("loss.negatives", std::to_string(total_negatives));
        trace->set("loss.degreg_rows", std::to_string(candidates.size()));
        trace->set("loss.degreg_cols", std::to_string(num_cases));
    }
    return terms;
}

}  // namespace caselink
