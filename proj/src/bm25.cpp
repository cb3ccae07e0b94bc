#include "caselink/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "caselink/error.hpp"
#include "caselink/format.hpp"

namespace caselink {

namespace {

/// Sum in ascending order, so equal multisets of term weights give bitwise
/// equal scores and exact ties stay ties.
double canonical_sum(std::vector<double>& weights) {
    std::sort(weights.begin(), weights.end());
    double total = 0.0;
    for (double w : weights) total += w;
    return total;
}

bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

Bm25Index Bm25Index::build(const std::vector<std::vector<std::string>>& doc_tokens, Bm25Params params) {
    if (doc_tokens.empty()) throw ValidationError("cannot build a BM25 index over an empty corpus");
    Bm25Index index;
    index.params_ = std::move(params);
    index.doc_lengths_.reserve(doc_tokens.size());
    index.doc_tokens_.reserve(doc_tokens.size());

    std::uint64_t total_length = 0;
    for (std::size_t d = 0; d < doc_tokens.size(); ++d) {
        std::vector<std::string> kept;
        kept.reserve(doc_tokens[d].size());
        for (const auto& tok : doc_tokens[d])
            if (!index.params_.stopwords.contains(tok)) kept.push_back(tok);

        // Per-document term counts, in first-occurrence order so that term ids
        // are assigned deterministically.
        std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;
        std::unordered_map<std::uint32_t, std::size_t> slot;
        for (const auto& tok : kept) {
            auto [it, inserted] = index.vocabulary_.try_emplace(tok, static_cast<std::uint32_t>(index.postings_.size()));
            if (inserted) index.postings_.emplace_back();
            auto [s, fresh] = slot.try_emplace(it->second, counts.size());
            if (fresh) counts.emplace_back(it->second, 0);
            ++counts[s->second].second;
        }
        for (const auto& [term, tf] : counts)
            index.postings_[term].push_back({static_cast<std::uint32_t>(d), tf});

        index.doc_lengths_.push_back(static_cast<std::uint32_t>(kept.size()));
        total_length += kept.size();
        index.doc_tokens_.push_back(std::move(kept));
    }
    index.avg_doc_length_ = static_cast<double>(total_length) / static_cast<double>(doc_tokens.size());
    return index;
}

std::int64_t Bm25Index::term_id(std::string_view term) const {
    auto it = vocabulary_.find(std::string(term));
    return it == vocabulary_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
    auto id = term_id(term);
    return id < 0 ? 0 : postings_[static_cast<std::size_t>(id)].size();
}

double Bm25Index::idf(std::uint32_t term) const {
    double n = static_cast<double>(doc_count());
    double nt = static_cast<double>(postings_[term].size());
    return std::log(1.0 + (n - nt + 0.5) / (nt + 0.5));
}

double Bm25Index::term_weight(std::uint32_t term, std::uint32_t tf, std::size_t doc) const {
    double f = static_cast<double>(tf);
    double len_norm = avg_doc_length_ > 0.0 ? static_cast<double>(doc_lengths_[doc]) / avg_doc_length_ : 0.0;
    double k1 = params_.k1;
    return idf(term) * (f * (k1 + 1.0) / (f + k1 * (1.0 - params_.b + params_.b * len_norm)));
}

std::vector<std::uint32_t> Bm25Index::query_terms(std::span<const std::string> query_tokens) const {
    std::vector<std::uint32_t> terms;
    for (const auto& tok : query_tokens) {
        if (params_.stopwords.contains(tok)) continue;
        auto it = vocabulary_.find(tok);
        if (it != vocabulary_.end()) terms.push_back(it->second);
    }
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    return terms;
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::size_t doc) const {
    if (doc >= doc_count())
        throw ValidationError("doc index " + std::to_string(doc) + " out of range (" +
                              std::to_string(doc_count()) + " documents)");
    std::vector<double> weights;
    for (auto term : query_terms(query_tokens)) {
        const auto& list = postings_[term];
        auto it = std::lower_bound(list.begin(), list.end(), doc,
                                   [](const Posting& p, std::size_t d) { return p.doc < d; });
        if (it != list.end() && it->doc == doc) weights.push_back(term_weight(term, it->tf, doc));
    }
    return canonical_sum(weights);
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_tokens) const {
    std::vector<std::vector<double>> weights(doc_count());
    for (auto term : query_terms(query_tokens))
        for (const auto& p : postings_[term]) weights[p.doc].push_back(term_weight(term, p.tf, p.doc));
    std::vector<double> scores(doc_count(), 0.0);
    for (std::size_t d = 0; d < scores.size(); ++d) scores[d] = canonical_sum(weights[d]);
    return scores;
}

Bm25Index build_index(const Corpus& corpus, Bm25Params params) {
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(corpus.size());
    for (const auto& d : corpus.docs()) tokens.push_back(tokenize(d.text));
    return Bm25Index::build(tokens, std::move(params));
}

std::vector<ScoredDoc> select_top_k(const std::vector<double>& scores, std::size_t k,
                                    const std::vector<bool>& excluded) {
    std::vector<ScoredDoc> pool;
    pool.reserve(scores.size());
    for (std::size_t d = 0; d < scores.size(); ++d)
        if (d >= excluded.size() || !excluded[d]) pool.push_back({d, scores[d]});
    auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
        return a.score != b.score ? a.score > b.score : a.doc < b.doc;
    };
    std::size_t keep = std::min(k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), better);
    pool.resize(keep);
    return pool;
}

std::vector<ScoredDoc> top_k(const Bm25Index& index, std::size_t query_doc, std::size_t k,
                             const std::set<std::size_t>& exclude) {
    if (k == 0) throw ValidationError("top_k requires k >= 1");
    if (query_doc >= index.doc_count()) throw ValidationError("query doc index out of range");
    std::vector<bool> excluded(index.doc_count(), false);
    excluded[query_doc] = true;
    for (auto e : exclude)
        if (e < excluded.size()) excluded[e] = true;
    return select_top_k(index.score_all(index.doc_tokens(query_doc)), k, excluded);
}

NeighborLists pairwise_topk(const Bm25Index& index, std::size_t k) {
    NeighborLists lists(index.doc_count());
    for (std::size_t d = 0; d < index.doc_count(); ++d) lists[d] = top_k(index, d, k);
    return lists;
}

void write_neighbor_lists(const std::filesystem::path& path, const NeighborLists& lists, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (std::size_t d = 0; d < lists.size(); ++d)
        for (const auto& nb : lists[d])
            out << corpus[d].id << '\t' << corpus[nb.doc].id << '\t' << format_double(nb.score) << '\n';
}

}  // namespace caselink
