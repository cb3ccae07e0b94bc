#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "caselink/corpus.hpp"

namespace caselink {

/// Splits on every non-alphanumeric byte. Bytes >= 0x80 count as alphanumeric
/// so multi-byte UTF-8 letters stay inside their token.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    std::set<std::string> stopwords;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;
};

struct ScoredDoc {
    std::size_t doc = 0;
    double score = 0.0;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Okapi BM25 over an in-memory inverted index.
///
/// idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5)), so every term weight is
/// non-negative. Query terms are deduplicated and summed in ascending term-id
/// order; term ids follow first occurrence over the indexed documents.
class Bm25Index {
  public:
    static Bm25Index build(const std::vector<std::vector<std::string>>& doc_tokens, Bm25Params params = {});

    [[nodiscard]] std::size_t doc_count() const { return doc_lengths_.size(); }
    [[nodiscard]] double avg_doc_length() const { return avg_doc_length_; }
    [[nodiscard]] const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
    [[nodiscard]] const Bm25Params& params() const { return params_; }
    [[nodiscard]] std::size_t vocabulary_size() const { return postings_.size(); }

    /// Term id, or -1 when the term was never indexed.
    [[nodiscard]] std::int64_t term_id(std::string_view term) const;
    [[nodiscard]] const std::vector<Posting>& postings(std::uint32_t term) const { return postings_[term]; }
    [[nodiscard]] std::size_t document_frequency(std::string_view term) const;
    [[nodiscard]] double idf(std::uint32_t term) const;

    /// Tokens of indexed document `doc` after stopword removal.
    [[nodiscard]] const std::vector<std::string>& doc_tokens(std::size_t doc) const { return doc_tokens_[doc]; }

    [[nodiscard]] double score(std::span<const std::string> query_tokens, std::size_t doc) const;

    /// Scores of every indexed document against the query (term-at-a-time).
    [[nodiscard]] std::vector<double> score_all(std::span<const std::string> query_tokens) const;

  private:
    [[nodiscard]] std::vector<std::uint32_t> query_terms(std::span<const std::string> query_tokens) const;
    [[nodiscard]] double term_weight(std::uint32_t term, std::uint32_t tf, std::size_t doc) const;

    Bm25Params params_;
    std::unordered_map<std::string, std::uint32_t> vocabulary_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::uint32_t> doc_lengths_;
    std::vector<std::vector<std::string>> doc_tokens_;
    double avg_doc_length_ = 0.0;
};

Bm25Index build_index(const Corpus& corpus, Bm25Params params = {});

/// Up to `k` best documents for the indexed document `query_doc` used as a
/// query, excluding itself and every index in `exclude`. Ties go to the lower
/// document index.
std::vector<ScoredDoc> top_k(const Bm25Index& index, std::size_t query_doc, std::size_t k,
                             const std::set<std::size_t>& exclude = {});

/// Same ordering rule applied to an arbitrary score vector.
std::vector<ScoredDoc> select_top_k(const std::vector<double>& scores, std::size_t k,
                                    const std::vector<bool>& excluded);

using NeighborLists = std::vector<std::vector<ScoredDoc>>;

/// top_k for every indexed document.
NeighborLists pairwise_topk(const Bm25Index& index, std::size_t k);

/// `case_id \t neighbor_id \t score` rows.
void write_neighbor_lists(const std::filesystem::path& path, const NeighborLists& lists, const Corpus& corpus);

}  // namespace caselink
