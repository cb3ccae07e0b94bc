#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "caselink/autodiff.hpp"
#include "caselink/bm25.hpp"
#include "caselink/corpus.hpp"

namespace caselink {

/// Dense 0/1 matrix.
class BinaryMatrix {
  public:
    BinaryMatrix() = default;
    BinaryMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * cols_ + c] = v ? 1 : 0; }

    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] std::size_t row_count(std::size_t r) const;
    [[nodiscard]] bool is_symmetric() const;
    [[nodiscard]] bool zero_diagonal() const;
    [[nodiscard]] BinaryMatrix transpose() const;

    friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bits_;
};

enum class FeatureSource { ExternalFile, HashedTF };
enum class Similarity { Cosine, Dot };

/// Case rows follow corpus order, charge rows vocabulary order; both `dim` wide.
struct NodeFeatures {
    std::size_t dim = 0;
    ad::Tensor case_features;
    ad::Tensor charge_features;
    FeatureSource source = FeatureSource::HashedTF;
};

struct GcgConfig {
    std::size_t k = 5;
    double delta = 0.9;
    Similarity sim = Similarity::Cosine;
    /// Case-charge matching on token boundaries instead of raw substrings.
    bool token_boundary = false;
    /// false drops charge nodes entirely (case-case graph only).
    bool include_charges = true;
    /// false leaves the charge-charge block empty.
    bool charge_charge_edges = true;
    Bm25Params bm25;

    void validate() const;
};

struct GcgAdjacency {
    std::size_t n = 0;  // cases
    std::size_t m = 0;  // charges
    BinaryMatrix case_case;      // n×n
    BinaryMatrix charge_charge;  // m×m
    BinaryMatrix charge_case;    // m×n, row = charge, column = case
    BinaryMatrix full;           // (n+m)×(n+m)
};

enum class NodeKind { Query, Candidate, Charge };

/// The Global Case Graph: case nodes 0..n-1, then charge nodes n..n+m-1.
struct Gcg {
    std::vector<std::string> node_ids;
    std::vector<NodeKind> node_kinds;
    NodeFeatures features;
    GcgAdjacency adjacency;

    [[nodiscard]] std::size_t num_cases() const { return adjacency.n; }
    [[nodiscard]] std::size_t num_charges() const { return adjacency.m; }
    [[nodiscard]] std::size_t num_nodes() const { return adjacency.n + adjacency.m; }
    /// Stacked case then charge features, (n+m)×dim.
    [[nodiscard]] ad::Tensor feature_matrix() const;
};

/// Signed feature hashing of token counts, L2-normalized. The empty text maps
/// to the zero vector.
std::vector<double> fallback_embed(std::string_view text, std::size_t dim, std::uint64_t seed);
/// Bucket and sign the hashing trick assigns to `token`.
std::pair<std::size_t, double> hash_bucket(std::string_view token, std::size_t dim, std::uint64_t seed);

using EmbeddingTable = std::unordered_map<std::string, std::vector<double>>;

/// Newline-delimited `{"id": str, "vec": [float, ...]}`; all vectors equal length.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// External vectors when `embeddings` is given, the hashed fallback otherwise.
NodeFeatures assemble_features(const Corpus& corpus, const ChargeVocabulary& charges,
                               const EmbeddingTable* embeddings, std::size_t dim, std::uint64_t seed);

BinaryMatrix build_case_edges(const NeighborLists& neighbors, std::size_t n);
BinaryMatrix build_charge_edges(const ad::Tensor& charge_features, double delta, Similarity sim);
BinaryMatrix build_case_charge_edges(const Corpus& corpus, const ChargeVocabulary& charges,
                                     bool token_boundary = false);
/// [[A_d, A_bᵀ], [A_b, A_c]]; throws if the result is not symmetric.
BinaryMatrix compose(const BinaryMatrix& case_case, const BinaryMatrix& charge_charge,
                     const BinaryMatrix& charge_case);

Gcg build_gcg(const Corpus& corpus, const ChargeVocabulary& charges, NodeFeatures features,
              const GcgConfig& config);

/// Edge-list TSV preceded by a `#nodes` table.
void write_graph(const std::filesystem::path& path, const Gcg& gcg);

}  // namespace caselink
