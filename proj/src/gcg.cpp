#include "caselink/gcg.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "caselink/error.hpp"
#include "caselink/log.hpp"

namespace caselink {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t stable_hash(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = kFnvOffset ^ mix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return mix64(h);
}

bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool contains_phrase(std::string_view text, std::string_view phrase, bool token_boundary) {
    if (!token_boundary) return text.find(phrase) != std::string_view::npos;
    for (auto pos = text.find(phrase); pos != std::string_view::npos; pos = text.find(phrase, pos + 1)) {
        std::size_t end = pos + phrase.size();
        bool left = pos == 0 || !is_token_byte(static_cast<unsigned char>(text[pos - 1]));
        bool right = end == text.size() || !is_token_byte(static_cast<unsigned char>(text[end]));
        if (left && right) return true;
    }
    return false;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

std::size_t BinaryMatrix::count() const {
    std::size_t c = 0;
    for (auto b : bits_) c += b;
    return c;
}

std::size_t BinaryMatrix::row_count(std::size_t r) const {
    std::size_t c = 0;
    for (std::size_t j = 0; j < cols_; ++j) c += bits_[r * cols_ + j];
    return c;
}

bool BinaryMatrix::is_symmetric() const {
    if (rows_ != cols_) return false;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = i + 1; j < cols_; ++j)
            if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
}

bool BinaryMatrix::zero_diagonal() const {
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i)
        if ((*this)(i, i)) return false;
    return true;
}

BinaryMatrix BinaryMatrix::transpose() const {
    BinaryMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j)
            if ((*this)(i, j)) t.set(j, i);
    return t;
}

void GcgConfig::validate() const {
    if (k < 1) throw ValidationError("gcg.k must be >= 1");
    if (sim == Similarity::Cosine && (delta < -1.0 || delta > 1.0))
        throw ValidationError("gcg.delta must lie in [-1, 1] under cosine similarity");
}

ad::Tensor Gcg::feature_matrix() const {
    const std::size_t d = features.dim;
    ad::Tensor x(num_nodes(), d);
    for (std::size_t i = 0; i < num_cases(); ++i)
        std::copy(features.case_features.row(i).begin(), features.case_features.row(i).end(), x.row(i).begin());
    for (std::size_t i = 0; i < num_charges(); ++i)
        std::copy(features.charge_features.row(i).begin(), features.charge_features.row(i).end(),
                  x.row(num_cases() + i).begin());
    return x;
}

std::pair<std::size_t, double> hash_bucket(std::string_view token, std::size_t dim, std::uint64_t seed) {
    std::uint64_t h = stable_hash(token, seed);
    std::uint64_t s = stable_hash(token, seed ^ 0x5bd1e9955bd1e995ULL);
    return {static_cast<std::size_t>(h % dim), (s & 1) ? 1.0 : -1.0};
}

std::vector<double> fallback_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
    if (dim < 2) throw ValidationError("embedding dimension must be >= 2");
    std::vector<double> v(dim, 0.0);
    for (const auto& tok : tokenize(text)) {
        auto [bucket, sign] = hash_bucket(tok, dim, seed);
        v[bucket] += sign;
    }
    double norm = std::sqrt(dot(v, v));
    if (norm > 0.0)
        for (auto& x : v) x /= norm;
    return v;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    EmbeddingTable table;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("malformed embedding record at line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() || !rec.contains("vec") ||
            !rec["vec"].is_array())
            throw ValidationError("malformed embedding record at line " + std::to_string(line_no));
        std::vector<double> vec;
        for (const auto& x : rec["vec"]) {
            if (!x.is_number()) throw ValidationError("non-numeric embedding value at line " + std::to_string(line_no));
            vec.push_back(x.get<double>());
            if (!std::isfinite(vec.back()))
                throw ValidationError("non-finite embedding value at line " + std::to_string(line_no));
        }
        if (dim == 0) dim = vec.size();
        if (vec.empty() || vec.size() != dim)
            throw ValidationError("embedding dimension mismatch at line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(dim) + ", got " + std::to_string(vec.size()));
        table[rec["id"].get<std::string>()] = std::move(vec);
    }
    return table;
}

NodeFeatures assemble_features(const Corpus& corpus, const ChargeVocabulary& charges,
                               const EmbeddingTable* embeddings, std::size_t dim, std::uint64_t seed) {
    NodeFeatures f;
    if (embeddings != nullptr) {
        f.source = FeatureSource::ExternalFile;
        auto lookup = [&](const std::string& id) -> const std::vector<double>& {
            auto it = embeddings->find(id);
            if (it == embeddings->end()) throw ValidationError("embedding file is missing id '" + id + "'");
            return it->second;
        };
        std::size_t file_dim = 0;
        auto fill = [&](ad::Tensor& dst, std::size_t row, const std::string& id) {
            const auto& v = lookup(id);
            if (v.size() != file_dim)
                throw ValidationError("embedding dimension mismatch for '" + id + "': expected " +
                                      std::to_string(file_dim) + ", got " + std::to_string(v.size()));
            std::copy(v.begin(), v.end(), dst.row(row).begin());
        };
        if (!corpus.empty()) file_dim = lookup(corpus[0].id).size();
        else if (charges.size() > 0) file_dim = lookup(charges.charges[0].id).size();
        f.dim = file_dim;
        f.case_features = ad::Tensor(corpus.size(), file_dim);
        f.charge_features = ad::Tensor(charges.size(), file_dim);
        for (std::size_t i = 0; i < corpus.size(); ++i) fill(f.case_features, i, corpus[i].id);
        for (std::size_t i = 0; i < charges.size(); ++i) fill(f.charge_features, i, charges.charges[i].id);
        return f;
    }
    f.source = FeatureSource::HashedTF;
    f.dim = dim;
    f.case_features = ad::Tensor(corpus.size(), dim);
    f.charge_features = ad::Tensor(charges.size(), dim);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto v = fallback_embed(corpus[i].text, dim, seed);
        std::copy(v.begin(), v.end(), f.case_features.row(i).begin());
    }
    for (std::size_t i = 0; i < charges.size(); ++i) {
        auto v = fallback_embed(charges.charges[i].phrase, dim, seed);
        std::copy(v.begin(), v.end(), f.charge_features.row(i).begin());
    }
    return f;
}

BinaryMatrix build_case_edges(const NeighborLists& neighbors, std::size_t n) {
    BinaryMatrix a(n, n);
    for (std::size_t i = 0; i < neighbors.size() && i < n; ++i) {
        for (const auto& nb : neighbors[i]) {
            if (nb.doc >= n) throw ValidationError("neighbor index out of range");
            if (nb.doc == i) continue;
            a.set(i, nb.doc);
            a.set(nb.doc, i);
        }
    }
    return a;
}

BinaryMatrix build_charge_edges(const ad::Tensor& charge_features, double delta, Similarity sim) {
    const std::size_t m = charge_features.rows();
    BinaryMatrix a(m, m);
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        norms[i] = std::sqrt(dot(charge_features.row(i), charge_features.row(i)));
        if (sim == Similarity::Cosine && norms[i] == 0.0)
            log::warn("charge " + std::to_string(i) + " has a zero feature vector; cosine treated as 0");
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            double s = dot(charge_features.row(i), charge_features.row(j));
            if (sim == Similarity::Cosine) s = (norms[i] == 0.0 || norms[j] == 0.0) ? 0.0 : s / (norms[i] * norms[j]);
            if (s > delta) {
                a.set(i, j);
                a.set(j, i);
            }
        }
    }
    return a;
}

BinaryMatrix build_case_charge_edges(const Corpus& corpus, const ChargeVocabulary& charges, bool token_boundary) {
    BinaryMatrix a(charges.size(), corpus.size());
    for (std::size_t i = 0; i < charges.size(); ++i)
        for (std::size_t j = 0; j < corpus.size(); ++j)
            if (contains_phrase(corpus[j].text, charges.charges[i].phrase, token_boundary)) a.set(i, j);
    return a;
}

BinaryMatrix compose(const BinaryMatrix& case_case, const BinaryMatrix& charge_charge,
                     const BinaryMatrix& charge_case) {
    const std::size_t n = case_case.rows();
    const std::size_t m = charge_charge.rows();
    if (case_case.cols() != n || charge_charge.cols() != m || charge_case.rows() != m || charge_case.cols() != n)
        throw ValidationError("compose: block shapes are inconsistent");
    BinaryMatrix a(n + m, n + m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (case_case(i, j)) a.set(i, j);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (charge_case(i, j)) {
                a.set(n + i, j);
                a.set(j, n + i);
            }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (charge_charge(i, j)) a.set(n + i, n + j);
    if (!a.is_symmetric()) throw ValidationError("composed adjacency is not symmetric");
    return a;
}

Gcg build_gcg(const Corpus& corpus, const ChargeVocabulary& charges, NodeFeatures features,
              const GcgConfig& config) {
    config.validate();
    if (corpus.empty()) throw ValidationError("cannot build a graph over an empty corpus");
    if (features.case_features.rows() != corpus.size())
        throw ValidationError("feature rows do not match the corpus size");

    Gcg g;
    const std::size_t n = corpus.size();
    const std::size_t m = config.include_charges ? charges.size() : 0;
    if (!config.include_charges) features.charge_features = ad::Tensor(0, features.dim);
    if (features.charge_features.rows() != m) throw ValidationError("feature rows do not match the charge count");

    auto index = build_index(corpus, config.bm25);
    auto neighbors = pairwise_topk(index, config.k);

    auto& adj = g.adjacency;
    adj.n = n;
    adj.m = m;
    adj.case_case = build_case_edges(neighbors, n);
    adj.charge_charge = config.charge_charge_edges
                            ? build_charge_edges(features.charge_features, config.delta, config.sim)
                            : BinaryMatrix(m, m);
    adj.charge_case = config.include_charges ? build_case_charge_edges(corpus, charges, config.token_boundary)
                                             : BinaryMatrix(0, n);
    adj.full = compose(adj.case_case, adj.charge_charge, adj.charge_case);

    for (const auto& d : corpus.docs()) {
        g.node_ids.push_back(d.id);
        g.node_kinds.push_back(d.role == Role::Query ? NodeKind::Query : NodeKind::Candidate);
    }
    for (std::size_t i = 0; i < m; ++i) {
        g.node_ids.push_back(charges.charges[i].id);
        g.node_kinds.push_back(NodeKind::Charge);
    }
    g.features = std::move(features);
    return g;
}

void write_graph(const std::filesystem::path& path, const Gcg& gcg) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    static constexpr const char* kKinds[] = {"query", "candidate", "charge"};
    out << "#nodes\t" << gcg.num_nodes() << '\n';
    for (std::size_t i = 0; i < gcg.num_nodes(); ++i)
        out << i << '\t' << gcg.node_ids[i] << '\t' << kKinds[static_cast<int>(gcg.node_kinds[i])] << '\n';

    const auto& a = gcg.adjacency.full;
    const std::size_t n = gcg.num_cases();
    out << "#edges\t" << a.count() / 2 << '\n';
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            if (!a(i, j)) continue;
            const char* type = j < n ? "case-case" : (i >= n ? "charge-charge" : "case-charge");
            out << i << '\t' << j << '\t' << type << '\n';
        }
}

}  // namespace caselink
