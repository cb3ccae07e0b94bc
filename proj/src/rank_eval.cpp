#include "caselink/rank_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "caselink/error.hpp"
#include "caselink/format.hpp"

namespace caselink {

namespace {

double cosine(const ad::Tensor& e, std::size_t a, std::size_t b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) {
        dot += e(a, c) * e(b, c);
        na += e(a, c) * e(a, c);
        nb += e(b, c) * e(b, c);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void sort_ranked(std::vector<std::pair<std::string, double>>& items) {
    std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
}

ad::Tensor case_rows(const ad::Tensor& all, std::size_t n) {
    ad::Tensor out(n, all.cols());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < all.cols(); ++c) out(r, c) = all(r, c);
    return out;
}

std::vector<std::string> corpus_ids(const Corpus& corpus) {
    std::vector<std::string> ids;
    ids.reserve(corpus.size());
    for (const auto& d : corpus.docs()) ids.push_back(d.id);
    return ids;
}

void check_rows(const Corpus& corpus, const ad::Tensor& embeddings) {
    if (embeddings.rows() != corpus.size())
        throw ValidationError("embeddings have " + std::to_string(embeddings.rows()) + " rows for " +
                              std::to_string(corpus.size()) + " documents");
}

}  // namespace

ad::Tensor embed_all(const Checkpoint& checkpoint, const Corpus& corpus, const ChargeVocabulary& charges,
                     const EmbeddingTable* embeddings) {
    const TrainConfig& config = checkpoint.config;
    const Gcg gcg = build_graph_for(corpus, charges, config, embeddings);
    ad::Tape tape;
    BoundParams bound(tape, checkpoint.params, false);
    const auto fwd = forward(tape, gcg, bound, config.gnn, Mode::Eval, 0);
    return case_rows(fwd.embeddings.value(), gcg.num_cases());
}

ad::Tensor feature_embeddings(const Corpus& corpus, const ChargeVocabulary& charges, const TrainConfig& config,
                              const EmbeddingTable* embeddings) {
    const NodeFeatures f = assemble_features(corpus, charges, embeddings, config.features.dim, config.features.seed);
    return f.case_features;
}

RankedList rank(std::size_t query, const ad::Tensor& embeddings, std::span<const std::size_t> candidates,
                const std::vector<std::string>& ids) {
    if (query >= embeddings.rows()) throw std::out_of_range("rank: query row out of range");
    RankedList out;
    out.query = ids.at(query);
    std::set<std::size_t> seen;
    for (std::size_t c : candidates) {
        if (c == query || !seen.insert(c).second) continue;
        if (c >= embeddings.rows()) throw std::out_of_range("rank: candidate row out of range");
        out.items.emplace_back(ids.at(c), cosine(embeddings, query, c));
    }
    sort_ranked(out.items);
    return out;
}

std::vector<RankedList> rank_all(const Corpus& corpus, const ad::Tensor& embeddings) {
    check_rows(corpus, embeddings);
    const auto ids = corpus_ids(corpus);
    const auto candidates = corpus.candidate_indices();
    std::vector<RankedList> out;
    for (std::size_t q : corpus.query_indices()) out.push_back(rank(q, embeddings, candidates, ids));
    return out;
}

RankedList two_stage_rank(const Corpus& corpus, std::size_t query, const Bm25Index& index,
                          const ad::Tensor& embeddings, std::size_t first_k) {
    check_rows(corpus, embeddings);
    if (index.doc_count() != corpus.size()) throw ValidationError("BM25 index does not match the corpus");
    const auto queries = corpus.query_indices();
    const std::set<std::size_t> exclude(queries.begin(), queries.end());
    std::vector<std::size_t> first_stage;
    for (const auto& s : top_k(index, query, first_k, exclude)) first_stage.push_back(s.doc);
    return rank(query, embeddings, first_stage, corpus_ids(corpus));
}

std::vector<RankedList> two_stage_rank_all(const Corpus& corpus, const Bm25Index& index,
                                           const ad::Tensor& embeddings, std::size_t first_k) {
    std::vector<RankedList> out;
    for (std::size_t q : corpus.query_indices()) out.push_back(two_stage_rank(corpus, q, index, embeddings, first_k));
    return out;
}

EvalReport evaluate(std::span<const RankedList> lists, const LabelSet& labels, std::size_t cutoff) {
    if (cutoff == 0) throw ValidationError("cutoff must be positive");
    if (lists.empty()) throw ValidationError("no ranked lists to evaluate");
    EvalReport report;
    report.cutoff = cutoff;

    for (const auto& list : lists) {
        const auto* rel = labels.find(list.query);
        if (rel == nullptr || rel->empty()) throw ValidationError("query '" + list.query + "' has no relevance labels");
        QueryMetrics m;
        m.query = list.query;
        m.relevant = rel->size();
        m.retrieved = std::min(cutoff, list.items.size());

        std::size_t found = 0;
        double ap = 0.0;
        double dcg = 0.0;
        for (std::size_t i = 0; i < list.items.size(); ++i) {
            if (rel->count(list.items[i].first) == 0) continue;
            ++found;
            ap += static_cast<double>(found) / static_cast<double>(i + 1);
            if (i < cutoff) {
                ++m.hits;
                dcg += 1.0 / std::log2(static_cast<double>(i + 2));
                if (m.reciprocal_rank == 0.0) m.reciprocal_rank = 1.0 / static_cast<double>(i + 1);
            }
        }
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min(cutoff, m.relevant); ++i) idcg += 1.0 / std::log2(static_cast<double>(i + 2));

        m.precision = static_cast<double>(m.hits) / static_cast<double>(cutoff);
        m.recall = static_cast<double>(m.hits) / static_cast<double>(m.relevant);
        m.average_precision = ap / static_cast<double>(m.relevant);
        m.ndcg = dcg / idcg;
        report.per_query.push_back(std::move(m));
    }

    std::sort(report.per_query.begin(), report.per_query.end(),
              [](const QueryMetrics& a, const QueryMetrics& b) { return a.query < b.query; });
    for (std::size_t i = 1; i < report.per_query.size(); ++i)
        if (report.per_query[i].query == report.per_query[i - 1].query)
            throw ValidationError("query '" + report.per_query[i].query + "' ranked twice");

    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (const auto& m : report.per_query) {
        report.precision += m.precision;
        report.recall += m.recall;
        report.mrr += m.reciprocal_rank;
        report.map += m.average_precision;
        report.ndcg += m.ndcg;
        tp += m.hits;
        fp += m.retrieved - m.hits;
        fn += m.relevant - m.hits;
    }
    const auto q = static_cast<double>(report.per_query.size());
    report.precision /= q;
    report.recall /= q;
    report.mrr /= q;
    report.map /= q;
    report.ndcg /= q;
    report.micro_f1 = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    const double pr = report.precision + report.recall;
    report.macro_f1 = pr == 0.0 ? 0.0 : 2.0 * report.precision * report.recall / pr;
    return report;
}

nlohmann::ordered_json EvalReport::to_json() const {
    const std::string k = std::to_string(cutoff);
    nlohmann::ordered_json metrics = {
        {"P@" + k, precision}, {"R@" + k, recall}, {"Mi-F1", micro_f1}, {"Ma-F1", macro_f1},
        {"MRR@" + k, mrr},     {"MAP", map},       {"NDCG@" + k, ndcg},
    };
    nlohmann::ordered_json definitions = {
        {"P@" + k, "mean over queries of hits in the top " + k + " divided by " + k},
        {"R@" + k, "mean over queries of hits in the top " + k + " divided by the number of relevant candidates"},
        {"Mi-F1", "F1 of true/false positives and false negatives pooled over all queries at cutoff " + k},
        {"Ma-F1", "harmonic mean of P@" + k + " and R@" + k},
        {"MRR@" + k, "mean reciprocal rank of the first relevant candidate within the top " + k + ", 0 if none"},
        {"MAP", "mean average precision over the full ranking"},
        {"NDCG@" + k, "binary-gain DCG with 1/log2(rank+1) discount over the top " + k + ", divided by the ideal DCG"},
    };
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& m : per_query)
        rows.push_back({{"query", m.query},
                        {"retrieved", m.retrieved},
                        {"relevant", m.relevant},
                        {"hits", m.hits},
                        {"P@" + k, m.precision},
                        {"R@" + k, m.recall},
                        {"RR@" + k, m.reciprocal_rank},
                        {"AP", m.average_precision},
                        {"NDCG@" + k, m.ndcg}});
    return {{"cutoff", cutoff},
            {"queries", per_query.size()},
            {"metrics", metrics},
            {"definitions", definitions},
            {"per_query", rows}};
}

std::string EvalReport::summary() const {
    const std::string k = std::to_string(cutoff);
    std::ostringstream out;
    out << "P@" << k << "=" << format_double(precision) << " R@" << k << "=" << format_double(recall)
        << " Mi-F1=" << format_double(micro_f1) << " Ma-F1=" << format_double(macro_f1) << " MRR@" << k << "="
        << format_double(mrr) << " MAP=" << format_double(map) << " NDCG@" << k << "=" << format_double(ndcg);
    return out.str();
}

void write_run(const std::filesystem::path& path, std::span<const RankedList> lists) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& list : lists)
        for (std::size_t i = 0; i < list.items.size(); ++i)
            out << list.query << '\t' << list.items[i].first << '\t' << (i + 1) << '\t'
                << format_double(list.items[i].second) << '\n';
}

std::vector<RankedList> read_run(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open run file " + path.string());
    std::map<std::string, std::vector<std::pair<std::size_t, std::pair<std::string, double>>>> rows;
    std::vector<std::string> order;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::istringstream fields(line);
        for (std::string f; std::getline(fields, f, '\t');) cols.push_back(f);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (cols.size() != 4) throw ValidationError(where + ": expected 4 tab-separated columns");
        std::size_t rank = 0;
        double score = 0.0;
        try {
            std::size_t used = 0;
            rank = std::stoul(cols[2], &used);
            if (used != cols[2].size() || rank == 0) throw std::invalid_argument("rank");
            score = std::stod(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("score");
        } catch (const std::exception&) {
            throw ValidationError(where + ": bad rank or score");
        }
        if (!rows.contains(cols[0])) order.push_back(cols[0]);
        rows[cols[0]].push_back({rank, {cols[1], score}});
    }
    std::vector<RankedList> out;
    for (const auto& q : order) {
        auto& r = rows[q];
        std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        RankedList list{q, {}};
        std::set<std::string> seen;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (r[i].first != i + 1) throw ValidationError("run file ranks for '" + q + "' are not 1..n");
            if (!seen.insert(r[i].second.first).second)
                throw ValidationError("candidate '" + r[i].second.first + "' ranked twice for '" + q + "'");
            list.items.push_back(r[i].second);
        }
        out.push_back(std::move(list));
    }
    return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << report.to_json().dump(2) << '\n';
}

}  // namespace caselink
