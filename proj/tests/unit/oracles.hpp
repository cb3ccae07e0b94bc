#pragma once

// Deliberately slow reference implementations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracles {

struct Metrics {
    double p = 0, r = 0, mi_f1 = 0, ma_f1 = 0, mrr = 0, map = 0, ndcg = 0;
};

/// `ranking[q]` is a list of candidate ids; `relevant[q]` a non-empty set.
inline Metrics metrics(const std::map<std::string, std::vector<std::string>>& ranking,
                       const std::map<std::string, std::set<std::string>>& relevant, std::size_t k) {
    Metrics out;
    double tp = 0, fp = 0, fn = 0;
    for (const auto& [q, list] : ranking) {
        const auto& rel = relevant.at(q);
        std::vector<int> gains;
        for (const auto& id : list) gains.push_back(rel.count(id) ? 1 : 0);
        std::vector<int> top(gains.begin(), gains.begin() + static_cast<long>(std::min(k, gains.size())));
        double hits = 0;
        for (int g : top) hits += g;
        out.p += hits / static_cast<double>(k);
        out.r += hits / static_cast<double>(rel.size());
        tp += hits;
        fp += static_cast<double>(top.size()) - hits;
        fn += static_cast<double>(rel.size()) - hits;

        for (std::size_t i = 0; i < top.size(); ++i)
            if (top[i]) {
                out.mrr += 1.0 / static_cast<double>(i + 1);
                break;
            }

        double ap = 0;
        for (std::size_t i = 0; i < gains.size(); ++i) {
            if (!gains[i]) continue;
            double prefix = 0;
            for (std::size_t j = 0; j <= i; ++j) prefix += gains[j];
            ap += prefix / static_cast<double>(i + 1);
        }
        out.map += ap / static_cast<double>(rel.size());

        std::vector<int> ideal(rel.size(), 1);
        ideal.resize(std::max(ideal.size(), k), 0);
        double dcg = 0, idcg = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const double disc = std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
            if (i < top.size()) dcg += top[i] * disc;
            idcg += ideal[i] * disc;
        }
        out.ndcg += dcg / idcg;
    }
    const double n = static_cast<double>(ranking.size());
    out.p /= n;
    out.r /= n;
    out.mrr /= n;
    out.map /= n;
    out.ndcg /= n;
    out.mi_f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    out.ma_f1 = out.p + out.r > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
    return out;
}

/// Direct evaluation of the Okapi formula over tokenized documents.
inline double bm25(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& query,
                   std::size_t d, double k1 = 1.2, double b = 0.75) {
    const double n_docs = static_cast<double>(docs.size());
    double avg = 0.0;
    for (const auto& x : docs) avg += static_cast<double>(x.size());
    avg /= n_docs;
    std::set<std::string> unique(query.begin(), query.end());
    std::vector<double> terms;
    for (const auto& t : unique) {
        double df = 0.0;
        for (const auto& x : docs) df += std::find(x.begin(), x.end(), t) != x.end() ? 1.0 : 0.0;
        const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
        if (df == 0.0 || tf == 0.0) continue;
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        const double len = static_cast<double>(docs[d].size());
        terms.push_back(idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg)));
    }
    // Ascending order makes mathematically tied documents bitwise equal.
    std::sort(terms.begin(), terms.end());
    double total = 0.0;
    for (double v : terms) total += v;
    return total;
}

}  // namespace oracles
