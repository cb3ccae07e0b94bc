#include "caselink/gradcheck.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "caselink/error.hpp"
#include "caselink/gcg.hpp"
#include "caselink/gnn.hpp"
#include "caselink/objective.hpp"

namespace caselink {

namespace {

constexpr std::size_t kQueries = 3;
constexpr std::size_t kCandidates = 5;
constexpr std::size_t kCharges = 4;
constexpr std::size_t kDim = 8;
constexpr double kKinkMargin = 1e-3;
constexpr std::size_t kMaxDraws = 100;

std::string word(std::size_t i) { return "w" + std::to_string(i); }

/// Charge rows of the last layer never reach the loss, so only case
/// neighborhoods count there.
bool well_conditioned(const std::vector<GatAttention>& attention, std::size_t nodes, std::size_t cases) {
    for (std::size_t l = 0; l < attention.size(); ++l) {
        const auto& layer = attention[l];
        const std::size_t observed = l + 1 == attention.size() ? cases : nodes;
        for (const auto& head : layer.scores) {
            std::vector<int> signs(nodes, 0);
            bool mixed = false;
            for (std::size_t e = 0; e < head.size(); ++e) {
                const double v = head[e];
                if (std::abs(v) < kKinkMargin) return false;
                const int sign = v > 0.0 ? 1 : -1;
                int& seen = signs[layer.dst[e]];
                if (seen != 0 && seen != sign && layer.dst[e] < observed) mixed = true;
                seen = sign;
            }
            if (!mixed) return false;
        }
    }
    return true;
}

}  // namespace

GradcheckResult run_gradcheck(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> vocab(0, 19);
    std::uniform_int_distribution<std::size_t> which_charge(0, kCharges - 1);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::string> phrases;
    for (std::size_t c = 0; c < kCharges; ++c) phrases.push_back("charge" + std::to_string(c) + " act");
    const ChargeVocabulary charges = make_charges(phrases);

    std::vector<Document> docs;
    for (std::size_t i = 0; i < kQueries + kCandidates; ++i) {
        std::string text;
        for (std::size_t t = 0; t < 12; ++t) text += word(vocab(rng)) + " ";
        if (coin(rng)) text += phrases[which_charge(rng)];
        const bool query = i < kQueries;
        docs.push_back({(query ? "q" : "d") + std::to_string(i), normalize_text(text),
                        query ? Role::Query : Role::Candidate, Split::Train});
    }
    const Corpus corpus(docs, Split::Train);

    LabelSet labels;
    std::uniform_int_distribution<std::size_t> pick(kQueries, kQueries + kCandidates - 1);
    for (std::size_t q = 0; q < kQueries; ++q) labels.relevance[docs[q].id].insert(docs[pick(rng)].id);

    auto random_rows = [&](std::size_t rows) {
        ad::Tensor t(rows, kDim);
        for (auto& v : t.data()) v = gauss(rng);
        for (std::size_t r = 0; r < rows; ++r) {
            double sq = 0.0;
            for (std::size_t c = 0; c < kDim; ++c) sq += t(r, c) * t(r, c);
            for (std::size_t c = 0; c < kDim; ++c) t(r, c) /= std::sqrt(sq);
        }
        return t;
    };
    NodeFeatures features{kDim, random_rows(corpus.size()), random_rows(kCharges), FeatureSource::ExternalFile};

    GcgConfig gcg_config;
    gcg_config.k = 2;
    gcg_config.delta = 0.0;
    const Gcg gcg = build_gcg(corpus, charges, std::move(features), gcg_config);
    const GraphIndex graph = graph_index(gcg.adjacency.full);
    const ad::Tensor x = gcg.feature_matrix();

    GnnConfig gnn;
    gnn.arch = GnnArch::GAT;
    gnn.layers = 2;
    gnn.heads = 2;
    gnn.dim = kDim;
    // Central differences are only meaningful away from the LeakyReLU kink.
    // A head whose every neighborhood sits on one side of it has an exactly
    // zero destination-attention gradient, where the check measures only
    // rounding noise. Redraw the parameters until neither happens.
    ModelParams params;
    std::uint64_t dropout_seed = 0;
    for (std::size_t attempt = 0;; ++attempt) {
        params = init_params(gnn, rng());
        dropout_seed = rng();
        ad::Tape tape;
        const BoundParams bound(tape, params, false);
        std::vector<GatAttention> attention;
        gnn_forward(graph, tape.constant(x), bound, gnn, Mode::Train, dropout_seed, nullptr, &attention);
        if (well_conditioned(attention, graph.num_nodes, gcg.num_cases())) break;
        if (attempt + 1 == kMaxDraws) throw NumericalError("gradcheck: no well-conditioned parameter draw");
    }

    LossConfig loss;
    loss.lambda = 1e-3;
    loss.n_easy = 1;
    loss.n_hard = 2;
    loss.hard_pool = 3;
    const Bm25Index index = build_index(corpus, gcg_config.bm25);
    const NegativeSampler sampler(corpus, labels, index, loss);
    const TrainingBatch batch = sampler.sample(sampler.queries(), rng);
    const auto candidates = corpus.candidate_indices();

    ad::LossFn f = [&](ad::Tape& tape, std::span<const ad::Var> vars) {
        const BoundParams bound(params, std::vector<ad::Var>(vars.begin(), vars.end()));
        const ad::Var h = tape.constant(x);
        const auto fwd = gnn_forward(graph, h, bound, gnn, Mode::Train, dropout_seed);
        return batch_loss(fwd.embeddings, gcg.num_cases(), batch, sampler, candidates, loss).total;
    };

    std::vector<ad::Tensor> values;
    for (const auto& [name, t] : params.entries()) values.push_back(t);

    GradcheckResult result;
    result.nodes = gcg.num_nodes();
    result.parameters = params.parameter_count();
    {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const auto& v : values) vars.push_back(tape.constant(v));
        result.loss = f(tape, vars).value().item();
    }
    result.max_rel_error = ad::finite_diff_check(f, values);
    return result;
}

}  // namespace caselink
