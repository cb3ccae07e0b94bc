#include "caselink/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "caselink/error.hpp"
#include "caselink/objective.hpp"

namespace caselink {

namespace {

std::string digest_rng(const std::mt19937_64& rng) {
    std::ostringstream state;
    state << rng;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : state.str()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

}  // namespace

void adam_step(ModelParams& params, const std::vector<ad::Tensor>& grads, AdamState& state, const AdamConfig& config) {
    auto& entries = params.entries();
    if (grads.size() != entries.size()) throw std::invalid_argument("adam_step: one gradient per parameter required");
    if (state.m.empty()) {
        for (const auto& [name, t] : entries) {
            state.m.emplace_back(t.rows(), t.cols());
            state.v.emplace_back(t.rows(), t.cols());
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < entries.size(); ++p) {
        auto& theta = entries[p].second;
        const auto& g = grads[p];
        if (!g.same_shape(theta)) throw std::invalid_argument("adam_step: gradient shape mismatch for " + entries[p].first);
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            theta[i] -= config.lr * config.weight_decay * theta[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            theta[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
    params.round_to_single();
}

std::string to_json_line(const StepLog& log) {
    nlohmann::json rec = {{"epoch", log.epoch},
                          {"step", log.step},
                          {"infonce", log.infonce},
                          {"degreg", log.degreg},
                          {"total", log.total}};
    return rec.dump();
}

double TrainResult::epoch_loss(std::size_t epoch) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : log)
        if (s.epoch == epoch) {
            sum += s.total;
            ++count;
        }
    if (count == 0) throw std::out_of_range("no log entries for epoch " + std::to_string(epoch));
    return sum / static_cast<double>(count);
}

Gcg build_graph_for(const Corpus& corpus, const ChargeVocabulary& charges, const TrainConfig& config,
                    const EmbeddingTable* embeddings) {
    NodeFeatures features = assemble_features(corpus, charges, embeddings, config.features.dim, config.features.seed);
    if (features.dim != config.gnn.dim)
        throw ValidationError("dim mismatch: node features are " + std::to_string(features.dim) +
                              "-dimensional, the model expects " + std::to_string(config.gnn.dim));
    return build_gcg(corpus, charges, std::move(features), config.gcg);
}

TrainResult train(const Corpus& corpus, const ChargeVocabulary& charges, const LabelSet& labels,
                  const TrainConfig& config, const EmbeddingTable* embeddings, const TrainCallbacks& callbacks) {
    config.validate();
    if (corpus.split() != Split::Train) throw ValidationError("training requires the train split");
    for (const auto& d : corpus.docs())
        if (d.split != Split::Train) throw ValidationError("test document '" + d.id + "' in training corpus");

    TrainResult result;
    const Gcg gcg = build_graph_for(corpus, charges, config, embeddings);
    result.node_ids = gcg.node_ids;

    const auto index = build_index(corpus, config.gcg.bm25);
    const NegativeSampler sampler(corpus, labels, index, config.loss);
    const auto candidates = corpus.candidate_indices();

    std::mt19937_64 rng(config.seed);
    ModelParams params = init_params(config.gnn, rng());
    AdamState adam;

    auto snapshot = [&](std::size_t epoch) {
        Checkpoint c;
        c.params = params;
        c.config = config;
        c.epoch = epoch;
        c.rng_digest = digest_rng(rng);
        return c;
    };

    std::vector<std::size_t> order = sampler.queries();
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            ++step;
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const TrainingBatch batch =
                sampler.sample(std::span<const std::size_t>(order).subspan(start, end - start), rng);
            const std::uint64_t dropout_seed = rng();

            ad::Tape tape;
            BoundParams bound(tape, params, true);
            ForwardTrace trace;
            StepLog log;
            ad::Var loss;
            try {
                auto fwd = forward(tape, gcg, bound, config.gnn, Mode::Train, dropout_seed, &trace);
                auto terms = batch_loss(fwd.embeddings, gcg.num_cases(), batch, sampler, candidates, config.loss, &trace);
                loss = terms.total;
                log = {epoch, step, terms.infonce, terms.degreg, terms.total_value};
                tape.backward(loss);
            } catch (const NumericalError& e) {
                throw NumericalError("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " +
                                     e.what());
            }
            if (step == 1) result.first_step_trace = trace;

            std::vector<ad::Tensor> grads;
            grads.reserve(bound.vars().size());
            for (const auto& v : bound.vars()) grads.push_back(tape.grad(v));
            adam_step(params, grads, adam, config.adam);

            result.log.push_back(log);
            if (callbacks.on_step) callbacks.on_step(log);
        }
        if (config.eval_every > 0 && epoch % config.eval_every == 0 && epoch != config.epochs && callbacks.on_checkpoint)
            callbacks.on_checkpoint(snapshot(epoch));
    }
    result.checkpoint = snapshot(config.epochs);
    return result;
}

}  // namespace caselink
