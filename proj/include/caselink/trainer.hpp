#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "caselink/config.hpp"
#include "caselink/corpus.hpp"
#include "caselink/gcg.hpp"
#include "caselink/gnn.hpp"

namespace caselink {

struct AdamState {
    std::size_t step = 0;
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;
};

/// One Adam update with decoupled weight decay (θ -= lr·wd·θ first) and bias
/// correction. `grads` is aligned with `params.entries()`. Parameters are
/// rounded back to single precision afterwards.
void adam_step(ModelParams& params, const std::vector<ad::Tensor>& grads, AdamState& state, const AdamConfig& config);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t format_version = kCheckpointVersion;
    ModelParams params;
    TrainConfig config;
    std::size_t epoch = 0;
    std::string rng_digest;
};

/// "CLNK1", u64 little-endian header length, JSON header, f32 LE payload.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

struct StepLog {
    std::size_t epoch = 0;  // 1-based
    std::size_t step = 0;   // global, 1-based
    double infonce = 0.0;
    double degreg = 0.0;
    double total = 0.0;
};

/// `{"epoch", "step", "infonce", "degreg", "total"}` on one line.
std::string to_json_line(const StepLog& log);

struct TrainCallbacks {
    std::function<void(const StepLog&)> on_step;
    /// Called every `eval_every` epochs with the current state.
    std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepLog> log;
    /// Ids of every node of the training graph (provenance audit).
    std::vector<std::string> node_ids;
    ForwardTrace first_step_trace;

    /// Mean total loss of the given 1-based epoch.
    [[nodiscard]] double epoch_loss(std::size_t epoch) const;
};

/// Builds the training graph and optimizes the GNN on it. The corpus must
/// be the Train split.
TrainResult train(const Corpus& corpus, const ChargeVocabulary& charges, const LabelSet& labels,
                  const TrainConfig& config, const EmbeddingTable* embeddings = nullptr,
                  const TrainCallbacks& callbacks = {});

/// Features and graph for `corpus` under the feature/graph settings of `config`.
Gcg build_graph_for(const Corpus& corpus, const ChargeVocabulary& charges, const TrainConfig& config,
                    const EmbeddingTable* embeddings);

}  // namespace caselink
