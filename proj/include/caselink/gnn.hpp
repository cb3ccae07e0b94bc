#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "caselink/autodiff.hpp"
#include "caselink/gcg.hpp"

namespace caselink {

enum class GnnArch { GAT, GCN, SAGE };
enum class Activation { ELU, Identity };
enum class Mode { Train, Eval };

std::string_view to_string(GnnArch arch);
std::string_view to_string(Activation act);

struct GnnConfig {
    GnnArch arch = GnnArch::GAT;
    std::size_t layers = 2;
    std::size_t heads = 1;
    double dropout = 0.1;
    Activation activation = Activation::ELU;
    std::size_t dim = 128;
    /// h = h^k + x. Disabled by the "w/o residual" ablation.
    bool residual = true;
    /// Skip the GNN entirely: embeddings are the input features.
    bool node_feat_only = false;
    double leaky_slope = 0.2;
    double elu_alpha = 1.0;

    void validate() const;
};

/// Named tensors in a fixed order (checkpoint order). Values are kept exactly
/// representable in single precision.
class ModelParams {
  public:
    void add(std::string name, ad::Tensor value);
    [[nodiscard]] const ad::Tensor& at(const std::string& name) const;
    [[nodiscard]] ad::Tensor& at(const std::string& name);
    [[nodiscard]] bool contains(const std::string& name) const;

    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }
    [[nodiscard]] const std::vector<std::pair<std::string, ad::Tensor>>& entries() const { return entries_; }
    [[nodiscard]] std::vector<std::pair<std::string, ad::Tensor>>& entries() { return entries_; }
    [[nodiscard]] std::size_t parameter_count() const;

    /// Rounds every value to the nearest float.
    void round_to_single();

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

  private:
    std::vector<std::pair<std::string, ad::Tensor>> entries_;
};

/// Glorot-uniform weights and attention vectors, zero biases.
ModelParams init_params(const GnnConfig& config, std::uint64_t seed);
/// Same layout as init_params, every value zero.
ModelParams zero_params(const GnnConfig& config);

/// Parameters placed on a tape, looked up by name.
class BoundParams {
  public:
    BoundParams(ad::Tape& tape, const ModelParams& params, bool requires_grad);
    /// Wraps existing tape handles, aligned with `params` order.
    BoundParams(const ModelParams& params, std::vector<ad::Var> vars);

    [[nodiscard]] const ad::Var& operator[](const std::string& name) const;
    [[nodiscard]] const std::vector<ad::Var>& vars() const { return vars_; }

  private:
    std::map<std::string, std::size_t> index_;
    std::vector<ad::Var> vars_;
};

/// Directed edge list with both orientations of every undirected edge; no
/// self-loops.
struct GraphIndex {
    std::size_t num_nodes = 0;
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
};

GraphIndex graph_index(const BinaryMatrix& adjacency);

/// Attention coefficients of one GAT layer, grouped by destination (self-loops
/// included), one column per head.
struct GatAttention {
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    std::vector<ad::Tensor> alpha;
    /// Scores before the LeakyReLU, same layout as `alpha`.
    std::vector<ad::Tensor> scores;
};

ad::Var gat_layer(const GraphIndex& graph, const ad::Var& h, const BoundParams& params, std::size_t layer,
                  const GnnConfig& config, GatAttention* attention = nullptr);
ad::Var gcn_layer(const GraphIndex& graph, const ad::Var& h, const BoundParams& params, std::size_t layer,
                  const GnnConfig& config);
ad::Var sage_layer(const GraphIndex& graph, const ad::Var& h, const BoundParams& params, std::size_t layer,
                   const GnnConfig& config);

/// Key/value record of what a forward pass (and loss) actually computed.
/// Ablation checks diff two traces.
struct ForwardTrace {
    std::map<std::string, std::string> entries;

    void set(const std::string& key, const std::string& value) { entries[key] = value; }
    /// Keys whose values differ (or exist on one side only).
    [[nodiscard]] std::vector<std::string> diff(const ForwardTrace& other) const;
};

struct ForwardResult {
    ad::Var embeddings;             // h, (n+m)×d
    std::optional<ad::Var> gnn_out; // h^k before the residual
};

/// k GNN layers over `x` with dropout before each layer in Train mode, then
/// the residual h^k + x.
ForwardResult gnn_forward(const GraphIndex& graph, const ad::Var& x, const BoundParams& params,
                          const GnnConfig& config, Mode mode, std::uint64_t seed, ForwardTrace* trace = nullptr,
                          std::vector<GatAttention>* attention = nullptr);

ForwardResult forward(ad::Tape& tape, const Gcg& gcg, const BoundParams& params, const GnnConfig& config, Mode mode,
                      std::uint64_t seed, ForwardTrace* trace = nullptr);

}  // namespace caselink
