#include "caselink/gnn.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "caselink/error.hpp"

namespace caselink {

namespace {

std::string layer_key(std::size_t layer, const char* what) { return "gnn." + std::to_string(layer) + "." + what; }
std::string head_key(std::size_t layer, const char* what, std::size_t head) {
    return layer_key(layer, what) + "." + std::to_string(head);
}

ad::Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> unif(-limit, limit);
    ad::Tensor t(rows, cols);
    for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(unif(rng)));
    return t;
}

std::uint64_t layer_seed(std::uint64_t seed, std::size_t layer) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (layer + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

ad::Var activate(const ad::Var& x, const GnnConfig& config) {
    return config.activation == Activation::ELU ? ad::elu(x, config.elu_alpha) : x;
}

/// Per-destination neighborhoods with the self-loop first.
void with_self_loops(const GraphIndex& g, std::vector<std::size_t>& src, std::vector<std::size_t>& dst) {
    src.clear();
    dst.clear();
    src.reserve(g.src.size() + g.num_nodes);
    dst.reserve(g.src.size() + g.num_nodes);
    std::size_t e = 0;
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        src.push_back(v);
        dst.push_back(v);
        for (; e < g.dst.size() && g.dst[e] == v; ++e) {
            src.push_back(g.src[e]);
            dst.push_back(v);
        }
    }
}

void check_input(const GraphIndex& graph, const ad::Var& h, const GnnConfig& config) {
    if (h.rows() != graph.num_nodes)
        throw std::invalid_argument("GNN input has " + std::to_string(h.rows()) + " rows for " +
                                    std::to_string(graph.num_nodes) + " nodes");
    if (h.cols() != config.dim)
        throw std::invalid_argument("GNN input width " + std::to_string(h.cols()) + " != configured dim " +
                                    std::to_string(config.dim));
}

}  // namespace

std::string_view to_string(GnnArch arch) {
    switch (arch) {
        case GnnArch::GAT: return "gat";
        case GnnArch::GCN: return "gcn";
        case GnnArch::SAGE: return "sage";
    }
    return "?";
}

std::string_view to_string(Activation act) { return act == Activation::ELU ? "elu" : "identity"; }

void GnnConfig::validate() const {
    if (layers < 1 || layers > 3) throw ValidationError("gnn.layers must be 1, 2 or 3");
    if (heads < 1) throw ValidationError("gnn.heads must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("gnn.dropout must lie in [0, 1)");
    if (dim < 2) throw ValidationError("gnn dim must be >= 2");
}

// ---------------------------------------------------------------------------

void ModelParams::add(std::string name, ad::Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    entries_.emplace_back(std::move(name), std::move(value));
}

bool ModelParams::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const ad::Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
}

ad::Tensor& ModelParams::at(const std::string& name) {
    return const_cast<ad::Tensor&>(static_cast<const ModelParams&>(*this).at(name));
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

void ModelParams::round_to_single() {
    for (auto& [name, t] : entries_)
        for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

ModelParams init_params(const GnnConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    if (config.node_feat_only) return p;
    std::mt19937_64 rng(seed);
    const std::size_t d = config.dim;
    for (std::size_t l = 0; l < config.layers; ++l) {
        switch (config.arch) {
            case GnnArch::GAT:
                for (std::size_t h = 0; h < config.heads; ++h) {
                    p.add(head_key(l, "w", h), glorot(d, d, rng));
                    p.add(head_key(l, "att", h), glorot(2 * d, 1, rng));
                }
                break;
            case GnnArch::GCN: p.add(head_key(l, "w", 0), glorot(d, d, rng)); break;
            case GnnArch::SAGE: p.add(head_key(l, "w", 0), glorot(2 * d, d, rng)); break;
        }
        p.add(layer_key(l, "bias"), ad::Tensor(1, d));
    }
    return p;
}

ModelParams zero_params(const GnnConfig& config) {
    ModelParams p = init_params(config, 0);
    for (auto& [name, t] : p.entries())
        for (auto& v : t.data()) v = 0.0;
    return p;
}

BoundParams::BoundParams(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
    for (const auto& [name, t] : params.entries()) {
        index_[name] = vars_.size();
        vars_.push_back(requires_grad ? tape.parameter(t) : tape.constant(t));
    }
}

BoundParams::BoundParams(const ModelParams& params, std::vector<ad::Var> vars) : vars_(std::move(vars)) {
    if (vars_.size() != params.size()) throw std::invalid_argument("BoundParams: handle count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) index_[params.entries()[i].first] = i;
}

const ad::Var& BoundParams::operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no bound parameter named " + name);
    return vars_[it->second];
}

// ---------------------------------------------------------------------------

GraphIndex graph_index(const BinaryMatrix& adjacency) {
    GraphIndex g;
    g.num_nodes = adjacency.rows();
    for (std::size_t v = 0; v < adjacency.rows(); ++v)
        for (std::size_t u = 0; u < adjacency.cols(); ++u)
            if (u != v && adjacency(v, u)) {
                g.src.push_back(u);
                g.dst.push_back(v);
            }
    return g;
}

ad::Var gat_layer(const GraphIndex& graph, const ad::Var& h, const BoundParams& params, std::size_t layer,
                  const GnnConfig& config, GatAttention* attention) {
    check_input(graph, h, config);
    const std::size_t d = config.dim;
    const std::size_t n = graph.num_nodes;
    std::vector<std::size_t> src, dst;
    with_self_loops(graph, src, dst);

    std::vector<std::size_t> first_half(d), second_half(d);
    std::iota(first_half.begin(), first_half.end(), 0);
    std::iota(second_half.begin(), second_half.end(), d);

    if (attention) {
        attention->src = src;
        attention->dst = dst;
        attention->alpha.clear();
        attention->scores.clear();
    }

    std::optional<ad::Var> total;
    for (std::size_t head = 0; head < config.heads; ++head) {
        const ad::Var& w = params[head_key(layer, "w", head)];
        const ad::Var& att = params[head_key(layer, "att", head)];
        ad::Var z = ad::matmul(h, w);
        ad::Var score_src = ad::matmul(z, ad::gather_rows(att, first_half));
        ad::Var score_dst = ad::matmul(z, ad::gather_rows(att, second_half));
        ad::Var scores = ad::add(ad::gather_rows(score_src, src), ad::gather_rows(score_dst, dst));
        if (attention) attention->scores.push_back(scores.value());
        ad::Var logits = ad::leaky_relu(scores, config.leaky_slope);
        ad::Var alpha = ad::segment_softmax(logits, dst, n);
        if (attention) attention->alpha.push_back(alpha.value());
        ad::Var agg = ad::scatter_add_rows(ad::scale_rows(ad::gather_rows(z, src), alpha), dst, n);
        total = total ? ad::add(*total, agg) : agg;
    }
    ad::Var out = config.heads > 1 ? ad::scale(*total, 1.0 / static_cast<double>(config.heads)) : *total;
    return activate(ad::add(out, params[layer_key(layer, "bias")]), config);
}

ad::Var gcn_layer(const GraphIndex& graph, const ad::Var& h, const BoundParams& params, std::size_t layer,
                  const GnnConfig& config) {
    check_input(graph, h, config);
    const std::size_t n = graph.num_nodes;
    std::vector<std::size_t> src, dst;
    with_self_loops(graph, src, dst);
    std::vector<double> degree(n, 0.0);
    for (auto v : dst) degree[v] += 1.0;
    ad::Tensor weights(src.size(), 1);
    for (std::size_t e = 0; e < src.size(); ++e) weights[e] = 1.0 / std::sqrt(degree[src[e]] * degree[dst[e]]);

    ad::Tape& tape = h.tape();
    ad::Var z = ad::matmul(h, params[head_key(layer, "w", 0)]);
    ad::Var agg = ad::scatter_add_rows(ad::scale_rows(ad::gather_rows(z, src), tape.constant(std::move(weights))),
                                       dst, n);
    return activate(ad::add(agg, params[layer_key(layer, "bias")]), config);
}

ad::Var sage_layer(const GraphIndex& graph, const ad::Var& h, const BoundParams& params, std::size_t layer,
                   const GnnConfig& config) {
    check_input(graph, h, config);
    const std::size_t n = graph.num_nodes;
    ad::Tensor inv_degree(n, 1);
    for (auto v : graph.dst) inv_degree[v] += 1.0;
    for (auto& v : inv_degree.data()) v = v > 0.0 ? 1.0 / v : 0.0;

    ad::Tape& tape = h.tape();
    ad::Var neighbor_mean = ad::scale_rows(ad::scatter_add_rows(ad::gather_rows(h, graph.src), graph.dst, n),
                                           tape.constant(std::move(inv_degree)));
    ad::Var out = ad::matmul(ad::concat_cols(h, neighbor_mean), params[head_key(layer, "w", 0)]);
    return activate(ad::add(out, params[layer_key(layer, "bias")]), config);
}

// ---------------------------------------------------------------------------

std::vector<std::string> ForwardTrace::diff(const ForwardTrace& other) const {
    std::vector<std::string> keys;
    for (const auto& [k, v] : entries) {
        auto it = other.entries.find(k);
        if (it == other.entries.end() || it->second != v) keys.push_back(k);
    }
    for (const auto& [k, v] : other.entries)
        if (!entries.contains(k)) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
}

ForwardResult gnn_forward(const GraphIndex& graph, const ad::Var& x, const BoundParams& params,
                          const GnnConfig& config, Mode mode, std::uint64_t seed, ForwardTrace* trace,
                          std::vector<GatAttention>* attention) {
    config.validate();
    if (trace) {
        trace->set("graph.nodes", std::to_string(graph.num_nodes));
        trace->set("graph.directed_edges", std::to_string(graph.src.size()));
        trace->set("gnn.mode", mode == Mode::Train ? "train" : "eval");
        trace->set("gnn.node_feat_only", config.node_feat_only ? "true" : "false");
    }
    if (config.node_feat_only) {
        if (trace) trace->set("gnn.layers_applied", "0");
        return {x, std::nullopt};
    }
    check_input(graph, x, config);
    if (attention) attention->clear();

    const bool train = mode == Mode::Train;
    ad::Var h = x;
    for (std::size_t l = 0; l < config.layers; ++l) {
        h = ad::dropout(h, config.dropout, layer_seed(seed, l), train);
        switch (config.arch) {
            case GnnArch::GAT: {
                GatAttention att;
                h = gat_layer(graph, h, params, l, config, attention ? &att : nullptr);
                if (attention) attention->push_back(std::move(att));
                break;
            }
            case GnnArch::GCN: h = gcn_layer(graph, h, params, l, config); break;
            case GnnArch::SAGE: h = sage_layer(graph, h, params, l, config); break;
        }
    }
    if (trace) {
        trace->set("gnn.arch", std::string(to_string(config.arch)));
        trace->set("gnn.layers_applied", std::to_string(config.layers));
        trace->set("gnn.heads", std::to_string(config.heads));
        trace->set("gnn.activation", std::string(to_string(config.activation)));
        trace->set("gnn.dropout", std::to_string(train ? config.dropout : 0.0));
        trace->set("gnn.residual", config.residual ? "true" : "false");
    }
    ad::Var out = config.residual ? ad::add(h, x) : h;
    return {out, h};
}

ForwardResult forward(ad::Tape& tape, const Gcg& gcg, const BoundParams& params, const GnnConfig& config, Mode mode,
                      std::uint64_t seed, ForwardTrace* trace) {
    if (gcg.features.dim != config.dim)
        throw ValidationError("feature dim " + std::to_string(gcg.features.dim) + " does not match model dim " +
                              std::to_string(config.dim));
    if (trace) {
        const auto& a = gcg.adjacency;
        trace->set("graph.case_nodes", std::to_string(a.n));
        trace->set("graph.charge_nodes", std::to_string(a.m));
        trace->set("graph.edges.case_case", std::to_string(a.case_case.count() / 2));
        trace->set("graph.edges.charge_charge", std::to_string(a.charge_charge.count() / 2));
        trace->set("graph.edges.case_charge", std::to_string(a.charge_case.count()));
    }
    ad::Var x = tape.constant(gcg.feature_matrix());
    return gnn_forward(graph_index(gcg.adjacency.full), x, params, config, mode, seed, trace);
}

}  // namespace caselink
