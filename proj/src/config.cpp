#include "caselink/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "caselink/error.hpp"
#include "caselink/format.hpp"

namespace caselink {

namespace {

const std::vector<ConfigKey> kKeys = {
    {"data.train_corpus", "", "training corpus (JSONL)"},
    {"data.train_labels", "", "training labels (JSON)"},
    {"data.charges", "", "charge vocabulary (one phrase per line)"},
    {"data.embeddings", "", "optional external node embeddings (JSONL); empty = hashed TF features"},
    {"features.dim", "128", "feature / hidden width d"},
    {"features.seed", "1", "seed of the hashed TF fallback encoder"},
    {"bm25.k1", "1.2", "BM25 k1"},
    {"bm25.b", "0.75", "BM25 b"},
    {"bm25.stopwords", "", "comma-separated stopwords removed before indexing"},
    {"gcg.k", "5", "BM25 TopK neighbours per case"},
    {"gcg.delta", "0.9", "charge-charge similarity threshold"},
    {"gcg.sim", "cosine", "charge-charge similarity: cosine | dot"},
    {"gcg.token_boundary", "false", "match charges on token boundaries instead of substrings"},
    {"gnn.arch", "gat", "gat | gcn | sage"},
    {"gnn.layers", "2", "number of GNN layers (1-3)"},
    {"gnn.heads", "1", "GAT attention heads (averaged)"},
    {"gnn.dropout", "0.1", "feature dropout before each layer"},
    {"gnn.activation", "elu", "elu | identity"},
    {"loss.tau", "0.1", "InfoNCE temperature"},
    {"loss.lambda", "0.001", "degree regularisation coefficient"},
    {"loss.sim", "dot", "training similarity: dot | cosine"},
    {"loss.n_easy", "1", "easy negatives per query"},
    {"loss.n_hard", "5", "BM25 hard negatives per query"},
    {"loss.hard_pool", "50", "BM25-ranked non-relevant pool for hard negatives"},
    {"loss.in_batch", "true", "use other queries' positives as easy negatives"},
    {"train.batch_size", "32", "queries per step"},
    {"train.epochs", "100", "training epochs"},
    {"train.lr", "0.001", "Adam learning rate"},
    {"train.weight_decay", "1e-05", "decoupled weight decay"},
    {"train.beta1", "0.9", "Adam beta1"},
    {"train.beta2", "0.999", "Adam beta2"},
    {"train.eps", "1e-08", "Adam epsilon"},
    {"train.seed", "7", "training seed (init, shuffling, sampling, dropout)"},
    {"train.eval_every", "0", "epochs between intermediate checkpoints; 0 = final only"},
    {"ablation.node_feat_only", "false", "skip the GNN; embeddings are the node features"},
    {"ablation.case_case_only", "false", "drop charge nodes"},
    {"ablation.no_charge_charge", "false", "remove charge-charge edges"},
    {"ablation.no_residual", "false", "drop the residual connection"},
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ValidationError("config key " + key + ": '" + v + "' is not a number");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ValidationError("config key " + key + ": '" + v + "' is not a non-negative integer");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key " + key + ": '" + v + "' is not a boolean");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("train.batch_size must be >= 1");
    if (!(adam.lr > 0.0)) throw ValidationError("train.lr must be > 0");
    if (!(adam.weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ValidationError("Adam betas must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw ValidationError("train.eps must be > 0");
    if (gnn.dim != features.dim)
        throw ValidationError("config dim mismatch: gnn dim " + std::to_string(gnn.dim) + " vs features.dim " +
                              std::to_string(features.dim));
    gcg.validate();
    gnn.validate();
    loss.validate();
}

RunConfig::RunConfig() {
    for (const auto& k : kKeys) values_[k.name] = k.default_value;
}

const std::vector<ConfigKey>& RunConfig::keys() { return kKeys; }

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
    return it->second;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    RunConfig cfg;
    cfg.base_dir_ = path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.find('=') == std::string::npos)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        cfg.set_assignment(line);
    }
    return cfg;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& values) {
    RunConfig cfg;
    for (const auto& [k, v] : values) cfg.set(k, v);
    return cfg;
}

std::filesystem::path RunConfig::data_path(const std::string& key) const {
    const auto& v = get(key);
    if (v.empty()) return {};
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
}

std::map<std::string, std::string> RunConfig::hyperparameters() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_)
        if (!k.starts_with("data.")) out[k] = v;
    return out;
}

TrainConfig RunConfig::to_train_config() const {
    TrainConfig c;
    auto d = [&](const char* k) { return parse_double(k, get(k)); };
    auto u = [&](const char* k) { return parse_uint(k, get(k)); };
    auto b = [&](const char* k) { return parse_bool(k, get(k)); };

    c.features.dim = u("features.dim");
    c.features.seed = u("features.seed");

    c.gcg.bm25.k1 = d("bm25.k1");
    c.gcg.bm25.b = d("bm25.b");
    {
        std::stringstream ss(get("bm25.stopwords"));
        std::string w;
        while (std::getline(ss, w, ','))
            if (!trim(w).empty()) c.gcg.bm25.stopwords.insert(trim(w));
    }
    c.gcg.k = u("gcg.k");
    c.gcg.delta = d("gcg.delta");
    const auto& gsim = get("gcg.sim");
    if (gsim == "cosine") c.gcg.sim = Similarity::Cosine;
    else if (gsim == "dot") c.gcg.sim = Similarity::Dot;
    else throw ValidationError("gcg.sim must be cosine or dot");
    c.gcg.token_boundary = b("gcg.token_boundary");
    c.gcg.include_charges = !b("ablation.case_case_only");
    c.gcg.charge_charge_edges = !b("ablation.no_charge_charge");

    const auto& arch = get("gnn.arch");
    if (arch == "gat") c.gnn.arch = GnnArch::GAT;
    else if (arch == "gcn") c.gnn.arch = GnnArch::GCN;
    else if (arch == "sage") c.gnn.arch = GnnArch::SAGE;
    else throw ValidationError("gnn.arch must be gat, gcn or sage");
    c.gnn.layers = u("gnn.layers");
    c.gnn.heads = u("gnn.heads");
    c.gnn.dropout = d("gnn.dropout");
    const auto& act = get("gnn.activation");
    if (act == "elu") c.gnn.activation = Activation::ELU;
    else if (act == "identity") c.gnn.activation = Activation::Identity;
    else throw ValidationError("gnn.activation must be elu or identity");
    c.gnn.dim = c.features.dim;
    c.gnn.residual = !b("ablation.no_residual");
    c.gnn.node_feat_only = b("ablation.node_feat_only");

    c.loss.tau = d("loss.tau");
    c.loss.lambda = d("loss.lambda");
    const auto& lsim = get("loss.sim");
    if (lsim == "dot") c.loss.sim = Similarity::Dot;
    else if (lsim == "cosine") c.loss.sim = Similarity::Cosine;
    else throw ValidationError("loss.sim must be dot or cosine");
    c.loss.n_easy = u("loss.n_easy");
    c.loss.n_hard = u("loss.n_hard");
    c.loss.hard_pool = u("loss.hard_pool");
    c.loss.in_batch = b("loss.in_batch");

    c.batch_size = u("train.batch_size");
    c.epochs = u("train.epochs");
    c.adam.lr = d("train.lr");
    c.adam.weight_decay = d("train.weight_decay");
    c.adam.beta1 = d("train.beta1");
    c.adam.beta2 = d("train.beta2");
    c.adam.eps = d("train.eps");
    c.seed = u("train.seed");
    c.eval_every = u("train.eval_every");
    c.validate();
    return c;
}

RunConfig RunConfig::from_train_config(const TrainConfig& c) {
    RunConfig r;
    auto f = [](double v) { return format_double(v); };
    r.set("features.dim", std::to_string(c.features.dim));
    r.set("features.seed", std::to_string(c.features.seed));
    r.set("bm25.k1", f(c.gcg.bm25.k1));
    r.set("bm25.b", f(c.gcg.bm25.b));
    std::string stop;
    for (const auto& w : c.gcg.bm25.stopwords) stop += (stop.empty() ? "" : ",") + w;
    r.set("bm25.stopwords", stop);
    r.set("gcg.k", std::to_string(c.gcg.k));
    r.set("gcg.delta", f(c.gcg.delta));
    r.set("gcg.sim", c.gcg.sim == Similarity::Cosine ? "cosine" : "dot");
    r.set("gcg.token_boundary", bool_str(c.gcg.token_boundary));
    r.set("ablation.case_case_only", bool_str(!c.gcg.include_charges));
    r.set("ablation.no_charge_charge", bool_str(!c.gcg.charge_charge_edges));
    r.set("gnn.arch", std::string(to_string(c.gnn.arch)));
    r.set("gnn.layers", std::to_string(c.gnn.layers));
    r.set("gnn.heads", std::to_string(c.gnn.heads));
    r.set("gnn.dropout", f(c.gnn.dropout));
    r.set("gnn.activation", std::string(to_string(c.gnn.activation)));
    r.set("ablation.no_residual", bool_str(!c.gnn.residual));
    r.set("ablation.node_feat_only", bool_str(c.gnn.node_feat_only));
    r.set("loss.tau", f(c.loss.tau));
    r.set("loss.lambda", f(c.loss.lambda));
    r.set("loss.sim", c.loss.sim == Similarity::Dot ? "dot" : "cosine");
    r.set("loss.n_easy", std::to_string(c.loss.n_easy));
    r.set("loss.n_hard", std::to_string(c.loss.n_hard));
    r.set("loss.hard_pool", std::to_string(c.loss.hard_pool));
    r.set("loss.in_batch", bool_str(c.loss.in_batch));
    r.set("train.batch_size", std::to_string(c.batch_size));
    r.set("train.epochs", std::to_string(c.epochs));
    r.set("train.lr", f(c.adam.lr));
    r.set("train.weight_decay", f(c.adam.weight_decay));
    r.set("train.beta1", f(c.adam.beta1));
    r.set("train.beta2", f(c.adam.beta2));
    r.set("train.eps", f(c.adam.eps));
    r.set("train.seed", std::to_string(c.seed));
    r.set("train.eval_every", std::to_string(c.eval_every));
    return r;
}

}  // namespace caselink
