// caselink: command-line driver for the case retrieval pipeline.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "caselink/config.hpp"
#include "caselink/corpus.hpp"
#include "caselink/error.hpp"
#include "caselink/format.hpp"
#include "caselink/gcg.hpp"
#include "caselink/gradcheck.hpp"
#include "caselink/log.hpp"
#include "caselink/rank_eval.hpp"
#include "caselink/synth.hpp"
#include "caselink/trainer.hpp"

namespace fs = std::filesystem;
using namespace caselink;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr double kGradcheckTolerance = 1e-4;

std::string g_command = "caselink";

int fail(const char* kind, const std::string& message, int code) {
    nlohmann::json err = {{"error", kind}, {"command", g_command}, {"message", message}};
    std::cerr << err.dump() << '\n';
    return code;
}

std::optional<EmbeddingTable> maybe_embeddings(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return load_embeddings(path);
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw ValidationError("split must be 'train' or 'test', got '" + s + "'");
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig rc = path.empty() ? RunConfig() : RunConfig::load(path);
    for (const auto& kv : overrides) rc.set_assignment(kv);
    return rc;
}

struct SynthArgs {
    std::uint64_t seed = 7;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    SynthSpec spec;
    spec.seed = a.seed;
    write_synth(a.out, generate_synth(spec), spec);
    std::cout << "wrote synthetic corpus (seed " << a.seed << ") to " << a.out << '\n';
    return 0;
}

struct GraphArgs {
    std::string corpus;
    std::string charges;
    std::string embeddings;
    std::string config;
    std::vector<std::string> overrides;
    std::string split = "train";
    std::string out;
};

int cmd_build_graph(const GraphArgs& a) {
    const TrainConfig config = load_run_config(a.config, a.overrides).to_train_config();
    const Corpus corpus = load_corpus(a.corpus, parse_split(a.split));
    const ChargeVocabulary charges = load_charges(a.charges);
    const auto emb = maybe_embeddings(a.embeddings);
    const Gcg gcg = build_graph_for(corpus, charges, config, emb ? &*emb : nullptr);
    write_graph(a.out, gcg);

    const ad::Tensor x = gcg.feature_matrix();
    double norm_sum = 0.0;
    std::size_t zero_rows = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) sq += x(r, c) * x(r, c);
        norm_sum += std::sqrt(sq);
        if (sq == 0.0) ++zero_rows;
    }
    const auto& adj = gcg.adjacency;
    nlohmann::ordered_json stats = {
        {"nodes", gcg.num_nodes()},
        {"queries", corpus.query_indices().size()},
        {"candidates", corpus.candidate_indices().size()},
        {"charges", gcg.num_charges()},
        {"edges_case_case", adj.case_case.count() / 2},
        {"edges_charge_charge", adj.charge_charge.count() / 2},
        {"edges_case_charge", adj.charge_case.count()},
        {"feature_source", gcg.features.source == FeatureSource::ExternalFile ? "file" : "hashed-tf"},
        {"feature_dim", gcg.features.dim},
        {"feature_mean_norm", x.rows() == 0 ? 0.0 : norm_sum / static_cast<double>(x.rows())},
        {"feature_zero_rows", zero_rows},
    };
    std::cout << stats.dump() << '\n';
    return 0;
}

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
};

int cmd_train(const TrainArgs& a) {
    const RunConfig rc = load_run_config(a.config, a.overrides);
    const TrainConfig config = rc.to_train_config();
    const Corpus corpus = load_corpus(rc.data_path("data.train_corpus"), Split::Train);
    const LabelSet labels = load_labels(rc.data_path("data.train_labels"));
    validate_labels(labels, corpus);
    const ChargeVocabulary charges = load_charges(rc.data_path("data.charges"));
    std::optional<EmbeddingTable> emb;
    if (!rc.get("data.embeddings").empty()) emb = load_embeddings(rc.data_path("data.embeddings"));

    const fs::path out(a.out);
    fs::create_directories(out);
    std::ofstream log_file(out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_file) throw ValidationError("cannot write " + (out / "train_log.jsonl").string());

    TrainCallbacks callbacks;
    callbacks.on_step = [&](const StepLog& s) { log_file << to_json_line(s) << '\n'; };
    callbacks.on_checkpoint = [&](const Checkpoint& c) {
        save_checkpoint(out / ("ckpt-epoch-" + std::to_string(c.epoch) + ".clnk"), c);
    };
    const auto start = std::chrono::steady_clock::now();
    const TrainResult result = train(corpus, charges, labels, config, emb ? &*emb : nullptr, callbacks);
    save_checkpoint(out / "model.clnk", result.checkpoint);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    nlohmann::ordered_json summary = {{"epochs", config.epochs}, {"steps", result.log.size()}};
    if (!result.log.empty()) {
        summary["first_epoch_loss"] = result.epoch_loss(1);
        summary["last_epoch_loss"] = result.epoch_loss(config.epochs);
    }
    summary["seconds"] = seconds;
    std::cout << summary.dump() << '\n';
    return 0;
}

struct RankArgs {
    std::string checkpoint;
    std::string corpus;
    std::string charges;
    std::string embeddings;
    std::string train_corpus;
    bool two_stage = false;
    std::size_t first_k = 10;
    bool baseline = false;
    std::string out;
};

int cmd_rank(const RankArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Corpus corpus = load_corpus(a.corpus, Split::Test);
    if (!a.train_corpus.empty()) check_disjoint(load_corpus(a.train_corpus, Split::Train), corpus);
    if (corpus.query_indices().empty() || corpus.candidate_indices().empty())
        throw ValidationError("ranking needs at least one query and one candidate");
    const ChargeVocabulary charges = load_charges(a.charges);
    const auto emb = maybe_embeddings(a.embeddings);
    const EmbeddingTable* table = emb ? &*emb : nullptr;

    const ad::Tensor h = a.baseline ? feature_embeddings(corpus, charges, ckpt.config, table)
                                    : embed_all(ckpt, corpus, charges, table);
    std::vector<RankedList> lists;
    if (a.two_stage)
        lists = two_stage_rank_all(corpus, build_index(corpus, ckpt.config.gcg.bm25), h, a.first_k);
    else
        lists = rank_all(corpus, h);
    write_run(a.out, lists);
    std::cout << "ranked " << lists.size() << " queries to " << a.out << '\n';
    return 0;
}

struct EvalArgs {
    std::string run;
    std::string labels;
    std::size_t cutoff = 5;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    const auto lists = read_run(a.run);
    const EvalReport report = evaluate(lists, load_labels(a.labels), a.cutoff);
    write_report(a.out, report);
    std::cout << report.summary() << '\n';
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const GradcheckResult r = run_gradcheck(seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::ordered_json out = {{"seed", seed},
                                  {"nodes", r.nodes},
                                  {"parameters", r.parameters},
                                  {"loss", r.loss},
                                  {"max_rel_error", r.max_rel_error},
                                  {"tolerance", kGradcheckTolerance},
                                  {"seconds", seconds}};
    std::cout << out.dump() << '\n';
    if (!(r.max_rel_error < kGradcheckTolerance))
        return fail("numerical", "max relative error " + format_double(r.max_rel_error) + " >= 1e-4",
                    kExitNumerical);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Legal case retrieval over a global case graph"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress warnings");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate synthetic train/test corpora with planted topics");
    s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    s->add_option("--out", synth.out, "Output directory")->required();

    GraphArgs graph;
    auto* g = app.add_subcommand("build-graph", "Build and export the global case graph of a corpus");
    g->add_option("--corpus", graph.corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    g->add_option("--charges", graph.charges, "Charge phrases, one per line")->required()->check(CLI::ExistingFile);
    g->add_option("--embeddings", graph.embeddings, "Node feature JSONL (hashed TF when absent)")
        ->check(CLI::ExistingFile);
    g->add_option("--config", graph.config, "Run config for graph and feature settings")->check(CLI::ExistingFile);
    g->add_option("--set", graph.overrides, "Config override key=value (repeatable)");
    g->add_option("--split", graph.split, "Split tag of the corpus: train or test")->capture_default_str();
    g->add_option("--out", graph.out, "Graph TSV output")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the GNN on the training graph");
    t->add_option("--config", tr.config, "Run config (key = value lines)")->required()->check(CLI::ExistingFile);
    t->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
    t->add_option("--out", tr.out, "Output directory for model.clnk and train_log.jsonl")->required();

    RankArgs rk;
    auto* r = app.add_subcommand("rank", "Rank test candidates for every test query");
    r->add_option("--checkpoint", rk.checkpoint, "Trained model")->required()->check(CLI::ExistingFile);
    r->add_option("--corpus", rk.corpus, "Test corpus JSONL")->required()->check(CLI::ExistingFile);
    r->add_option("--charges", rk.charges, "Charge phrases")->required()->check(CLI::ExistingFile);
    r->add_option("--embeddings", rk.embeddings, "Node feature JSONL")->check(CLI::ExistingFile);
    r->add_option("--train-corpus", rk.train_corpus, "Training corpus for the id-disjointness audit")
        ->check(CLI::ExistingFile);
    r->add_flag("--two-stage", rk.two_stage, "Re-rank the BM25 top --first-k only");
    r->add_option("--first-k", rk.first_k, "First-stage BM25 depth")->capture_default_str();
    r->add_flag("--baseline", rk.baseline, "Rank by untrained node features instead of the model");
    r->add_option("--out", rk.out, "Run file TSV")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a run file against labels");
    e->add_option("--run", ev.run, "Run file TSV")->required()->check(CLI::ExistingFile);
    e->add_option("--labels", ev.labels, "Labels JSON")->required()->check(CLI::ExistingFile);
    e->add_option("--cutoff", ev.cutoff, "Metric cutoff")->capture_default_str();
    e->add_option("--out", ev.out, "Report JSON")->required();

    std::uint64_t grad_seed = 1;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full loss on a 12-node graph");
    gc->add_option("--seed", grad_seed, "Graph and parameter seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        return fail("usage", err.what(), kExitValidation);
    }
    log::set_quiet(quiet);

    try {
        for (auto* sub : app.get_subcommands()) g_command = sub->get_name();
        if (*s) return cmd_synth(synth);
        if (*g) return cmd_build_graph(graph);
        if (*t) return cmd_train(tr);
        if (*r) return cmd_rank(rk);
        if (*e) return cmd_eval(ev);
        if (*gc) return cmd_gradcheck(grad_seed);
    } catch (const NumericalError& err) {
        return fail("numerical", err.what(), kExitNumerical);
    } catch (const ValidationError& err) {
        return fail("validation", err.what(), kExitValidation);
    } catch (const std::exception& err) {
        return fail("validation", err.what(), kExitValidation);
    }
    return fail("usage", "no command given", kExitValidation);
}
