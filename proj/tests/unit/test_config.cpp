#include <gtest/gtest.h>

#include "caselink/config.hpp"
#include "caselink/error.hpp"
#include "support.hpp"

using namespace caselink;
using testing_support::TempDir;
using testing_support::write_file;

TEST(RunConfig, DefaultsCoverEveryKey) {
    const RunConfig r;
    for (const auto& k : RunConfig::keys()) EXPECT_EQ(r.get(k.name), k.default_value) << k.name;
    const TrainConfig c = r.to_train_config();
    EXPECT_EQ(c.gcg.k, 5U);
    EXPECT_EQ(c.gcg.delta, 0.9);
    EXPECT_EQ(c.loss.tau, 0.1);
    EXPECT_EQ(c.loss.lambda, 1e-3);
    EXPECT_EQ(c.gnn.arch, GnnArch::GAT);
    EXPECT_EQ(c.gnn.layers, 2U);
    EXPECT_EQ(c.loss.n_easy, 1U);
    EXPECT_EQ(c.batch_size, 32U);
    EXPECT_EQ(c.epochs, 100U);
}

TEST(RunConfig, UnknownKeyNamed) {
    RunConfig r;
    try {
        r.set("gnn.depth", "3");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("gnn.depth"), std::string::npos);
    }
    EXPECT_THROW(r.set_assignment("no-equals-sign"), ValidationError);
}

TEST(RunConfig, OverridesParseAndValidate) {
    RunConfig r;
    r.set_assignment("gnn.arch=sage");
    r.set_assignment(" loss.lambda = 0 ");
    r.set_assignment("ablation.no_residual=true");
    const TrainConfig c = r.to_train_config();
    EXPECT_EQ(c.gnn.arch, GnnArch::SAGE);
    EXPECT_EQ(c.loss.lambda, 0.0);
    EXPECT_FALSE(c.gnn.residual);

    for (const char* bad : {"gnn.arch=mlp", "gcg.k=-1", "loss.tau=abc", "gnn.dropout=1.5"}) {
        RunConfig b;
        b.set_assignment(bad);
        EXPECT_THROW((void)b.to_train_config(), ValidationError) << bad;
    }
}

TEST(RunConfig, FileParsingAndDataPaths) {
    TempDir dir("conf");
    write_file(dir / "run.conf", "# comment\n\ngcg.k = 3   # trailing\ndata.charges = charges.txt\n");
    const RunConfig r = RunConfig::load(dir / "run.conf");
    EXPECT_EQ(r.to_train_config().gcg.k, 3U);
    EXPECT_EQ(r.data_path("data.charges"), dir.path() / "charges.txt");
    write_file(dir / "bad.conf", "gcg.k 3\n");
    try {
        RunConfig::load(dir / "bad.conf");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(RunConfig::load(dir / "missing.conf"), ValidationError);
}

TEST(RunConfig, TrainConfigRoundTrip) {
    TrainConfig c;
    c.gnn.arch = GnnArch::GCN;
    c.gnn.heads = 3;
    c.gcg.delta = 0.75;
    c.loss.lambda = 5e-4;
    c.loss.in_batch = false;
    c.adam.lr = 1e-4;
    c.gcg.include_charges = false;
    const RunConfig r = RunConfig::from_train_config(c);
    const TrainConfig back = r.to_train_config();
    EXPECT_EQ(back.gnn.arch, GnnArch::GCN);
    EXPECT_EQ(back.gnn.heads, 3U);
    EXPECT_EQ(back.gcg.delta, 0.75);
    EXPECT_EQ(back.loss.lambda, 5e-4);
    EXPECT_FALSE(back.loss.in_batch);
    EXPECT_EQ(back.adam.lr, 1e-4);
    EXPECT_FALSE(back.gcg.include_charges);
    EXPECT_EQ(RunConfig::from_map(r.hyperparameters()).hyperparameters(), r.hyperparameters());
    for (const auto& [k, v] : r.hyperparameters()) EXPECT_NE(k.rfind("data.", 0), 0U) << k;
}

TEST(TrainConfig, DimMismatchRejected) {
    RunConfig r;
    r.set("features.dim", "64");
    EXPECT_NO_THROW((void)r.to_train_config());
    TrainConfig c;
    c.gnn.dim = 32;
    EXPECT_THROW(c.validate(), ValidationError);
}
