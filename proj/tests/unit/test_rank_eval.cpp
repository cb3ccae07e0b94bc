#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "caselink/error.hpp"
#include "caselink/rank_eval.hpp"
#include "caselink/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace caselink;
using ad::Tensor;
using testing_support::doc;
using testing_support::TempDir;

namespace {

RankedList list_of(const std::string& q, const std::vector<std::string>& ids) {
    RankedList l{q, {}};
    double s = 1.0;
    for (const auto& id : ids) l.items.emplace_back(id, s -= 0.01);
    return l;
}

void expect_matches_oracle(const EvalReport& r, const oracles::Metrics& o, double tol) {
    EXPECT_NEAR(r.precision, o.p, tol);
    EXPECT_NEAR(r.recall, o.r, tol);
    EXPECT_NEAR(r.micro_f1, o.mi_f1, tol);
    EXPECT_NEAR(r.macro_f1, o.ma_f1, tol);
    EXPECT_NEAR(r.mrr, o.mrr, tol);
    EXPECT_NEAR(r.map, o.map, tol);
    EXPECT_NEAR(r.ndcg, o.ndcg, tol);
}

struct Instance {
    std::vector<RankedList> lists;
    LabelSet labels;
    std::map<std::string, std::vector<std::string>> ranking;
};

Instance random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> nq(1, 6), pool(1, 15);
    Instance inst;
    const std::size_t queries = nq(rng);
    for (std::size_t q = 0; q < queries; ++q) {
        const std::string qid = "q" + std::to_string(q);
        const std::size_t n = pool(rng);
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
        std::shuffle(ids.begin(), ids.end(), rng);
        std::uniform_int_distribution<std::size_t> nrel(1, n + 2);
        std::set<std::string> rel;
        const std::size_t r = nrel(rng);
        for (std::size_t i = 0; i < r; ++i) rel.insert("d" + std::to_string(i));  // may exceed the pool
        inst.labels.relevance[qid] = rel;
        inst.ranking[qid] = ids;
        inst.lists.push_back(list_of(qid, ids));
    }
    return inst;
}

}  // namespace

TEST(Evaluate, HandInstance) {
    LabelSet labels;
    labels.relevance["q"] = {"a", "c"};
    const std::vector<RankedList> lists{list_of("q", {"a", "b", "c", "d", "e"})};
    const EvalReport r = evaluate(lists, labels);
    EXPECT_NEAR(r.precision, 0.4, 1e-12);
    EXPECT_NEAR(r.recall, 1.0, 1e-12);
    EXPECT_NEAR(r.mrr, 1.0, 1e-12);
    EXPECT_NEAR(r.map, 0.833333, 1e-6);
    EXPECT_NEAR(r.ndcg, 0.919720, 1e-6);
    EXPECT_NEAR(r.micro_f1, 2.0 * 2 / (2 * 2 + 3 + 0), 1e-12);
    EXPECT_NEAR(r.macro_f1, 2 * 0.4 / 1.4, 1e-12);
}

TEST(Evaluate, NoHitsIsZero) {
    LabelSet labels;
    labels.relevance["q"] = {"z"};
    const std::vector<RankedList> lists{list_of("q", {"a", "b", "c", "d", "e"})};
    const EvalReport r = evaluate(lists, labels);
    for (double v : {r.precision, r.recall, r.micro_f1, r.macro_f1, r.mrr, r.map, r.ndcg}) EXPECT_EQ(v, 0.0);
}

TEST(Evaluate, PerfectRanking) {
    LabelSet labels;
    labels.relevance["q"] = {"a", "b", "c", "d", "e"};
    const std::vector<RankedList> lists{list_of("q", {"a", "b", "c", "d", "e", "f"})};
    const EvalReport r = evaluate(lists, labels);
    for (double v : {r.precision, r.recall, r.micro_f1, r.macro_f1, r.mrr, r.map, r.ndcg}) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Evaluate, ShortListStillDividesByCutoff) {
    LabelSet labels;
    labels.relevance["q"] = {"a"};
    const std::vector<RankedList> lists{list_of("q", {"a"})};
    const EvalReport r = evaluate(lists, labels);
    EXPECT_NEAR(r.precision, 0.2, 1e-12);
    EXPECT_EQ(r.per_query[0].retrieved, 1U);
    EXPECT_NEAR(r.micro_f1, 1.0, 1e-12);
}

TEST(Evaluate, MatchesNaiveReferenceOn100Instances) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const Instance inst = random_instance(rng);
        expect_matches_oracle(evaluate(inst.lists, inst.labels), oracles::metrics(inst.ranking, inst.labels.relevance, 5),
                              1e-9);
    }
}

TEST(Evaluate, QueryOrderDoesNotMatter) {
    std::mt19937_64 rng(32);
    const Instance inst = random_instance(rng);
    std::vector<RankedList> reversed(inst.lists.rbegin(), inst.lists.rend());
    EXPECT_EQ(evaluate(inst.lists, inst.labels).to_json(), evaluate(reversed, inst.labels).to_json());
}

TEST(Evaluate, Errors) {
    LabelSet labels;
    labels.relevance["q"] = {"a"};
    const std::vector<RankedList> unlabeled{list_of("other", {"a"})};
    EXPECT_THROW(evaluate(unlabeled, labels), ValidationError);
    const std::vector<RankedList> twice{list_of("q", {"a"}), list_of("q", {"a"})};
    EXPECT_THROW(evaluate(twice, labels), ValidationError);
    EXPECT_THROW(evaluate(twice, labels, 0), ValidationError);
    EXPECT_THROW(evaluate(std::vector<RankedList>{}, labels), ValidationError);
}

TEST(Evaluate, SummaryAndJson) {
    LabelSet labels;
    labels.relevance["q"] = {"a", "c"};
    const std::vector<RankedList> lists{list_of("q", {"a", "b", "c", "d", "e"})};
    const EvalReport r = evaluate(lists, labels);
    EXPECT_NE(r.summary().find("P@5=0.4"), std::string::npos) << r.summary();
    const auto j = r.to_json();
    EXPECT_EQ(j["metrics"].size(), 7U);
    EXPECT_TRUE(j.contains("definitions"));
    EXPECT_EQ(j["per_query"].size(), 1U);
}

TEST(Rank, IdenticalVectorFirstAndOrthogonalZero) {
    const Tensor e(4, 2, std::vector<double>{1, 0, 0, 1, 2, 0, 0, 0});
    const std::vector<std::string> ids{"q", "a", "b", "z"};
    const std::vector<std::size_t> cands{0, 1, 2, 3, 2};
    const RankedList l = rank(0, e, cands, ids);
    ASSERT_EQ(l.items.size(), 3U);
    EXPECT_EQ(l.items[0].first, "b");
    EXPECT_NEAR(l.items[0].second, 1.0, 1e-12);
    EXPECT_EQ(l.items[1].first, "a");
    EXPECT_EQ(l.items[1].second, 0.0);
    EXPECT_EQ(l.items[2].first, "z");
    EXPECT_EQ(l.items[2].second, 0.0);
}

TEST(Rank, MatchesNaiveCosineSortOnPoolOf50) {
    std::mt19937_64 rng(40);
    std::normal_distribution<double> g;
    Tensor e(51, 8);
    for (auto& v : e.data()) v = g(rng);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < 51; ++i) ids.push_back("r" + std::to_string(100 + i));
    std::vector<std::size_t> cands(50);
    std::iota(cands.begin(), cands.end(), 1);
    const RankedList l = rank(0, e, cands, ids);

    std::vector<std::pair<double, std::string>> naive;
    for (auto c : cands) {
        double dot = 0, nq = 0, nc = 0;
        for (std::size_t d = 0; d < 8; ++d) {
            dot += e(0, d) * e(c, d);
            nq += e(0, d) * e(0, d);
            nc += e(c, d) * e(c, d);
        }
        naive.emplace_back(dot / std::sqrt(nq * nc), ids[c]);
    }
    std::sort(naive.begin(), naive.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    ASSERT_EQ(l.items.size(), 50U);
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_EQ(l.items[i].first, naive[i].second);
        EXPECT_NEAR(l.items[i].second, naive[i].first, 1e-12);
    }
}

TEST(Rank, InvariantToRowRescaling) {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g;
    Tensor e(10, 4);
    for (auto& v : e.data()) v = g(rng);
    Tensor scaled = e;
    for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t c = 0; c < 4; ++c) scaled(r, c) *= 0.5 + static_cast<double>(r);
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("x" + std::to_string(i));
    std::vector<std::size_t> cands(9);
    std::iota(cands.begin(), cands.end(), 1);
    const RankedList a = rank(0, e, cands, ids);
    const RankedList b = rank(0, scaled, cands, ids);
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        EXPECT_EQ(a.items[i].first, b.items[i].first);
        EXPECT_NEAR(a.items[i].second, b.items[i].second, 1e-12);
    }
}

TEST(TwoStage, TruncationToFirstStagePool) {
    const SynthData& data = []() -> const SynthData& {
        static const SynthData d = generate_synth(SynthSpec{});
        return d;
    }();
    TrainConfig cfg;
    const Tensor emb = feature_embeddings(data.test, data.charges, cfg);
    const auto index = build_index(data.test);
    const auto one = rank_all(data.test, emb);
    const auto full = two_stage_rank_all(data.test, index, emb, data.test.size());
    EXPECT_EQ(one, full);

    const auto qs = data.test.query_indices();
    const std::set<std::size_t> exclude(qs.begin(), qs.end());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const RankedList two = two_stage_rank(data.test, qs[i], index, emb, 10);
        ASSERT_EQ(two.items.size(), 10U);
        std::set<std::string> bm25_ids;
        for (const auto& s : top_k(index, qs[i], 10, exclude)) bm25_ids.insert(data.test[s.doc].id);
        std::vector<std::pair<std::string, double>> filtered;
        for (const auto& item : one[i].items)
            if (bm25_ids.count(item.first)) filtered.push_back(item);
        EXPECT_EQ(two.items, filtered);
    }
}

TEST(RunFile, RoundTrip) {
    TempDir dir("run");
    const std::vector<RankedList> lists{list_of("q1", {"a", "b"}), list_of("q2", {"c"})};
    write_run(dir / "r.tsv", lists);
    const auto back = read_run(dir / "r.tsv");
    ASSERT_EQ(back.size(), 2U);
    EXPECT_EQ(back[0].query, "q1");
    EXPECT_EQ(back[0].items[1].first, "b");
    EXPECT_DOUBLE_EQ(back[0].items[0].second, lists[0].items[0].second);
    EXPECT_EQ(testing_support::read_file(dir / "r.tsv").substr(0, 9), "q1\ta\t1\t0.");
}

TEST(RunFile, MalformedRejected) {
    TempDir dir("run");
    testing_support::write_file(dir / "a.tsv", "q1\ta\t1\n");
    EXPECT_THROW(read_run(dir / "a.tsv"), ValidationError);
    testing_support::write_file(dir / "b.tsv", "q1\ta\t2\t0.5\n");
    EXPECT_THROW(read_run(dir / "b.tsv"), ValidationError);
    testing_support::write_file(dir / "c.tsv", "q1\ta\t1\t0.5\nq1\ta\t2\t0.4\n");
    EXPECT_THROW(read_run(dir / "c.tsv"), ValidationError);
}

TEST(EmbedAll, ZeroParamsIdentityReturnsFeatures) {
    const SynthData data = generate_synth(SynthSpec{});
    Checkpoint c;
    c.config.gnn.activation = Activation::Identity;
    c.params = zero_params(c.config.gnn);
    const Tensor h = embed_all(c, data.test, data.charges);
    EXPECT_EQ(h, feature_embeddings(data.test, data.charges, c.config));
    EXPECT_EQ(h.rows(), data.test.size());
}
