#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "caselink/error.hpp"
#include "caselink/objective.hpp"
#include "caselink/synth.hpp"
#include "support.hpp"

using namespace caselink;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using testing_support::doc;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> g;
    Tensor t(r, c);
    for (auto& v : t.data()) v = g(rng);
    return t;
}

Tensor row_of(const Tensor& t, std::size_t r) {
    Tensor out(1, t.cols());
    for (std::size_t c = 0; c < t.cols(); ++c) out(0, c) = t(r, c);
    return out;
}

Tensor rows_from(const Tensor& t, std::size_t begin) {
    Tensor out(t.rows() - begin, t.cols());
    for (std::size_t r = begin; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out(r - begin, c) = t(r, c);
    return out;
}

long double naive_info_nce(const Tensor& q, const Tensor& cands, double tau) {
    std::vector<long double> s;
    for (std::size_t r = 0; r < cands.rows(); ++r) {
        long double d = 0;
        for (std::size_t c = 0; c < q.cols(); ++c) d += static_cast<long double>(q(0, c)) * cands(r, c);
        s.push_back(d / tau);
    }
    long double denom = 0;
    for (auto v : s) denom += std::exp(v);
    return -std::log(std::exp(s[0]) / denom);
}

double naive_deg_reg(const Tensor& h, const std::vector<std::size_t>& cands) {
    double total = 0;
    for (auto i : cands)
        for (std::size_t j = 0; j < h.rows(); ++j) {
            double dot = 0, ni = 0, nj = 0;
            for (std::size_t c = 0; c < h.cols(); ++c) {
                dot += h(i, c) * h(j, c);
                ni += h(i, c) * h(i, c);
                nj += h(j, c) * h(j, c);
            }
            total += dot / std::sqrt(ni * nj);
        }
    return total;
}

double nce(const Tensor& q, const Tensor& pos, const Tensor& neg, double tau) {
    Tape t;
    return info_nce(t.constant(q), t.constant(pos), t.constant(neg), tau, Similarity::Dot).value().item();
}

/// Queries q0..q{nq-1}, candidates d0..; query i is relevant to d{i}.
struct SamplerFixture {
    Corpus corpus;
    LabelSet labels;
};

SamplerFixture sampler_corpus() {
    std::vector<Document> docs{doc("q0", "alpha beta gamma", Role::Query), doc("q1", "delta epsilon", Role::Query)};
    const char* texts[] = {"alpha beta", "delta", "alpha gamma", "beta", "epsilon", "zeta", "eta theta"};
    for (std::size_t i = 0; i < 7; ++i) docs.push_back(doc("d" + std::to_string(i), texts[i]));
    SamplerFixture f{Corpus(std::move(docs), Split::Train), {}};
    f.labels.relevance["q0"] = {"d0"};
    f.labels.relevance["q1"] = {"d1"};
    return f;
}

}  // namespace

TEST(InfoNce, NoNegativesIsZero) {
    EXPECT_NEAR(nce(Tensor(1, 2, std::vector<double>{1, 2}), Tensor(1, 2, std::vector<double>{3, 4}), Tensor(0, 2),
                    0.1),
                0.0, 1e-12);
}

TEST(InfoNce, EqualScoresGiveLn2) {
    const Tensor q(1, 2, std::vector<double>{1, 0});
    const Tensor p(1, 2, std::vector<double>{0.5, 1});
    const Tensor n(1, 2, std::vector<double>{0.5, -3});
    EXPECT_NEAR(nce(q, p, n, 0.1), std::log(2.0), 1e-12);
}

TEST(InfoNce, MatchesLongDoubleOracle) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor all = random_tensor(rng, 9, 5);
        const Tensor q = row_of(all, 0);
        const Tensor cands = rows_from(all, 1);
        const double got = nce(q, row_of(cands, 0), rows_from(cands, 1), 0.1);
        EXPECT_NEAR(got, static_cast<double>(naive_info_nce(q, cands, 0.1)), 1e-9);
    }
}

TEST(InfoNce, ShiftInvariantFromScores) {
    std::mt19937_64 rng(3);
    const Tensor s = random_tensor(rng, 6, 1);
    Tensor shifted = s;
    for (auto& v : shifted.data()) v += 0.37;
    Tape t;
    const double a = info_nce_from_scores(t.constant(s), 0.1).value().item();
    const double b = info_nce_from_scores(t.constant(shifted), 0.1).value().item();
    EXPECT_NEAR(a, b, 1e-9);
}

TEST(InfoNce, LargeScoresStayFinite) {
    Tape t;
    const double v = info_nce_from_scores(t.constant(Tensor(3, 1, std::vector<double>{500, 400, 499})), 0.1)
                         .value()
                         .item();
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, std::log1p(std::exp(-10.0) + std::exp(-1000.0)), 1e-12);
}

TEST(InfoNce, DecreasesAsPositiveScoreGrows) {
    double prev = std::numeric_limits<double>::infinity();
    const Tensor q(1, 1, 1.0);
    const Tensor n(2, 1, std::vector<double>{0.2, -0.1});
    for (double p = -1.0; p <= 1.0; p += 0.25) {
        const double v = nce(q, Tensor(1, 1, p), n, 0.1);
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(InfoNce, RejectsBadInput) {
    Tape t;
    EXPECT_THROW(info_nce_from_scores(t.constant(Tensor(2, 1)), 0.0), ValidationError);
    EXPECT_THROW(info_nce(t.constant(Tensor(1, 2)), t.constant(Tensor(1, 3)), t.constant(Tensor(0, 2)), 0.1,
                          Similarity::Dot),
                 std::invalid_argument);
}

TEST(DegReg, ParallelRowsCountEveryPair) {
    Tape t;
    const Tensor h(3, 2, std::vector<double>{1, 1, 2, 2, 0.5, 0.5});
    const std::vector<std::size_t> cands{1, 2};
    EXPECT_NEAR(deg_reg(t.constant(h), cands).value().item(), 6.0, 1e-12);
}

TEST(DegReg, OrthogonalRowsGiveSelfTermsOnly) {
    Tape t;
    Tensor h(4, 4);
    for (std::size_t i = 0; i < 4; ++i) h(i, i) = 1.0 + static_cast<double>(i);
    const std::vector<std::size_t> cands{0, 2, 3};
    EXPECT_NEAR(deg_reg(t.constant(h), cands).value().item(), 3.0, 1e-12);
}

TEST(DegReg, MatchesNaiveSum) {
    std::mt19937_64 rng(15);
    const Tensor h = random_tensor(rng, 15, 6);
    std::vector<std::size_t> cands(10);
    std::iota(cands.begin(), cands.end(), 5);
    Tape t;
    EXPECT_NEAR(deg_reg(t.constant(h), cands).value().item(), naive_deg_reg(h, cands), 1e-9);
}

TEST(DegReg, RowRescaleInvariant) {
    std::mt19937_64 rng(16);
    Tensor h = random_tensor(rng, 8, 4);
    const std::vector<std::size_t> cands{1, 3, 5, 7};
    Tape t;
    const double before = deg_reg(t.constant(h), cands).value().item();
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (std::size_t r = 0; r < h.rows(); ++r) {
        const double s = scale(rng);
        for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) *= s;
    }
    EXPECT_NEAR(deg_reg(t.constant(h), cands).value().item(), before, 1e-6);
}

TEST(DegReg, EmptyCandidatesRejected) {
    Tape t;
    EXPECT_THROW(deg_reg(t.constant(Tensor(2, 2, 1.0)), std::vector<std::size_t>{}), ValidationError);
}

TEST(TotalLoss, LambdaZeroIsExactMean) {
    Tape t;
    const std::vector<Var> terms{t.constant(Tensor::scalar(0.3)), t.constant(Tensor::scalar(0.9))};
    const Var deg = t.constant(Tensor::scalar(123.0));
    EXPECT_EQ(total_loss(terms, deg, 0.0).value().item(), ad::mean(ad::concat_rows(terms)).value().item());
}

TEST(TotalLoss, AddsScaledRegularizer) {
    Tape t;
    const std::vector<Var> terms{t.constant(Tensor::scalar(0.002)), t.constant(Tensor::scalar(0.004))};
    EXPECT_NEAR(total_loss(terms, t.constant(Tensor::scalar(3.0)), 1e-3).value().item(), 0.006, 1e-15);
}

TEST(TotalLoss, FiniteAcrossLambdaGrid) {
    std::mt19937_64 rng(2);
    const Tensor h = random_tensor(rng, 10, 4);
    const std::vector<std::size_t> cands{2, 3, 4, 5, 6, 7, 8, 9};
    for (double lambda : {0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2}) {
        Tape t;
        Var hv = t.constant(h);
        const std::size_t q[] = {0};
        const std::size_t p[] = {2};
        const std::size_t n[] = {3, 4};
        std::vector<Var> terms{info_nce(ad::gather_rows(hv, q), ad::gather_rows(hv, p), ad::gather_rows(hv, n), 0.1,
                                        Similarity::Dot)};
        EXPECT_TRUE(std::isfinite(total_loss(terms, deg_reg(hv, cands), lambda).value().item())) << lambda;
    }
}

TEST(Sampler, ForcedDrawsWhenPoolsAreExact) {
    auto f = sampler_corpus();
    LossConfig cfg;
    cfg.n_easy = 0;
    cfg.n_hard = 6;
    cfg.hard_pool = 6;
    const NegativeSampler s(f.corpus, f.labels, build_index(f.corpus), cfg);
    std::mt19937_64 rng(1);
    const std::size_t q[] = {0};
    const auto batch = s.sample(q, rng);
    ASSERT_EQ(batch.entries.size(), 1U);
    EXPECT_EQ(batch.entries[0].positive, 2U);
    EXPECT_EQ(std::set<std::size_t>(batch.entries[0].hard.begin(), batch.entries[0].hard.end()),
              (std::set<std::size_t>{3, 4, 5, 6, 7, 8}));
    EXPECT_TRUE(batch.entries[0].easy.empty());
}

TEST(Sampler, SingleHardNegativeIsTopBm25NonRelevant) {
    auto f = sampler_corpus();
    LossConfig cfg;
    cfg.n_easy = 1;
    cfg.n_hard = 1;
    cfg.hard_pool = 1;
    const auto index = build_index(f.corpus);
    const NegativeSampler s(f.corpus, f.labels, index, cfg);
    std::size_t expected = 0;
    for (const auto& hit : top_k(index, 0, f.corpus.size()))
        if (hit.doc >= 2 && hit.doc != 2) {
            expected = hit.doc;
            break;
        }
    std::mt19937_64 rng(5);
    const std::size_t q[] = {0};
    for (int i = 0; i < 10; ++i) {
        const auto b = s.sample(q, rng);
        ASSERT_EQ(b.entries[0].hard, std::vector<std::size_t>{expected});
        ASSERT_EQ(b.entries[0].easy.size(), 1U);
        EXPECT_NE(b.entries[0].easy[0], expected);
        EXPECT_NE(b.entries[0].easy[0], 2U);
        EXPECT_GE(b.entries[0].easy[0], 2U);
    }
}

TEST(Sampler, DeterministicUnderSeed) {
    const SynthData data = generate_synth(SynthSpec{});
    LossConfig cfg;
    const NegativeSampler s(data.train, data.train_labels, build_index(data.train), cfg);
    std::mt19937_64 a(9), b(9);
    EXPECT_EQ(s.sample(s.queries(), a), s.sample(s.queries(), b));
    for (auto q : s.queries()) {
        EXPECT_EQ(s.hard_pool(q).size(), std::min(cfg.hard_pool, data.train.candidate_indices().size() - s.positives(q).size()));
        for (auto h : s.hard_pool(q)) EXPECT_FALSE(s.is_relevant(q, h));
    }
}

TEST(Sampler, PoolTooSmallRejected) {
    auto f = sampler_corpus();
    LossConfig cfg;
    cfg.n_easy = 3;
    cfg.n_hard = 4;
    cfg.hard_pool = 4;
    EXPECT_THROW(NegativeSampler(f.corpus, f.labels, build_index(f.corpus), cfg), ValidationError);
    cfg.n_easy = 1;
    cfg.hard_pool = 2;
    EXPECT_THROW(NegativeSampler(f.corpus, f.labels, build_index(f.corpus), cfg), ValidationError);
}

TEST(BatchLoss, InBatchNegativesSkipRelevant) {
    auto f = sampler_corpus();
    LossConfig cfg;
    cfg.n_easy = 1;
    cfg.n_hard = 1;
    cfg.hard_pool = 3;
    const NegativeSampler s(f.corpus, f.labels, build_index(f.corpus), cfg);
    std::mt19937_64 rng(3);
    std::mt19937_64 feat(4);
    const auto batch = s.sample(s.queries(), rng);
    Tape t;
    Var h = t.constant(random_tensor(feat, f.corpus.size(), 3));
    const auto cands = f.corpus.candidate_indices();
    ForwardTrace trace;
    const auto terms = batch_loss(h, f.corpus.size(), batch, s, cands, cfg, &trace);
    EXPECT_TRUE(std::isfinite(terms.total_value));
    EXPECT_NEAR(terms.total_value, terms.infonce + cfg.lambda * terms.degreg, 1e-12);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& e = batch.entries[i];
        std::set<std::size_t> neg(e.easy.begin(), e.easy.end());
        neg.insert(e.hard.begin(), e.hard.end());
        neg.insert(batch.entries[1 - i].positive);
        expected += neg.size();
    }
    EXPECT_EQ(trace.entries.at("loss.negatives"), std::to_string(expected));
    cfg.in_batch = false;
    const NegativeSampler s2(f.corpus, f.labels, build_index(f.corpus), cfg);
    std::mt19937_64 rng2(3);
    ForwardTrace trace2;
    batch_loss(h, f.corpus.size(), s2.sample(s2.queries(), rng2), s2, cands, cfg, &trace2);
    EXPECT_EQ(trace2.entries.at("loss.negatives"), "4");
}
