#include <gtest/gtest.h>

#include "caselink/error.hpp"
#include "caselink/gcg.hpp"
#include "caselink/synth.hpp"
#include "support.hpp"

using namespace caselink;

TEST(Synth, SizesMatchDefaults) {
    const SynthData d = generate_synth(SynthSpec{});
    EXPECT_EQ(d.train.query_indices().size(), 10U);
    EXPECT_EQ(d.train.candidate_indices().size(), 50U);
    EXPECT_EQ(d.test.query_indices().size(), 10U);
    EXPECT_EQ(d.test.candidate_indices().size(), 50U);
    EXPECT_EQ(d.charges.size(), 8U);
    for (const auto& [q, rel] : d.train_labels.relevance) EXPECT_EQ(rel.size(), 4U) << q;
    EXPECT_NO_THROW(validate_labels(d.train_labels, d.train));
    EXPECT_NO_THROW(validate_labels(d.test_labels, d.test));
    EXPECT_NO_THROW(check_disjoint(d.train, d.test));
}

TEST(Synth, DeterministicPerSeed) {
    SynthSpec a;
    const SynthData x = generate_synth(a), y = generate_synth(a);
    ASSERT_EQ(x.train.size(), y.train.size());
    for (std::size_t i = 0; i < x.train.size(); ++i) EXPECT_EQ(x.train[i].text, y.train[i].text);
    EXPECT_EQ(x.test_labels.relevance, y.test_labels.relevance);
    a.seed = 8;
    EXPECT_NE(generate_synth(a).train[0].text, x.train[0].text);
}

TEST(Synth, WrittenFilesReload) {
    testing_support::TempDir dir("synth");
    const SynthSpec spec;
    const SynthData d = generate_synth(spec);
    write_synth(dir.path(), d, spec);
    const Corpus back = load_corpus(dir / "test_corpus.jsonl", Split::Test);
    ASSERT_EQ(back.size(), d.test.size());
    EXPECT_EQ(back[3].text, d.test[3].text);
    EXPECT_EQ(load_labels(dir / "train_labels.json").relevance, d.train_labels.relevance);
    EXPECT_EQ(load_charges(dir / "charges.txt").size(), 8U);
    EXPECT_NE(testing_support::read_file(dir / "train.conf").find("data.train_corpus = train_corpus.jsonl"),
              std::string::npos);
}

TEST(Synth, RelatedChargesAreSimilarButNotSubstrings) {
    const SynthData d = generate_synth(SynthSpec{});
    for (std::size_t i = 0; i + 1 < d.charges.size(); i += 2) {
        const auto& a = d.charges.charges[i].phrase;
        const auto& b = d.charges.charges[i + 1].phrase;
        EXPECT_EQ(b.find(a), std::string::npos);
        const auto u = fallback_embed(a, 128, 1), w = fallback_embed(b, 128, 1);
        double dot = 0;
        for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * w[k];
        EXPECT_GT(dot, 0.9);
    }
}

TEST(Synth, ValidationErrors) {
    SynthSpec s;
    s.relevant_per_query = 7;
    EXPECT_THROW(generate_synth(s), ValidationError);
    s = SynthSpec{};
    s.topics = 0;
    EXPECT_THROW(generate_synth(s), ValidationError);
    s = SynthSpec{};
    s.min_length = 100;
    EXPECT_THROW(generate_synth(s), ValidationError);
    s = SynthSpec{};
    s.topic_rate = 1.5;
    EXPECT_THROW(generate_synth(s), ValidationError);
}
