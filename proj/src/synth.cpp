#include "caselink/synth.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "caselink/error.hpp"

namespace caselink {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

class WordSource {
  public:
    explicit WordSource(std::mt19937_64& rng) : rng_(rng) {}

    std::string next() {
        std::uniform_int_distribution<std::size_t> syllables(2, 3);
        std::uniform_int_distribution<std::size_t> c(0, kConsonants.size() - 1);
        std::uniform_int_distribution<std::size_t> v(0, kVowels.size() - 1);
        for (;;) {
            std::string w;
            const std::size_t n = syllables(rng_);
            for (std::size_t i = 0; i < n; ++i) {
                w += kConsonants[c(rng_)];
                w += kVowels[v(rng_)];
            }
            if (used_.insert(w).second) return w;
        }
    }

    std::vector<std::string> take(std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(next());
        return out;
    }

  private:
    std::mt19937_64& rng_;
    std::set<std::string> used_;
};

struct Topics {
    std::vector<std::string> background;
    std::vector<std::vector<std::string>> words;
    std::vector<std::string> phrases;
};

/// Topics come in pairs whose charge phrases differ by one inserted word, so
/// related charges are near-duplicates without being substrings of each other.
Topics make_topics(const SynthSpec& spec, std::mt19937_64& rng) {
    WordSource words(rng);
    Topics t;
    t.background = words.take(spec.background_vocab);
    for (std::size_t i = 0; i < spec.topics; ++i) t.words.push_back(words.take(spec.topic_vocab));
    for (std::size_t i = 0; i < spec.topics; i += 2) {
        std::vector<std::string> base = words.take(5);
        std::string a;
        for (const auto& w : base) a += (a.empty() ? "" : " ") + w;
        t.phrases.push_back(a);
        if (i + 1 < spec.topics) {
            base.insert(base.begin() + 2, words.next());
            std::string b;
            for (const auto& w : base) b += (b.empty() ? "" : " ") + w;
            t.phrases.push_back(b);
        }
    }
    return t;
}

std::string make_text(const SynthSpec& spec, const Topics& topics, std::size_t topic, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> length(spec.min_length, spec.max_length);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> topic_word(0, spec.topic_vocab - 1);
    std::vector<double> zipf(spec.background_vocab);
    for (std::size_t r = 0; r < zipf.size(); ++r) zipf[r] = 1.0 / static_cast<double>(r + 1);
    std::discrete_distribution<std::size_t> background(zipf.begin(), zipf.end());

    std::vector<std::string> tokens;
    const std::size_t n = length(rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (unit(rng) < spec.topic_rate)
            tokens.push_back(topics.words[topic][topic_word(rng)]);
        else
            tokens.push_back(topics.background[background(rng)]);
    }
    auto mention = [&](const std::string& phrase) {
        std::uniform_int_distribution<std::size_t> at(0, tokens.size());
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at(rng)), phrase);
    };
    if (unit(rng) < spec.charge_rate) mention(topics.phrases[topic]);
    if (spec.topics > 1 && unit(rng) < spec.noise_charge_rate) {
        std::uniform_int_distribution<std::size_t> other(0, spec.topics - 2);
        std::size_t o = other(rng);
        if (o >= topic) ++o;
        mention(topics.phrases[o]);
    }
    std::string text;
    for (const auto& tok : tokens) text += (text.empty() ? "" : " ") + tok;
    return text;
}

std::string numbered(const std::string& prefix, std::size_t i, std::size_t total) {
    std::string digits = std::to_string(i + 1);
    const std::size_t width = std::to_string(total).size();
    return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

void make_split(const SynthSpec& spec, const Topics& topics, const std::string& prefix, std::size_t n_queries,
                std::size_t n_candidates, Split split, std::mt19937_64& rng, Corpus& corpus, LabelSet& labels) {
    std::vector<Document> docs;
    std::vector<std::vector<std::string>> by_topic(spec.topics);
    for (std::size_t q = 0; q < n_queries; ++q)
        docs.push_back({numbered(prefix + "_q", q, n_queries), make_text(spec, topics, q % spec.topics, rng),
                        Role::Query, split});
    for (std::size_t c = 0; c < n_candidates; ++c) {
        const std::size_t topic = c % spec.topics;
        docs.push_back({numbered(prefix + "_d", c, n_candidates), make_text(spec, topics, topic, rng),
                        Role::Candidate, split});
        by_topic[topic].push_back(docs.back().id);
    }
    for (std::size_t q = 0; q < n_queries; ++q) {
        std::vector<std::string> pool = by_topic[q % spec.topics];
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(spec.relevant_per_query);
        labels.relevance[docs[q].id] = std::set<std::string>(pool.begin(), pool.end());
    }
    corpus = Corpus(std::move(docs), split);
}

}  // namespace

void SynthSpec::validate() const {
    if (topics == 0) throw ValidationError("synth: topics must be positive");
    if (train_queries == 0 || test_queries == 0) throw ValidationError("synth: each split needs a query");
    if (relevant_per_query == 0) throw ValidationError("synth: relevant_per_query must be positive");
    const std::size_t per_topic = std::min(train_candidates, test_candidates) / topics;
    if (relevant_per_query > per_topic)
        throw ValidationError("synth: relevant_per_query " + std::to_string(relevant_per_query) +
                              " exceeds the " + std::to_string(per_topic) + " candidates per topic");
    if (background_vocab == 0 || topic_vocab == 0) throw ValidationError("synth: vocabularies must be non-empty");
    if (min_length == 0 || min_length > max_length) throw ValidationError("synth: bad document length range");
    for (double p : {topic_rate, charge_rate, noise_charge_rate})
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("synth: rates must lie in [0, 1]");
}

SynthData generate_synth(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const Topics topics = make_topics(spec, rng);
    SynthData data;
    data.charges = make_charges(topics.phrases);
    make_split(spec, topics, "tr", spec.train_queries, spec.train_candidates, Split::Train, rng, data.train,
               data.train_labels);
    make_split(spec, topics, "te", spec.test_queries, spec.test_candidates, Split::Test, rng, data.test,
               data.test_labels);
    return data;
}

void write_synth(const std::filesystem::path& dir, const SynthData& data, const SynthSpec& spec) {
    std::filesystem::create_directories(dir);
    write_corpus(dir / "train_corpus.jsonl", data.train);
    write_labels(dir / "train_labels.json", data.train_labels);
    write_corpus(dir / "test_corpus.jsonl", data.test);
    write_labels(dir / "test_labels.json", data.test_labels);
    write_charges(dir / "charges.txt", data.charges);

    std::ofstream conf(dir / "train.conf", std::ios::binary | std::ios::trunc);
    if (!conf) throw ValidationError("cannot write " + (dir / "train.conf").string());
    conf << "# synthetic corpus, seed " << spec.seed << "\n"
         << "data.train_corpus = train_corpus.jsonl\n"
         << "data.train_labels = train_labels.json\n"
         << "data.charges = charges.txt\n";
}

}  // namespace caselink
