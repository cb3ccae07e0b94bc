#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace caselink {

enum class Role { Query, Candidate };
enum class Split { Train, Test };

std::string_view to_string(Role role);
std::string_view to_string(Split split);

struct Document {
    std::string id;
    std::string text;  // normalized
    Role role = Role::Candidate;
    Split split = Split::Train;
};

/// Lowercases, strips control characters and collapses every run of unicode
/// whitespace into one ASCII space. Idempotent.
std::string normalize_text(std::string_view raw);

/// An immutable pool of documents from a single split. Ids are unique and
/// every text is non-empty.
class Corpus {
  public:
    Corpus() = default;
    Corpus(std::vector<Document> docs, Split split);

    [[nodiscard]] const std::vector<Document>& docs() const { return docs_; }
    [[nodiscard]] const Document& operator[](std::size_t i) const { return docs_[i]; }
    [[nodiscard]] std::size_t size() const { return docs_.size(); }
    [[nodiscard]] bool empty() const { return docs_.empty(); }
    [[nodiscard]] Split split() const { return split_; }

    [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const;
    [[nodiscard]] std::vector<std::size_t> query_indices() const;
    [[nodiscard]] std::vector<std::size_t> candidate_indices() const;

  private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    Split split_ = Split::Train;
};

/// query id -> relevant candidate ids. Ordered containers keep iteration
/// deterministic.
struct LabelSet {
    std::map<std::string, std::set<std::string>> relevance;

    [[nodiscard]] const std::set<std::string>* find(const std::string& query_id) const;
};

struct Charge {
    std::string id;
    std::string phrase;  // normalized
};

/// Order defines charge-node indexing in the graph.
struct ChargeVocabulary {
    std::vector<Charge> charges;

    [[nodiscard]] std::size_t size() const { return charges.size(); }
};

/// Reads newline-delimited `{"id", "text", "role"}` records.
Corpus load_corpus(const std::filesystem::path& path, Split split);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

LabelSet load_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelSet& labels);
/// Keys must be queries and values candidates of `corpus`.
void validate_labels(const LabelSet& labels, const Corpus& corpus);

/// One phrase per line; ids are assigned as c1, c2, ... in file order.
ChargeVocabulary load_charges(const std::filesystem::path& path);
ChargeVocabulary make_charges(const std::vector<std::string>& phrases);
void write_charges(const std::filesystem::path& path, const ChargeVocabulary& charges);

/// Throws ValidationError naming the first id shared by both corpora.
void check_disjoint(const Corpus& train, const Corpus& test);

}  // namespace caselink
