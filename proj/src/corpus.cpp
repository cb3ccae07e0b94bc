#include "caselink/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "caselink/error.hpp"

namespace caselink {

namespace {

using json = nlohmann::json;

/// Returns the next code point, or U+FFFD on a malformed sequence (consuming
/// one byte).
char32_t decode_utf8(std::string_view s, std::size_t& pos) {
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    unsigned char lead = byte(pos);
    std::size_t len = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
        ++pos;
        return lead;
    } else if ((lead & 0xE0) == 0xC0) {
        len = 2;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        len = 3;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        len = 4;
        cp = lead & 0x07;
    } else {
        ++pos;
        return 0xFFFD;
    }
    if (pos + len > s.size()) {
        ++pos;
        return 0xFFFD;
    }
    for (std::size_t i = 1; i < len; ++i) {
        unsigned char c = byte(pos + i);
        if ((c & 0xC0) != 0x80) {
            ++pos;
            return 0xFFFD;
        }
        cp = (cp << 6) | (c & 0x3F);
    }
    pos += len;
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_control(char32_t cp) {
    return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F);
}

// Simple one-to-one case folding for the scripts a legal corpus realistically
// contains: Latin, Greek, Cyrillic.
char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0xC0) return cp;
    if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
    if (cp >= 0x100 && cp <= 0x137) return cp | 1;
    if (cp >= 0x139 && cp <= 0x148) return (cp & 1) ? cp + 1 : cp;
    if (cp >= 0x14A && cp <= 0x177) return cp | 1;
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x179 && cp <= 0x17E) return (cp & 1) ? cp + 1 : cp;
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    return cp;
}

Role parse_role(const std::string& s, std::size_t line_no) {
    if (s == "query") return Role::Query;
    if (s == "candidate") return Role::Candidate;
    throw ValidationError("line " + std::to_string(line_no) + ": unknown role '" + s + "'");
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    return out;
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::Query ? "query" : "candidate"; }
std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

std::string normalize_text(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    std::size_t pos = 0;
    while (pos < raw.size()) {
        char32_t cp = decode_utf8(raw, pos);
        if (is_unicode_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (is_control(cp)) continue;
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        encode_utf8(to_lower(cp), out);
    }
    return out;
}

Corpus::Corpus(std::vector<Document> docs, Split split) : docs_(std::move(docs)), split_(split) {
    by_id_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        auto& d = docs_[i];
        if (d.id.empty()) throw ValidationError("document " + std::to_string(i) + " has an empty id");
        if (d.text.empty()) throw ValidationError("document '" + d.id + "' has empty text");
        d.split = split;
        if (!by_id_.emplace(d.id, i).second) throw ValidationError("duplicate id '" + d.id + "'");
    }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> Corpus::query_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs_.size(); ++i)
        if (docs_[i].role == Role::Query) out.push_back(i);
    return out;
}

std::vector<std::size_t> Corpus::candidate_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs_.size(); ++i)
        if (docs_[i].role == Role::Candidate) out.push_back(i);
    return out;
}

const std::set<std::string>* LabelSet::find(const std::string& query_id) const {
    auto it = relevance.find(query_id);
    return it == relevance.end() ? nullptr : &it->second;
}

Corpus load_corpus(const std::filesystem::path& path, Split split) {
    auto in = open_input(path);
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = [&] { return path.string() + ":" + std::to_string(line_no); };
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError("malformed record at line " + std::to_string(line_no) + " (" +
                                  path.string() + "): " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
            !rec.contains("text") || !rec["text"].is_string() || !rec.contains("role") ||
            !rec["role"].is_string()) {
            throw ValidationError("malformed record at line " + std::to_string(line_no) + " (" +
                                  where() + "): expected string fields id, text, role");
        }
        Document d;
        d.id = rec["id"].get<std::string>();
        d.text = normalize_text(rec["text"].get<std::string>());
        d.role = parse_role(rec["role"].get<std::string>(), line_no);
        d.split = split;
        if (d.text.empty())
            throw ValidationError("empty text for id '" + d.id + "' at line " + std::to_string(line_no));
        docs.push_back(std::move(d));
    }
    return Corpus(std::move(docs), split);
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    auto out = open_output(path);
    for (const auto& d : corpus.docs()) {
        json rec = {{"id", d.id}, {"text", d.text}, {"role", std::string(to_string(d.role))}};
        out << rec.dump() << '\n';
    }
}

LabelSet load_labels(const std::filesystem::path& path) {
    auto in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed labels file " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw ValidationError("labels file must hold a JSON object");
    LabelSet labels;
    for (auto& [query, rel] : doc.items()) {
        if (!rel.is_array())
            throw ValidationError("labels for '" + query + "' must be an array");
        std::set<std::string> ids;
        for (const auto& v : rel) {
            if (!v.is_string()) throw ValidationError("labels for '" + query + "' must be strings");
            ids.insert(v.get<std::string>());
        }
        if (ids.empty()) throw ValidationError("query '" + query + "' has no relevant candidates");
        labels.relevance.emplace(query, std::move(ids));
    }
    return labels;
}

void write_labels(const std::filesystem::path& path, const LabelSet& labels) {
    json doc = json::object();
    for (const auto& [q, rel] : labels.relevance) doc[q] = std::vector<std::string>(rel.begin(), rel.end());
    auto out = open_output(path);
    out << doc.dump(1) << '\n';
}

void validate_labels(const LabelSet& labels, const Corpus& corpus) {
    for (const auto& [query, rel] : labels.relevance) {
        auto qi = corpus.find(query);
        if (!qi) throw ValidationError("label references unknown id '" + query + "'");
        if (corpus[*qi].role != Role::Query)
            throw ValidationError("label key '" + query + "' is not a query");
        if (rel.empty()) throw ValidationError("query '" + query + "' has no relevant candidates");
        for (const auto& cand : rel) {
            auto ci = corpus.find(cand);
            if (!ci) throw ValidationError("label references unknown id '" + cand + "'");
            if (corpus[*ci].role != Role::Candidate)
                throw ValidationError("label value '" + cand + "' is not a candidate");
        }
    }
}

ChargeVocabulary make_charges(const std::vector<std::string>& phrases) {
    ChargeVocabulary vocab;
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < phrases.size(); ++i) {
        std::string phrase = normalize_text(phrases[i]);
        if (phrase.empty())
            throw ValidationError("charge " + std::to_string(i + 1) + " is empty after normalization");
        if (!seen.emplace(phrase, i).second)
            throw ValidationError("duplicate charge phrase '" + phrase + "'");
        vocab.charges.push_back({"c" + std::to_string(i + 1), std::move(phrase)});
    }
    return vocab;
}

ChargeVocabulary load_charges(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<std::string> phrases;
    std::string line;
    while (std::getline(in, line)) phrases.push_back(line);
    return make_charges(phrases);
}

void write_charges(const std::filesystem::path& path, const ChargeVocabulary& charges) {
    auto out = open_output(path);
    for (const auto& c : charges.charges) out << c.phrase << '\n';
}

void check_disjoint(const Corpus& train, const Corpus& test) {
    for (const auto& d : test.docs())
        if (train.find(d.id)) throw ValidationError("id '" + d.id + "' appears in both train and test");
}

}  // namespace caselink
