#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "caselink/corpus.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("caselink-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline caselink::Document doc(std::string id, std::string text, caselink::Role role = caselink::Role::Candidate,
                              caselink::Split split = caselink::Split::Train) {
    return {std::move(id), caselink::normalize_text(text), role, split};
}

/// Random documents over a small vocabulary; the first `queries` are queries.
inline caselink::Corpus random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t queries,
                                      std::size_t vocab, std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::vector<caselink::Document> out;
    for (std::size_t i = 0; i < docs; ++i) {
        std::string text;
        const std::size_t n = len(rng);
        for (std::size_t t = 0; t < n; ++t) text += "t" + std::to_string(word(rng)) + " ";
        out.push_back(doc((i < queries ? "q" : "d") + std::to_string(i), text,
                          i < queries ? caselink::Role::Query : caselink::Role::Candidate));
    }
    return caselink::Corpus(std::move(out), caselink::Split::Train);
}

}  // namespace testing_support
