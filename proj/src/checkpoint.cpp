#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "caselink/error.hpp"
#include "caselink/trainer.hpp"

namespace caselink {

namespace {

constexpr char kMagic[] = {'C', 'L', 'N', 'K', '1'};
constexpr std::size_t kMagicSize = sizeof(kMagic);

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : checkpoint.params.entries()) {
        tensors.push_back({{"name", name},
                           {"shape", {t.rows(), t.cols()}},
                           {"offset", offset},
                           {"count", t.size()}});
        offset += t.size() * sizeof(float);
    }
    nlohmann::json header = {
        {"format_version", checkpoint.format_version},
        {"epoch", checkpoint.epoch},
        {"rng_digest", checkpoint.rng_digest},
        {"config", RunConfig::from_train_config(checkpoint.config).hyperparameters()},
        {"tensors", tensors},
        {"payload_bytes", offset},
    };
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + kMagicSize);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& [name, t] : checkpoint.params.entries()) {
        for (double v : t.data()) {
            const auto f = static_cast<float>(v);
            std::uint8_t bytes[sizeof(float)];
            std::memcpy(bytes, &f, sizeof(float));
            out.insert(out.end(), bytes, bytes + sizeof(float));
        }
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kMagicSize + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ValidationError("corrupt checkpoint: bad magic");
    if (bytes[4] != static_cast<std::uint8_t>(kMagic[4]))
        throw ValidationError(std::string("checkpoint version mismatch: file version ") +
                              static_cast<char>(bytes[4]) + ", supported version " +
                              std::to_string(kCheckpointVersion));
    const std::uint64_t header_len = get_u64(bytes.data() + kMagicSize);
    const std::size_t header_start = kMagicSize + 8;
    if (header_len > bytes.size() - header_start) throw ValidationError("corrupt checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(header_start + header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("corrupt checkpoint header: ") + e.what());
    }

    Checkpoint c;
    try {
        c.format_version = header.at("format_version").get<std::uint32_t>();
        if (c.format_version != kCheckpointVersion)
            throw ValidationError("checkpoint version mismatch: file version " + std::to_string(c.format_version) +
                                  ", supported version " + std::to_string(kCheckpointVersion));
        c.epoch = header.at("epoch").get<std::size_t>();
        c.rng_digest = header.at("rng_digest").get<std::string>();
        c.config = RunConfig::from_map(header.at("config").get<std::map<std::string, std::string>>()).to_train_config();

        const std::size_t payload_start = header_start + header_len;
        const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
        if (bytes.size() - payload_start != payload_bytes) throw ValidationError("corrupt checkpoint: payload size");
        for (const auto& t : header.at("tensors")) {
            const auto rows = t.at("shape").at(0).get<std::size_t>();
            const auto cols = t.at("shape").at(1).get<std::size_t>();
            const auto offset = t.at("offset").get<std::uint64_t>();
            const auto count = t.at("count").get<std::uint64_t>();
            if (count != rows * cols || offset + count * sizeof(float) > payload_bytes)
                throw ValidationError("corrupt checkpoint: tensor " + t.at("name").get<std::string>());
            ad::Tensor value(rows, cols);
            const std::uint8_t* src = bytes.data() + payload_start + offset;
            for (std::size_t i = 0; i < count; ++i) {
                float f = 0.0F;
                std::memcpy(&f, src + i * sizeof(float), sizeof(float));
                value[i] = static_cast<double>(f);
            }
            c.params.add(t.at("name").get<std::string>(), std::move(value));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("corrupt checkpoint header: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const auto bytes = serialize_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace caselink
