#include "uidiff/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "uidiff/error.hpp"
#include "uidiff/hash.hpp"

namespace uidiff::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

namespace {
constexpr char kMagic[8] = {'U', 'I', 'D', 'I', 'F', 'F', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}
}  // namespace

void Checkpoint::add_module(const Module& m, const std::string& prefix) {
    for (auto& [name, t] : m.named_parameters()) tensors[prefix + name] = t.detach();
}

std::string Checkpoint::serialize() const {
    nlohmann::json index = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        index.push_back({{"name", name},
                         {"shape", t.shape()},
                         {"offset", offset},
                         {"count", t.numel()},
                         {"sha256", sha256_hex(t.values().data(), t.numel() * sizeof(double))}});
        offset += t.numel();
    }
    const std::string header = nlohmann::json{{"kind", kind}, {"meta", meta}, {"tensors", index}}.dump();
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, header.size());
    out += header;
    for (const auto& [_, t] : tensors) out.append(reinterpret_cast<const char*>(t.values().data()), t.numel() * sizeof(double));
    return out;
}

std::string Checkpoint::id() const {
    const std::string bytes = serialize();
    return sha256_hex(bytes);
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const std::string bytes = serialize();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error(ErrorCode::IOFailure, "cannot write " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw Error(ErrorCode::IOFailure, "short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path, const std::string& expected_kind) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();

    const size_t fixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw Error(ErrorCode::CheckpointMismatch, path.string() + " is not a checkpoint");
    std::uint32_t version;
    std::uint64_t header_len;
    std::memcpy(&version, bytes.data() + 8, sizeof(version));
    std::memcpy(&header_len, bytes.data() + 12, sizeof(header_len));
    if (version != kCheckpointVersion)
        throw Error(ErrorCode::CheckpointMismatch, fmt::format("checkpoint version {} (expected {})", version, kCheckpointVersion));
    if (bytes.size() < fixed + header_len) throw Error(ErrorCode::CheckpointMismatch, "truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(fixed, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CheckpointMismatch, std::string("bad checkpoint header: ") + e.what());
    }
    Checkpoint ck;
    ck.kind = header.value("kind", "");
    ck.meta = header.value("meta", nlohmann::json::object());
    if (!expected_kind.empty() && ck.kind != expected_kind)
        throw Error(ErrorCode::CheckpointMismatch, fmt::format("checkpoint kind '{}' (expected '{}')", ck.kind, expected_kind));

    const size_t blob_start = fixed + header_len;
    const size_t total = (bytes.size() - blob_start) / sizeof(double);
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name");
        const Shape shape = entry.at("shape").get<Shape>();
        const size_t offset = entry.at("offset"), count = entry.at("count");
        if (offset + count > total || shape_numel(shape) != count)
            throw Error(ErrorCode::CheckpointMismatch, "tensor " + name + " out of bounds");
        std::vector<double> values(count);
        std::memcpy(values.data(), bytes.data() + blob_start + offset * sizeof(double), count * sizeof(double));
        if (sha256_hex(values.data(), count * sizeof(double)) != entry.at("sha256").get<std::string>())
            throw Error(ErrorCode::CheckpointMismatch, "digest mismatch for tensor " + name);
        ck.tensors[name] = Tensor::from(shape, std::move(values));
    }
    return ck;
}

}  // namespace uidiff::nn
