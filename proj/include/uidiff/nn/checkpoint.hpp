#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "uidiff/nn/module.hpp"

namespace uidiff::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "UIDIFFCK", u32 version, u64 header length, JSON header
/// ({"kind", "meta", "tensors": [{name, shape, offset, count, sha256}]}),
/// then the float64 little-endian blobs back to back.
struct Checkpoint {
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;

    /// Adds every parameter of `m` under `prefix`.
    void add_module(const Module& m, const std::string& prefix);

    void save(const std::filesystem::path& path) const;
    /// Throws CheckpointMismatch for a bad magic, version, kind or blob digest; IOFailure when unreadable.
    static Checkpoint load(const std::filesystem::path& path, const std::string& expected_kind = "");

    /// Stable identifier: SHA-256 of the serialized file.
    std::string id() const;

private:
    std::string serialize() const;
};

}  // namespace uidiff::nn
