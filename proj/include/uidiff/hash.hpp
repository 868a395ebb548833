#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace uidiff {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(const void* data, size_t size);
inline std::string sha256_hex(std::string_view s) { return sha256_hex(s.data(), s.size()); }

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, size_t size);
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::string hex_digest();

private:
    void* ctx_;
};

}  // namespace uidiff
