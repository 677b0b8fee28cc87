#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <sodium.h>

#include "value.hpp"

namespace sqlab {

/// Hashing recipe shared by the builder, the runtime functions and the
/// reference oracles. Recorded verbatim in the build manifest.
struct HashConfig {
    std::string algorithm_id = "sha256-trunc";
    int hash_bits = 40;
    std::uint64_t coalesce_constant = 42;
    /// Appended to every row serialization; bumped when a hash collides
    /// with another row or with the coalesce constant.
    std::string disambiguator;

    void validate() const {
        if (hash_bits < 1 || hash_bits > 63)
            throw std::invalid_argument("hash_bits must be in [1, 63]");
        if (coalesce_constant >= (std::uint64_t{1} << hash_bits))
            throw std::invalid_argument("coalesce_constant must fit in hash_bits");
    }

    std::uint64_t mask() const { return (std::uint64_t{1} << hash_bits) - 1; }
};

/// Per-task salt: salt_ddd(x) = nn(x) XOR y_constant.
struct SaltSpec {
    int task_number = 0;          // 000..999
    std::uint64_t y_constant = 0; // recorded in the manifest
};

inline void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw std::runtime_error("libsodium initialization failed");
}

/// Truncated cryptographic string hash, output in [0, 2^hash_bits).
inline std::uint64_t string_hash(std::string_view s, const HashConfig& cfg) {
    ensure_sodium();
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(s.data()), s.size());
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
    return v & cfg.mask();
}

/// Hash of one row: canonical JSON array of [table_name, v1, ..., vn]
/// (plus the build disambiguator, when set), then string_hash.
inline std::uint64_t row_hash(const std::string& table_name, const std::vector<Value>& column_values,
                              const HashConfig& cfg) {
    std::string payload = canonical_json_array(column_values, &table_name);
    payload += cfg.disambiguator;
    return string_hash(payload, cfg);
}

/// nn(x) := coalesce(x, coalesce_constant).
inline std::uint64_t nn(std::optional<std::uint64_t> x, const HashConfig& cfg) {
    return x ? *x : cfg.coalesce_constant;
}

/// salt_ddd(x) := nn(x) XOR Y. Total: never returns a NULL-equivalent.
inline std::uint64_t salt_apply(const SaltSpec& spec, std::optional<std::uint64_t> x,
                                const HashConfig& cfg = {}) {
    return nn(x, cfg) ^ spec.y_constant;
}

inline std::string salt_name(int task_number) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "salt_%03d", task_number);
    return buf;
}

}  // namespace sqlab
