#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <sodium.h>
#include <zlib.h>

#include "hash.hpp"

namespace sqlab {

/// One encrypted feedback message, as stored in a sqlab_msg row:
/// token_check (8 bytes) || nonce || authenticated ciphertext of the
/// compressed plaintext.
struct CipherEnvelope {
    std::array<unsigned char, 8> token_check{};
    std::array<unsigned char, crypto_secretbox_NONCEBYTES> nonce{};
    std::vector<unsigned char> ciphertext;

    std::vector<unsigned char> bytes() const {
        std::vector<unsigned char> out;
        out.reserve(8 + nonce.size() + ciphertext.size());
        out.insert(out.end(), token_check.begin(), token_check.end());
        out.insert(out.end(), nonce.begin(), nonce.end());
        out.insert(out.end(), ciphertext.begin(), ciphertext.end());
        return out;
    }

    static std::optional<CipherEnvelope> from_bytes(const std::vector<unsigned char>& raw) {
        CipherEnvelope env;
        const std::size_t header = 8 + env.nonce.size();
        if (raw.size() < header + crypto_secretbox_MACBYTES) return std::nullopt;
        std::memcpy(env.token_check.data(), raw.data(), 8);
        std::memcpy(env.nonce.data(), raw.data() + 8, env.nonce.size());
        env.ciphertext.assign(raw.begin() + static_cast<long>(header), raw.end());
        return env;
    }
};

namespace detail {

inline std::array<unsigned char, 8> token_bytes(std::uint64_t token) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(token >> (8 * i));
    return b;
}

inline std::array<unsigned char, 8> token_check_digest(std::uint64_t token) {
    ensure_sodium();
    static constexpr char context[] = "sqlab token check";
    auto tb = token_bytes(token);
    std::vector<unsigned char> input(context, context + sizeof context - 1);
    input.insert(input.end(), tb.begin(), tb.end());
    unsigned char digest[crypto_generichash_BYTES];
    crypto_generichash(digest, sizeof digest, input.data(), input.size(), nullptr, 0);
    std::array<unsigned char, 8> out{};
    std::memcpy(out.data(), digest, 8);
    return out;
}

inline std::array<unsigned char, crypto_secretbox_KEYBYTES>
derive_key(std::uint64_t token, const std::array<unsigned char, crypto_secretbox_NONCEBYTES>& nonce) {
    ensure_sodium();
    auto tb = token_bytes(token);
    std::vector<unsigned char> input(tb.begin(), tb.end());
    input.insert(input.end(), nonce.begin(), nonce.end());
    std::array<unsigned char, crypto_secretbox_KEYBYTES> key{};
    crypto_generichash(key.data(), key.size(), input.data(), input.size(), nullptr, 0);
    return key;
}

inline std::vector<unsigned char> deflate_bytes(std::string_view text) {
    uLongf bound = compressBound(static_cast<uLong>(text.size()));
    std::vector<unsigned char> out(bound);
    if (compress2(out.data(), &bound, reinterpret_cast<const Bytef*>(text.data()),
                  static_cast<uLong>(text.size()), Z_BEST_COMPRESSION) != Z_OK)
        throw std::runtime_error("compression failed");
    out.resize(bound);
    return out;
}

inline std::optional<std::string> inflate_bytes(const unsigned char* data, std::size_t size) {
    std::vector<unsigned char> out(std::max<std::size_t>(64, size * 4));
    for (int attempt = 0; attempt < 16; ++attempt) {
        uLongf len = static_cast<uLongf>(out.size());
        int rc = uncompress(out.data(), &len, data, static_cast<uLong>(size));
        if (rc == Z_OK) return std::string(reinterpret_cast<char*>(out.data()), len);
        if (rc != Z_BUF_ERROR) return std::nullopt;
        out.resize(out.size() * 2);
    }
    return std::nullopt;
}

}  // namespace detail

/// Deterministic nonce source: the builder feeds it from the manifest seed so
/// rebuilds are byte-identical, while consecutive calls still get fresh nonces.
class NonceStream {
public:
    explicit NonceStream(std::uint64_t seed) : rng_(seed) {}

    std::array<unsigned char, crypto_secretbox_NONCEBYTES> next() {
        std::array<unsigned char, crypto_secretbox_NONCEBYTES> nonce{};
        for (auto& b : nonce) b = static_cast<unsigned char>(rng_() & 0xff);
        return nonce;
    }

private:
    std::mt19937_64 rng_;
};

inline CipherEnvelope encrypt_message(std::uint64_t token, std::string_view plaintext,
                                      NonceStream& nonces) {
    if (plaintext.empty()) throw std::invalid_argument("plaintext must be non-empty");
    ensure_sodium();
    CipherEnvelope env;
    env.token_check = detail::token_check_digest(token);
    env.nonce = nonces.next();
    auto key = detail::derive_key(token, env.nonce);
    auto compressed = detail::deflate_bytes(plaintext);
    env.ciphertext.resize(compressed.size() + crypto_secretbox_MACBYTES);
    crypto_secretbox_easy(env.ciphertext.data(), compressed.data(), compressed.size(),
                          env.nonce.data(), key.data());
    return env;
}

inline CipherEnvelope encrypt_message(std::uint64_t token, std::string_view plaintext) {
    ensure_sodium();
    std::uint64_t seed;
    randombytes_buf(&seed, sizeof seed);
    NonceStream nonces(seed);
    return encrypt_message(token, plaintext, nonces);
}

/// Returns the plaintext iff the token matches; failure is a value.
inline std::optional<std::string> decrypt_probe(std::uint64_t token, const CipherEnvelope& env) {
    ensure_sodium();
    if (env.token_check != detail::token_check_digest(token)) return std::nullopt;
    if (env.ciphertext.size() < crypto_secretbox_MACBYTES) return std::nullopt;
    auto key = detail::derive_key(token, env.nonce);
    std::vector<unsigned char> compressed(env.ciphertext.size() - crypto_secretbox_MACBYTES);
    if (crypto_secretbox_open_easy(compressed.data(), env.ciphertext.data(), env.ciphertext.size(),
                                   env.nonce.data(), key.data()) != 0)
        return std::nullopt;
    return detail::inflate_bytes(compressed.data(), compressed.size());
}

inline std::string hex_encode(const std::vector<unsigned char>& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
        out += digits[b >> 4];
        out += digits[b & 0xf];
    }
    return out;
}

inline std::optional<std::vector<unsigned char>> hex_decode(std::string_view hex) {
    if (hex.size() % 2) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::vector<unsigned char> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out[i] = static_cast<unsigned char>((hi << 4) | lo);
    }
    return out;
}

}  // namespace sqlab
