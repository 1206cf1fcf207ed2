#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace refinery {

// SHA-256 (FIPS 180-4). Used for provider cache keys and stage-file digests.
class Sha256 {
public:
    Sha256();

    void update(const void* data, std::size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }

    // Finalizes and returns the digest as 64 lowercase hex characters.
    // The object must not be reused afterwards.
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint64_t bit_count_ = 0;
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

// One-shot convenience.
std::string sha256_hex(std::string_view data);

// FNV-1a, 64-bit. Non-cryptographic; used where a portable, stable hash is
// needed (seeded sampling, the test embedder). std::hash is not portable.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace refinery
