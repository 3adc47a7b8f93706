#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace firststep {

// Minimal SHA-256 (FIPS 180-4). Used for prompt hashes and cache keys, where
// we need a digest that is stable across platforms and processes.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }
    // Finalizes and returns the digest as lowercase hex. The object must not
    // be updated afterwards.
    std::string hex_digest();

private:
    void process_block(const uint8_t* block);

    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

std::string sha256_hex(std::string_view data);

}  // namespace firststep
