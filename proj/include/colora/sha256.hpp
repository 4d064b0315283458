// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace colora {

using Digest = std::array<uint8_t, 32>;

// Streaming SHA-256 (FIPS 180-4). Self-contained so checkpoints and weight
// fingerprints do not pull in a crypto library.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    Digest finish();

    static Digest digest(const void* data, std::size_t len) {
        Sha256 h;
        h.update(data, len);
        return h.finish();
    }

private:
    void process_block(const uint8_t* block);

    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

std::string digest_hex(const Digest& d);
Digest digest_from_hex(const std::string& hex);

}  // namespace colora
