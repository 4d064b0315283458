// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colora/common.hpp"
#include "colora/sha256.hpp"

namespace colora {

// One synthesis convolution. A 2x nearest upsample is applied before the
// convolution whenever its resolution doubles the running one.
struct ConvLayerSpec {
    int res = 0;
    int c_in = 0;
    int c_out = 0;
    int k = 3;
};

// Skip-branch RGB projection (k=1 styled conv) emitted at a resolution.
struct ToRgbSpec {
    int res = 0;
    int c_in = 0;
};

// Declarative description of the generator: mapping MLP dims plus the
// synthesis conv stack. The critic mirrors the synthesis stack in reverse.
struct ArchSpec {
    int z_dim = 64;
    int w_dim = 64;
    int mapping_layers = 4;
    int base_resolution = 4;
    int base_channels = 128;
    int img_channels = 3;
    bool demodulate = false;
    std::vector<ConvLayerSpec> synthesis;
    std::vector<ToRgbSpec> torgbs;

    int top_resolution() const { return synthesis.empty() ? base_resolution : synthesis.back().res; }

    // Throws ConfigError on malformed specs: resolutions must start at the
    // base and double monotonically, kernels must be odd, channels must chain.
    void validate() const;

    // Stable text form; the basis of the fingerprint and of checkpoints'
    // compatibility check.
    std::string serialize() const;
    Digest fingerprint() const { auto s = serialize(); return Sha256::digest(s.data(), s.size()); }

    // The compiled-in desk-scale default: 32x32 output, CPU-trainable.
    static ArchSpec desk_default();
};

// Critic topology derived from an ArchSpec (mirror of the synthesis stack;
// downsampling by average pooling).
struct CriticLayerSpec {
    int res = 0;
    int c_in = 0;
    int c_out = 0;
    bool pool_after = false;  // 2x average pool after activation
};

struct CriticSpec {
    int from_rgb_channels = 0;  // img -> this many channels at top resolution
    std::vector<CriticLayerSpec> layers;
    int flat_dim = 0;  // input width of the final score head
};

CriticSpec derive_critic(const ArchSpec& arch);

}  // namespace colora
