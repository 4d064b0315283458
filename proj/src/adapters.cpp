// SPDX-License-Identifier: Apache-2.0
#include "colora/adapters.hpp"

#include <algorithm>

namespace colora {

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "leaky_relu_0.2" || name == "leaky_relu") return Activation::LeakyRelu02;
    if (name == "none") return Activation::None;
    throw ConfigError("unknown activation '" + name + "'");
}

Placement placement_from_name(const std::string& name) {
    if (name == "both") return Placement::Both;
    if (name == "fc_only" || name == "fc") return Placement::FcOnly;
    if (name == "conv_only" || name == "conv") return Placement::ConvOnly;
    throw ConfigError("unknown placement '" + name + "'");
}

const char* placement_name(Placement p) {
    switch (p) {
        case Placement::Both: return "both";
        case Placement::FcOnly: return "fc_only";
        case Placement::ConvOnly: return "conv_only";
    }
    return "?";
}

std::vector<std::string> adaptable_fc_ids(const ArchSpec& arch) {
    std::vector<std::string> ids;
    for (int i = 0; i < arch.mapping_layers; ++i) ids.push_back("mapping." + std::to_string(i));
    return ids;
}

std::vector<std::string> adaptable_conv_ids(const ArchSpec& arch) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < arch.synthesis.size(); ++i) ids.push_back("synth." + std::to_string(i));
    for (std::size_t i = 0; i < arch.torgbs.size(); ++i) ids.push_back("torgb." + std::to_string(i));
    return ids;
}

int effective_conv_rank(int r, int c_in, int c_out, bool is_torgb) {
    int md = std::min(c_in, c_out);
    if (is_torgb) return std::min(r, md);
    return r <= md ? r : 0;
}

namespace {

std::uint64_t fc_adapter_count(int r, int d_in, int d_out) {
    return std::uint64_t(r) * (std::uint64_t(d_in) + std::uint64_t(d_out));
}

std::uint64_t conv_adapter_count(int r, int c_in, int c_out, int k) {
    return std::uint64_t(c_out) * r + std::uint64_t(r) * r * k * k + std::uint64_t(r) * c_in;
}

}  // namespace

ParamCountReport count_params(const ArchSpec& arch, int r) {
    arch.validate();
    if (r < 1) throw ValueError("count_params: rank must be >= 1");
    ParamCountReport rep;
    auto add = [&](const std::string& name, std::uint64_t base, std::uint64_t adapter) {
        rep.per_layer.push_back({name, base, adapter});
        rep.base_params += base;
        rep.adapter_params += adapter;
    };

    // mapping FCs: weight + bias; adapters on the weight only
    int d_in = arch.z_dim;
    for (int i = 0; i < arch.mapping_layers; ++i) {
        int d_out = arch.w_dim;
        add("mapping." + std::to_string(i), std::uint64_t(d_out) * d_in + d_out,
            fc_adapter_count(r, d_in, d_out));
        d_in = d_out;
    }

    add("const_input", std::uint64_t(arch.base_channels) * arch.base_resolution * arch.base_resolution, 0);

    // synthesis convs: weight + bias + style affine (w_dim -> c_in, with bias)
    // + noise scale; adapters on the conv weight only
    for (std::size_t i = 0; i < arch.synthesis.size(); ++i) {
        const ConvLayerSpec& c = arch.synthesis[i];
        std::uint64_t base = std::uint64_t(c.c_out) * c.c_in * c.k * c.k + c.c_out;
        base += std::uint64_t(arch.w_dim) * c.c_in + c.c_in;  // affine
        base += 1;                                            // noise scale
        int re = effective_conv_rank(r, c.c_in, c.c_out, false);
        if (re < 1) throw ValueError("count_params: rank " + std::to_string(r) + " exceeds synth." +
                                     std::to_string(i) + " min dim");
        add("synth." + std::to_string(i), base, conv_adapter_count(re, c.c_in, c.c_out, c.k));
    }

    // torgbs: k=1 styled conv, weight + bias + affine
    for (std::size_t i = 0; i < arch.torgbs.size(); ++i) {
        const ToRgbSpec& t = arch.torgbs[i];
        std::uint64_t base = std::uint64_t(arch.img_channels) * t.c_in + arch.img_channels;
        base += std::uint64_t(arch.w_dim) * t.c_in + t.c_in;
        int re = effective_conv_rank(r, t.c_in, arch.img_channels, true);
        add("torgb." + std::to_string(i), base, conv_adapter_count(re, t.c_in, arch.img_channels, 1));
    }

    rep.ratio = rep.base_params > 0 ? double(rep.adapter_params) / double(rep.base_params) : 0.0;
    return rep;
}

}  // namespace colora
