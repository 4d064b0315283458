// SPDX-License-Identifier: Apache-2.0
#pragma once

// StyleGAN2-lite generator (mapping MLP + styled synthesis stack with noise
// injection and skip-branch RGB output) and a pooling critic for the
// Wasserstein objective. Forward passes are pure given (weights, adapters,
// seeds); adapters merge at the weight level and never mutate the base.

#include <cstdint>
#include <string>
#include <vector>

#include "colora/adapters.hpp"
#include "colora/arch.hpp"
#include "colora/common.hpp"
#include "colora/rng.hpp"
#include "colora/sha256.hpp"
#include "colora/tensor.hpp"

namespace colora {

template <typename T>
struct SynthLayerWeightsT {
    TensorT<T> conv_w;      // [c_out, c_in, k, k]
    TensorT<T> conv_b;      // [c_out]
    TensorT<T> affine_w;    // [c_in, w_dim], style = affine(w)
    TensorT<T> affine_b;    // [c_in], init 1 so modulation starts at identity
    TensorT<T> noise_scale; // [1]
};

template <typename T>
struct ToRgbWeightsT {
    TensorT<T> conv_w;    // [img, c_in, 1, 1]
    TensorT<T> conv_b;    // [img]
    TensorT<T> affine_w;  // [c_in, w_dim]
    TensorT<T> affine_b;  // [c_in]
};

template <typename T>
struct GeneratorWeightsT {
    TensorT<T> const_input;  // [base_channels, base, base]
    std::vector<TensorT<T>> mapping_w;  // [w_dim, d_in]
    std::vector<TensorT<T>> mapping_b;  // [w_dim]
    std::vector<SynthLayerWeightsT<T>> synth;
    std::vector<ToRgbWeightsT<T>> torgb;

    template <typename Fn>
    void for_each_tensor(Fn fn) {
        fn("const_input", const_input);
        for (std::size_t i = 0; i < mapping_w.size(); ++i) {
            fn("mapping." + std::to_string(i) + ".weight", mapping_w[i]);
            fn("mapping." + std::to_string(i) + ".bias", mapping_b[i]);
        }
        for (std::size_t i = 0; i < synth.size(); ++i) {
            std::string p = "synth." + std::to_string(i);
            fn(p + ".conv_w", synth[i].conv_w);
            fn(p + ".conv_b", synth[i].conv_b);
            fn(p + ".affine_w", synth[i].affine_w);
            fn(p + ".affine_b", synth[i].affine_b);
            fn(p + ".noise_scale", synth[i].noise_scale);
        }
        for (std::size_t i = 0; i < torgb.size(); ++i) {
            std::string p = "torgb." + std::to_string(i);
            fn(p + ".conv_w", torgb[i].conv_w);
            fn(p + ".conv_b", torgb[i].conv_b);
            fn(p + ".affine_w", torgb[i].affine_w);
            fn(p + ".affine_b", torgb[i].affine_b);
        }
    }

    std::vector<TensorT<T>> all_tensors() {
        std::vector<TensorT<T>> out;
        for_each_tensor([&](const std::string&, TensorT<T>& t) { out.push_back(t); });
        return out;
    }

    void set_trainable(bool on) {
        for_each_tensor([&](const std::string&, TensorT<T>& t) { t.set_requires_grad(on); });
    }

    // SHA-256 over the little-endian float32 image of every tensor in
    // declaration order; the frozen-base invariant is asserted against this.
    Digest fingerprint() {
        Sha256 h;
        for_each_tensor([&](const std::string& name, TensorT<T>& t) {
            h.update(name.data(), name.size());
            for (T v : t.data()) {
                float f = static_cast<float>(v);
                h.update(&f, sizeof(float));
            }
        });
        return h.finish();
    }
};

template <typename T>
struct CriticWeightsT {
    TensorT<T> from_rgb_w, from_rgb_b;
    std::vector<TensorT<T>> conv_w, conv_b;
    TensorT<T> head_w, head_b;  // [1, flat_dim], [1]

    std::vector<TensorT<T>> all_tensors() {
        std::vector<TensorT<T>> out{from_rgb_w, from_rgb_b};
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            out.push_back(conv_w[i]);
            out.push_back(conv_b[i]);
        }
        out.push_back(head_w);
        out.push_back(head_b);
        return out;
    }

    void set_trainable(bool on) {
        for (auto t : all_tensors()) t.set_requires_grad(on);
    }
};

using GeneratorWeights = GeneratorWeightsT<float>;
using CriticWeights = CriticWeightsT<float>;

template <typename T>
GeneratorWeightsT<T> init_generator(const ArchSpec& arch, uint64_t seed) {
    arch.validate();
    RandomSource rng(derive_seed(seed, 0x6E9));
    GeneratorWeightsT<T> g;
    g.const_input = TensorT<T>::randn({arch.base_channels, arch.base_resolution, arch.base_resolution},
                                      rng, 1.0);
    int d_in = arch.z_dim;
    for (int i = 0; i < arch.mapping_layers; ++i) {
        g.mapping_w.push_back(TensorT<T>::randn({arch.w_dim, d_in}, rng, 1.0 / std::sqrt(double(d_in))));
        g.mapping_b.push_back(TensorT<T>::zeros({arch.w_dim}));
        d_in = arch.w_dim;
    }
    for (const ConvLayerSpec& c : arch.synthesis) {
        SynthLayerWeightsT<T> l;
        double fan_in = double(c.c_in) * c.k * c.k;
        l.conv_w = TensorT<T>::randn({c.c_out, c.c_in, c.k, c.k}, rng, std::sqrt(2.0 / fan_in));
        l.conv_b = TensorT<T>::zeros({c.c_out});
        l.affine_w = TensorT<T>::randn({c.c_in, arch.w_dim}, rng, 0.02);
        l.affine_b = TensorT<T>::full({c.c_in}, T(1));
        l.noise_scale = TensorT<T>::zeros({1});
        g.synth.push_back(std::move(l));
    }
    for (const ToRgbSpec& t : arch.torgbs) {
        ToRgbWeightsT<T> l;
        l.conv_w = TensorT<T>::randn({arch.img_channels, t.c_in, 1, 1}, rng,
                                     1.0 / std::sqrt(double(t.c_in)));
        l.conv_b = TensorT<T>::zeros({arch.img_channels});
        l.affine_w = TensorT<T>::randn({t.c_in, arch.w_dim}, rng, 0.02);
        l.affine_b = TensorT<T>::full({t.c_in}, T(1));
        g.torgb.push_back(std::move(l));
    }
    return g;
}

template <typename T>
CriticWeightsT<T> init_critic(const ArchSpec& arch, uint64_t seed) {
    CriticSpec cs = derive_critic(arch);
    RandomSource rng(derive_seed(seed, 0xC517));
    CriticWeightsT<T> c;
    double fan = double(arch.img_channels) * 9;
    c.from_rgb_w = TensorT<T>::randn({cs.from_rgb_channels, arch.img_channels, 3, 3}, rng,
                                     std::sqrt(2.0 / fan));
    c.from_rgb_b = TensorT<T>::zeros({cs.from_rgb_channels});
    for (const CriticLayerSpec& l : cs.layers) {
        double f = double(l.c_in) * 9;
        c.conv_w.push_back(TensorT<T>::randn({l.c_out, l.c_in, 3, 3}, rng, std::sqrt(2.0 / f)));
        c.conv_b.push_back(TensorT<T>::zeros({l.c_out}));
    }
    c.head_w = TensorT<T>::randn({1, cs.flat_dim}, rng, 1.0 / std::sqrt(double(cs.flat_dim)));
    c.head_b = TensorT<T>::zeros({1});
    return c;
}

namespace detail {

template <typename T>
void check_adapter_arch(const AdapterSetT<T>* adapters, const ArchSpec& arch) {
    if (adapters && adapters->arch_fingerprint != arch.fingerprint())
        throw ValueError("adapter set was built for a different architecture (fingerprint mismatch)");
}

}  // namespace detail

// z [batch, z_dim] -> w [batch, w_dim]; FC weights take their LoRA merge
// when an adapter is present.
template <typename T>
TensorT<T> mapping_forward(const TensorT<T>& z, GeneratorWeightsT<T>& weights, const ArchSpec& arch,
                           const AdapterSetT<T>* adapters = nullptr, Tape<T>* tape = nullptr) {
    if (z.ndim() != 2 || z.dim(1) != arch.z_dim)
        throw ShapeError("mapping_forward: z must be [batch x " + std::to_string(arch.z_dim) + "]");
    detail::check_adapter_arch(adapters, arch);
    TensorT<T> x = z;
    for (int i = 0; i < arch.mapping_layers; ++i) {
        TensorT<T> w = weights.mapping_w[static_cast<std::size_t>(i)];
        if (adapters) {
            if (const auto* ad = adapters->find_fc("mapping." + std::to_string(i)))
                w = merged_weight(w, *ad, tape);
        }
        x = linear(x, w, weights.mapping_b[static_cast<std::size_t>(i)], tape);
        x = leaky_relu(x, 0.2, tape);
    }
    return x;
}

// Per-layer per-sample noise images, deterministic in (seed, layer, batch).
template <typename T>
TensorT<T> synthesis_noise(uint64_t noise_seed, int layer, int batch, int h, int w) {
    RandomSource rng(derive_seed(noise_seed, 0xA015E + static_cast<uint64_t>(layer)));
    return TensorT<T>::randn({batch, 1, h, w}, rng, 1.0);
}

// w [batch, w_dim] -> image [batch, img_channels, R, R] in [-1, 1].
template <typename T>
TensorT<T> synthesis_forward(const TensorT<T>& w, GeneratorWeightsT<T>& weights, const ArchSpec& arch,
                             const AdapterSetT<T>* adapters = nullptr, uint64_t noise_seed = 0,
                             Tape<T>* tape = nullptr) {
    if (w.ndim() != 2 || w.dim(1) != arch.w_dim)
        throw ShapeError("synthesis_forward: w must be [batch x " + std::to_string(arch.w_dim) + "]");
    detail::check_adapter_arch(adapters, arch);
    int batch = w.dim(0);
    TensorT<T> x = tile_batch(weights.const_input, batch, tape);
    int res = arch.base_resolution;
    TensorT<T> rgb;
    std::size_t rgb_idx = 0;

    auto styled_conv = [&](TensorT<T> input, const TensorT<T>& base_w, const TensorT<T>& affine_w,
                           const TensorT<T>& affine_b, const LLoraConvAdapterT<T>* ad) {
        TensorT<T> style = linear(w, affine_w, affine_b, tape);  // [batch, c_in]
        TensorT<T> weight = ad ? merged_weight(base_w, *ad, tape) : base_w;
        TensorT<T> y = conv2d(scale_channels(input, style, tape), weight, tape);
        if (arch.demodulate) {
            TensorT<T> d = demod_scales(weight, style, 1e-8, tape);
            y = scale_channels(y, d, tape);
        }
        return y;
    };

    auto emit_rgb = [&](const TensorT<T>& feat) {
        const ToRgbSpec& spec = arch.torgbs[rgb_idx];
        ToRgbWeightsT<T>& tw = weights.torgb[rgb_idx];
        const LLoraConvAdapterT<T>* ad =
            adapters ? adapters->find_conv("torgb." + std::to_string(rgb_idx)) : nullptr;
        (void)spec;
        TensorT<T> y = styled_conv(feat, tw.conv_w, tw.affine_w, tw.affine_b, ad);
        y = add_channel_bias(y, tw.conv_b, tape);
        rgb = rgb.valid() ? add(upsample2x_nearest(rgb, tape), y, tape) : y;
        ++rgb_idx;
    };

    for (std::size_t i = 0; i < arch.synthesis.size(); ++i) {
        const ConvLayerSpec& spec = arch.synthesis[i];
        SynthLayerWeightsT<T>& lw = weights.synth[i];
        if (spec.res == 2 * res) {
            x = upsample2x_nearest(x, tape);
            res = spec.res;
        }
        const LLoraConvAdapterT<T>* ad =
            adapters ? adapters->find_conv("synth." + std::to_string(i)) : nullptr;
        x = styled_conv(x, lw.conv_w, lw.affine_w, lw.affine_b, ad);
        TensorT<T> noise = synthesis_noise<T>(noise_seed, static_cast<int>(i), batch, res, res);
        x = add_noise(x, lw.noise_scale, noise, tape);
        x = add_channel_bias(x, lw.conv_b, tape);
        x = leaky_relu(x, 0.2, tape);
        bool last_at_res = (i + 1 == arch.synthesis.size()) || arch.synthesis[i + 1].res != spec.res;
        if (last_at_res && rgb_idx < arch.torgbs.size() && arch.torgbs[rgb_idx].res == spec.res)
            emit_rgb(x);
    }
    return colora::tanh(rgb, tape);
}

template <typename T>
TensorT<T> generator_forward(const TensorT<T>& z, GeneratorWeightsT<T>& weights, const ArchSpec& arch,
                             const AdapterSetT<T>* adapters = nullptr, uint64_t noise_seed = 0,
                             Tape<T>* tape = nullptr) {
    TensorT<T> w = mapping_forward(z, weights, arch, adapters, tape);
    return synthesis_forward(w, weights, arch, adapters, noise_seed, tape);
}

// img [batch, img_channels, R, R] -> unbounded scores [batch, 1].
template <typename T>
TensorT<T> critic_forward(const TensorT<T>& img, CriticWeightsT<T>& cw, const ArchSpec& arch,
                          Tape<T>* tape = nullptr) {
    CriticSpec cs = derive_critic(arch);
    int top = arch.top_resolution();
    if (img.ndim() != 4 || img.dim(1) != arch.img_channels || img.dim(2) != top || img.dim(3) != top)
        throw ShapeError("critic_forward: expected [batch x " + std::to_string(arch.img_channels) +
                         " x " + std::to_string(top) + " x " + std::to_string(top) + "], got " +
                         shape_str(img.shape()));
    TensorT<T> x = conv2d(img, cw.from_rgb_w, tape);
    x = add_channel_bias(x, cw.from_rgb_b, tape);
    x = leaky_relu(x, 0.2, tape);
    for (std::size_t i = 0; i < cs.layers.size(); ++i) {
        x = conv2d(x, cw.conv_w[i], tape);
        x = add_channel_bias(x, cw.conv_b[i], tape);
        x = leaky_relu(x, 0.2, tape);
        if (cs.layers[i].pool_after) x = avgpool2x(x, tape);
    }
    x = reshape(x, {img.dim(0), cs.flat_dim}, tape);
    return linear(x, cw.head_w, cw.head_b, tape);
}

}  // namespace colora
