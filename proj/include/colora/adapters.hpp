// SPDX-License-Identifier: Apache-2.0
#pragma once

// Low-rank adapter algebra.
//
// FC layers get a classic two-factor adapter: delta = (alpha/r) * B x A with
// B zero-initialized so the adapted network starts exactly at the base one.
// Convolutions get a nested factorization: the high-order factor B of the
// conv delta is itself a product act(B' x M_inst), giving
//   delta = (alpha/r) * act(act(B' x M_inst) x A)
// with an activation at both composition stages.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "colora/arch.hpp"
#include "colora/common.hpp"
#include "colora/rng.hpp"
#include "colora/tensor.hpp"

namespace colora {

enum class Activation : uint8_t { Relu = 0, LeakyRelu02 = 1, None = 2 };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu02: return "leaky_relu_0.2";
        case Activation::None: return "none";
    }
    return "?";
}

Activation activation_from_name(const std::string& name);

// Which layer families carry adapters (placement ablation).
enum class Placement : uint8_t { Both = 0, FcOnly = 1, ConvOnly = 2 };

Placement placement_from_name(const std::string& name);
const char* placement_name(Placement p);

template <typename T>
struct LoraFcAdapterT {
    TensorT<T> B;  // [d_out x r], zero at init
    TensorT<T> A;  // [r x d_in]
    double alpha = 1.0;
    int rank = 1;
    int d_out = 0;
    int d_in = 0;
};

template <typename T>
struct LLoraConvAdapterT {
    TensorT<T> B_prime;  // [c_out x r], zero at init
    TensorT<T> M_inst;   // [r x r x k x k]
    TensorT<T> A;        // [r x c_in]
    double alpha = 1.0;
    int rank = 1;
    int c_out = 0;
    int c_in = 0;
    int k = 1;
    Activation act = Activation::Relu;
};

using LoraFcAdapter = LoraFcAdapterT<float>;
using LLoraConvAdapter = LLoraConvAdapterT<float>;

namespace detail {

template <typename T>
TensorT<T> apply_act(const TensorT<T>& x, Activation act, Tape<T>* tape) {
    switch (act) {
        case Activation::Relu: return relu(x, tape);
        case Activation::LeakyRelu02: return leaky_relu(x, 0.2, tape);
        case Activation::None: return x;
    }
    throw ValueError("unknown activation");
}

}  // namespace detail

// delta = (alpha/r) * B x A, differentiable w.r.t. both factors.
template <typename T>
TensorT<T> lora_fc_delta(const LoraFcAdapterT<T>& ad, Tape<T>* tape = nullptr) {
    if (ad.B.dim(0) != ad.d_out || ad.B.dim(1) != ad.rank || ad.A.dim(0) != ad.rank ||
        ad.A.dim(1) != ad.d_in)
        throw ShapeError("lora_fc_delta: factors do not match adapter metadata");
    TensorT<T> prod = matmul(ad.B, ad.A, tape);
    return scale(prod, ad.alpha / ad.rank, tape);
}

// B[o,s,u,v] = act( sum_t B'[o,t] * M_inst[t,s,u,v] ), contraction over the
// first rank axis of M_inst.
template <typename T>
TensorT<T> llora_conv_B(const LLoraConvAdapterT<T>& ad, Tape<T>* tape = nullptr) {
    int r = ad.rank, k = ad.k;
    if (ad.B_prime.dim(0) != ad.c_out || ad.B_prime.dim(1) != r)
        throw ShapeError("llora_conv_B: B' shape mismatch");
    if (ad.M_inst.ndim() != 4 || ad.M_inst.dim(0) != r || ad.M_inst.dim(1) != r ||
        ad.M_inst.dim(2) != k || ad.M_inst.dim(3) != k)
        throw ShapeError("llora_conv_B: M_inst shape mismatch");
    TensorT<T> m2 = reshape(ad.M_inst, {r, r * k * k}, tape);
    TensorT<T> prod = matmul(ad.B_prime, m2, tape);           // [c_out, r*k*k]
    TensorT<T> b4 = reshape(prod, {ad.c_out, r, k, k}, tape);
    return detail::apply_act(b4, ad.act, tape);
}

// delta[o,i,u,v] = (alpha/r) * act( sum_s B[o,s,u,v] * A[s,i] ).
template <typename T>
TensorT<T> llora_conv_delta(const LLoraConvAdapterT<T>& ad, Tape<T>* tape = nullptr) {
    if (ad.A.dim(0) != ad.rank || ad.A.dim(1) != ad.c_in)
        throw ShapeError("llora_conv_delta: A shape mismatch");
    int r = ad.rank, k = ad.k, co = ad.c_out, ci = ad.c_in;
    TensorT<T> b = llora_conv_B(ad, tape);                       // [co, r, k, k]
    TensorT<T> b_perm = permute(b, {0, 2, 3, 1}, tape);          // [co, k, k, r]
    TensorT<T> b_mat = reshape(b_perm, {co * k * k, r}, tape);
    TensorT<T> prod = matmul(b_mat, ad.A, tape);                 // [co*k*k, ci]
    TensorT<T> p4 = reshape(prod, {co, k, k, ci}, tape);
    TensorT<T> delta = permute(p4, {0, 3, 1, 2}, tape);          // [co, ci, k, k]
    delta = detail::apply_act(delta, ad.act, tape);
    return scale(delta, ad.alpha / r, tape);
}

namespace detail {

template <typename T>
inline bool all_zero(const TensorT<T>& t) {
    for (T v : t.data())
        if (v != T(0)) return false;
    return true;
}

template <typename T>
TensorT<T> merge_delta(const TensorT<T>& base, const TensorT<T>& delta, const char* what,
                       Tape<T>* tape) {
    if (base.shape() != delta.shape())
        throw ShapeError(std::string(what) + ": base " + shape_str(base.shape()) +
                         " vs delta " + shape_str(delta.shape()));
    if (base.requires_grad())
        throw ValueError(std::string(what) + ": base weight is marked trainable; it must stay frozen");
    // Inference fast path: an exactly-zero delta leaves the base untouched,
    // bit for bit. Skipped while recording so factor gradients still flow.
    if (!tape && all_zero(delta)) return base;
    return add(base, delta, tape);
}

}  // namespace detail

template <typename T>
TensorT<T> merged_weight(const TensorT<T>& base, const LoraFcAdapterT<T>& ad, Tape<T>* tape = nullptr) {
    return detail::merge_delta(base, lora_fc_delta(ad, tape), "merged_weight(fc)", tape);
}

template <typename T>
TensorT<T> merged_weight(const TensorT<T>& base, const LLoraConvAdapterT<T>& ad,
                         Tape<T>* tape = nullptr) {
    return detail::merge_delta(base, llora_conv_delta(ad, tape), "merged_weight(conv)", tape);
}

// Per-task adapter collection, keyed by layer id in network order.
template <typename T>
struct AdapterSetT {
    int rank = 1;
    double alpha_fc = 1.0;
    double alpha_conv = 1.0;
    Activation act = Activation::Relu;
    Placement placement = Placement::Both;
    Digest arch_fingerprint{};

    std::vector<std::pair<std::string, LoraFcAdapterT<T>>> fc;
    std::vector<std::pair<std::string, LLoraConvAdapterT<T>>> conv;

    const LoraFcAdapterT<T>* find_fc(const std::string& id) const {
        for (const auto& [name, ad] : fc)
            if (name == id) return &ad;
        return nullptr;
    }
    const LLoraConvAdapterT<T>* find_conv(const std::string& id) const {
        for (const auto& [name, ad] : conv)
            if (name == id) return &ad;
        return nullptr;
    }

    std::vector<TensorT<T>> trainable_params() const {
        std::vector<TensorT<T>> out;
        for (const auto& [name, ad] : fc) {
            out.push_back(ad.B);
            out.push_back(ad.A);
        }
        for (const auto& [name, ad] : conv) {
            out.push_back(ad.B_prime);
            out.push_back(ad.M_inst);
            out.push_back(ad.A);
        }
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, ad] : fc) n += ad.B.numel() + ad.A.numel();
        for (const auto& [name, ad] : conv) n += ad.B_prime.numel() + ad.M_inst.numel() + ad.A.numel();
        return n;
    }
};

using AdapterSet = AdapterSetT<float>;

// Layer ids of everything adaptable, in network order.
std::vector<std::string> adaptable_fc_ids(const ArchSpec& arch);
std::vector<std::string> adaptable_conv_ids(const ArchSpec& arch);

// RGB projections are structurally tiny (c_out = img_channels); their rank is
// clamped to the layer's min dimension so the wide-rank ablations remain
// well-formed. All other layers reject r beyond min(c_in, c_out).
int effective_conv_rank(int r, int c_in, int c_out, bool is_torgb);

// Zero-start initialization: B (and B') start at zero, the remaining factors
// draw from N(0, 0.02^2); every delta is exactly zero right after init.
template <typename T>
AdapterSetT<T> init_adapter_set(const ArchSpec& arch, int r, double alpha_fc, double alpha_conv,
                                uint64_t seed, Activation act = Activation::Relu,
                                Placement placement = Placement::Both) {
    arch.validate();
    if (r < 1) throw ValueError("init_adapter_set: rank must be >= 1");
    if (alpha_fc <= 0 || alpha_conv <= 0) throw ValueError("init_adapter_set: alphas must be positive");
    AdapterSetT<T> set;
    set.rank = r;
    set.alpha_fc = alpha_fc;
    set.alpha_conv = alpha_conv;
    set.act = act;
    set.placement = placement;
    set.arch_fingerprint = arch.fingerprint();
    RandomSource rng(derive_seed(seed, 0xADA7));
    const double sigma = 0.02;

    if (placement != Placement::ConvOnly) {
        int d_in = arch.z_dim;
        for (const std::string& id : adaptable_fc_ids(arch)) {
            int d_out = arch.w_dim;
            if (r > std::min(d_in, d_out))
                throw ValueError("init_adapter_set: rank " + std::to_string(r) + " exceeds min dim of " + id);
            LoraFcAdapterT<T> ad;
            ad.rank = r;
            ad.alpha = alpha_fc;
            ad.d_out = d_out;
            ad.d_in = d_in;
            ad.B = TensorT<T>::zeros({d_out, r});
            ad.A = TensorT<T>::randn({r, d_in}, rng, sigma);
            ad.B.set_requires_grad();
            ad.A.set_requires_grad();
            set.fc.emplace_back(id, std::move(ad));
            d_in = d_out;
        }
    }
    if (placement != Placement::FcOnly) {
        auto ids = adaptable_conv_ids(arch);
        std::size_t idx = 0;
        auto push_conv = [&](const std::string& id, int c_in, int c_out, int k, bool is_torgb) {
            int re = effective_conv_rank(r, c_in, c_out, is_torgb);
            if (re < 1)
                throw ValueError("init_adapter_set: rank " + std::to_string(r) + " exceeds min dim of " + id);
            LLoraConvAdapterT<T> ad;
            ad.rank = re;
            ad.alpha = alpha_conv;
            ad.c_out = c_out;
            ad.c_in = c_in;
            ad.k = k;
            ad.act = act;
            ad.B_prime = TensorT<T>::zeros({c_out, re});
            ad.M_inst = TensorT<T>::randn({re, re, k, k}, rng, sigma);
            ad.A = TensorT<T>::randn({re, c_in}, rng, sigma);
            ad.B_prime.set_requires_grad();
            ad.M_inst.set_requires_grad();
            ad.A.set_requires_grad();
            set.conv.emplace_back(id, std::move(ad));
            ++idx;
        };
        for (const ConvLayerSpec& c : arch.synthesis) push_conv(ids[idx], c.c_in, c.c_out, c.k, false);
        for (const ToRgbSpec& t : arch.torgbs) push_conv(ids[idx], t.c_in, arch.img_channels, 1, true);
    }
    return set;
}

// Exact trainable-parameter accounting against the frozen base.
struct LayerParamCount {
    std::string name;
    std::uint64_t base = 0;
    std::uint64_t adapter = 0;
};

struct ParamCountReport {
    std::uint64_t base_params = 0;
    std::uint64_t adapter_params = 0;
    double ratio = 0.0;  // adapter / base
    std::vector<LayerParamCount> per_layer;
};

ParamCountReport count_params(const ArchSpec& arch, int r);

}  // namespace colora
