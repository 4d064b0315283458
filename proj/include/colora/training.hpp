// SPDX-License-Identifier: Apache-2.0
#pragma once

// WGAN training with Adam: base pretraining (everything trainable) and
// few-shot adaptation (frozen base, adapters + fresh critic trainable).
// Lipschitz enforcement by per-step weight clipping on the critic.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "colora/adapters.hpp"
#include "colora/networks.hpp"
#include "colora/tensor.hpp"

namespace colora {

struct TrainConfig {
    double learning_rate = 0.002;
    int batch_size = 4;
    int iterations = 1500;
    int n_critic = 5;
    double clip_c = 0.01;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    int log_every = 50;

    void validate() const {
        if (learning_rate <= 0 || batch_size <= 0 || iterations < 0 || n_critic <= 0 || clip_c <= 0 ||
            adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1 || adam_eps <= 0)
            throw ConfigError("train config: invalid value");
    }
};

// Per-parameter first/second moments plus the shared step counter.
template <typename T>
struct AdamStateT {
    std::vector<TensorT<T>> params;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    long t = 0;

    explicit AdamStateT(std::vector<TensorT<T>> p) : params(std::move(p)) {
        for (auto& q : params) {
            m.emplace_back(q.numel(), T(0));
            v.emplace_back(q.numel(), T(0));
        }
    }
};

using AdamState = AdamStateT<float>;

// Standard bias-corrected Adam. Rejects non-finite gradients before touching
// any parameter. Parameters without an allocated gradient are treated as
// zero-gradient.
template <typename T>
void adam_step(AdamStateT<T>& st, double lr, double beta1, double beta2, double eps) {
    for (auto& p : st.params) {
        if (!p.has_grad()) continue;
        for (T g : p.grad())
            if (!std::isfinite(static_cast<double>(g)))
                throw NumericalError("adam_step: non-finite gradient; parameters untouched");
    }
    st.t += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < st.params.size(); ++i) {
        auto& p = st.params[i];
        if (!p.has_grad()) continue;
        const std::vector<T>& g = p.grad();
        std::vector<T>& m = st.m[i];
        std::vector<T>& v = st.v[i];
        std::vector<T>& x = p.data();
        for (std::size_t j = 0; j < x.size(); ++j) {
            m[j] = static_cast<T>(beta1 * m[j] + (1.0 - beta1) * g[j]);
            v[j] = static_cast<T>(beta2 * v[j] + (1.0 - beta2) * double(g[j]) * double(g[j]));
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            x[j] = static_cast<T>(x[j] - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

template <typename T>
void clip_weights(std::vector<TensorT<T>>& params, double c) {
    if (c <= 0) throw ValueError("clip_weights: bound must be positive");
    T lo = static_cast<T>(-c), hi = static_cast<T>(c);
    for (auto& p : params)
        for (T& v : p.data()) v = v < lo ? lo : (v > hi ? hi : v);
}

// loss_critic = mean(fake) - mean(real); loss_gen = -mean(fake).
template <typename T>
std::pair<TensorT<T>, TensorT<T>> wgan_losses(const TensorT<T>& real_scores,
                                              const TensorT<T>& fake_scores,
                                              Tape<T>* tape = nullptr) {
    if (real_scores.numel() == 0 || fake_scores.numel() == 0)
        throw ShapeError("wgan_losses: empty batch");
    if (real_scores.dim(0) != fake_scores.dim(0))
        throw ShapeError("wgan_losses: batch dimensions disagree");
    TensorT<T> mf = mean(fake_scores, tape);
    TensorT<T> mr = mean(real_scores, tape);
    TensorT<T> loss_critic = sub(mf, mr, tape);
    TensorT<T> loss_gen = scale(mf, -1.0, tape);
    return {loss_critic, loss_gen};
}

struct TrainLogRow {
    int iteration = 0;
    double loss_critic = 0.0;
    double loss_gen = 0.0;
    double wall_ms = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    void write_csv(const std::string& path) const;
};

// 10-shot style sampling: i.i.d. with replacement from the task set.
Tensor sample_batch(const std::vector<Tensor>& data, int batch, RandomSource& rng);

// Adversarial adaptation over a frozen base. Returns the trained adapters;
// the base weight fingerprint is asserted unchanged.
AdapterSet train_adaptation(GeneratorWeights& base, const ArchSpec& arch,
                            const std::vector<Tensor>& data, const TrainConfig& cfg, double alpha_fc,
                            double alpha_conv, int rank, Activation act = Activation::Relu,
                            Placement placement = Placement::Both, TrainLog* log = nullptr);

// Pretraining: same loop with every generator tensor trainable, no adapters.
GeneratorWeights train_base(const ArchSpec& arch, const std::vector<Tensor>& data,
                            const TrainConfig& cfg, int iterations, TrainLog* log = nullptr);

}  // namespace colora
