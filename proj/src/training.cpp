// SPDX-License-Identifier: Apache-2.0
#include "colora/training.hpp"

#include <chrono>
#include <cstring>
#include <fstream>

#include "colora/common.hpp"

namespace colora {

void TrainLog::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValueError("cannot open log file " + path);
    out << "iteration,loss_critic,loss_gen,wall_ms\n";
    for (const TrainLogRow& r : rows)
        out << r.iteration << ',' << format_sig6(r.loss_critic) << ',' << format_sig6(r.loss_gen)
            << ',' << format_sig6(r.wall_ms) << '\n';
}

Tensor sample_batch(const std::vector<Tensor>& data, int batch, RandomSource& rng) {
    if (data.empty()) throw ValueError("sample_batch: empty dataset");
    const Shape& s = data[0].shape();
    if (s.size() != 3) throw ShapeError("sample_batch: samples must be [c x h x w]");
    Tensor out = Tensor::zeros({batch, s[0], s[1], s[2]});
    std::size_t n = data[0].numel();
    for (int b = 0; b < batch; ++b) {
        int idx = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
        std::memcpy(out.data().data() + static_cast<std::size_t>(b) * n, data[static_cast<std::size_t>(idx)].data().data(),
                    n * sizeof(float));
    }
    return out;
}

namespace {

// Shared WGAN loop. gen_forward must produce a batch of fakes from (z,
// noise_seed, tape); gen_params are the tensors its gradient reaches.
void run_wgan(const ArchSpec& arch, const std::vector<Tensor>& data, const TrainConfig& cfg,
              int iterations,
              const std::function<Tensor(const Tensor&, uint64_t, Tape<float>*)>& gen_forward,
              std::vector<Tensor> gen_params, TrainLog* log) {
    cfg.validate();
    if (data.empty()) throw ValueError("training requires at least one sample");
    RandomSource rng(derive_seed(cfg.seed, 0x77A17));
    CriticWeights critic = init_critic<float>(arch, derive_seed(cfg.seed, 0xC817));
    std::vector<Tensor> critic_params = critic.all_tensors();
    for (auto& p : critic_params) p.set_requires_grad(true);

    AdamState opt_gen(gen_params);
    AdamState opt_critic(critic_params);

    auto t0 = std::chrono::steady_clock::now();
    double last_lc = 0.0, last_lg = 0.0;
    for (int iter = 0; iter < iterations; ++iter) {
        try {
            for (int j = 0; j < cfg.n_critic; ++j) {
                Tensor real = sample_batch(data, cfg.batch_size, rng);
                Tensor z = Tensor::randn({cfg.batch_size, arch.z_dim}, rng, 1.0);
                uint64_t noise_seed = rng.next_u64();
                Tensor fake = gen_forward(z, noise_seed, nullptr);  // constant for critic updates
                Tape<float> tape;
                Tensor rs = critic_forward(real, critic, arch, &tape);
                Tensor fs = critic_forward(fake, critic, arch, &tape);
                auto [loss_c, loss_g] = wgan_losses(rs, fs, &tape);
                (void)loss_g;
                zero_grads(critic_params);
                backward(tape, loss_c);
                adam_step(opt_critic, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
                clip_weights(critic_params, cfg.clip_c);
                last_lc = loss_c.scalar_value();
            }
            Tensor z = Tensor::randn({cfg.batch_size, arch.z_dim}, rng, 1.0);
            uint64_t noise_seed = rng.next_u64();
            Tape<float> tape;
            Tensor fake = gen_forward(z, noise_seed, &tape);
            Tensor fs = critic_forward(fake, critic, arch, &tape);
            Tensor loss_g = scale(mean(fs, &tape), -1.0, &tape);
            zero_grads(gen_params);
            zero_grads(critic_params);
            backward(tape, loss_g);
            adam_step(opt_gen, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
            last_lg = loss_g.scalar_value();
        } catch (const NumericalError& e) {
            throw NumericalError("iteration " + std::to_string(iter) + " (loss_critic=" +
                                 format_sig6(last_lc) + ", loss_gen=" + format_sig6(last_lg) +
                                 "): " + e.what());
        }
        if (log && ((iter + 1) % cfg.log_every == 0 || iter + 1 == iterations)) {
            double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                            .count();
            log->rows.push_back({iter + 1, last_lc, last_lg, ms});
        }
    }
}

}  // namespace

AdapterSet train_adaptation(GeneratorWeights& base, const ArchSpec& arch,
                            const std::vector<Tensor>& data, const TrainConfig& cfg, double alpha_fc,
                            double alpha_conv, int rank, Activation act, Placement placement,
                            TrainLog* log) {
    base.set_trainable(false);
    Digest before = base.fingerprint();
    AdapterSet set = init_adapter_set<float>(arch, rank, alpha_fc, alpha_conv,
                                             derive_seed(cfg.seed, 0x5E7), act, placement);
    std::vector<Tensor> params = set.trainable_params();
    auto gen = [&](const Tensor& z, uint64_t noise_seed, Tape<float>* tape) {
        return generator_forward(z, base, arch, &set, noise_seed, tape);
    };
    run_wgan(arch, data, cfg, cfg.iterations, gen, params, log);
    if (base.fingerprint() != before)
        throw NumericalError("frozen-base invariant violated: base weights changed during adaptation");
    return set;
}

GeneratorWeights train_base(const ArchSpec& arch, const std::vector<Tensor>& data,
                            const TrainConfig& cfg, int iterations, TrainLog* log) {
    GeneratorWeights g = init_generator<float>(arch, cfg.seed);
    g.set_trainable(true);
    auto gen = [&](const Tensor& z, uint64_t noise_seed, Tape<float>* tape) {
        return generator_forward<float>(z, g, arch, nullptr, noise_seed, tape);
    };
    run_wgan(arch, data, cfg, iterations, gen, g.all_tensors(), log);
    g.set_trainable(false);
    return g;
}

}  // namespace colora
