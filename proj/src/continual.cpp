// SPDX-License-Identifier: Apache-2.0
#include "colora/continual.hpp"

#include <cstring>

namespace colora {

namespace fs = std::filesystem;

std::vector<Tensor> generate_samples(GeneratorWeights& base, const ArchSpec& arch,
                                     const AdapterSet* adapters, int count, uint64_t eval_seed,
                                     int batch) {
    if (count < 1) throw ValueError("generate_samples: count must be >= 1");
    if (batch < 1) throw ValueError("generate_samples: batch must be >= 1");
    RandomSource rng(derive_seed(eval_seed, 0xE7A1));
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(count));
    int done = 0;
    while (done < count) {
        int n = std::min(batch, count - done);
        Tensor z = Tensor::randn({n, arch.z_dim}, rng, 1.0);
        uint64_t noise_seed = rng.next_u64();
        Tensor imgs = generator_forward<float>(z, base, arch, adapters, noise_seed, nullptr);
        int c = imgs.dim(1), h = imgs.dim(2), w = imgs.dim(3);
        std::size_t plane = static_cast<std::size_t>(c) * h * w;
        for (int b = 0; b < n; ++b) {
            Tensor img = Tensor::zeros({c, h, w});
            std::memcpy(img.data().data(), imgs.data().data() + static_cast<std::size_t>(b) * plane,
                        plane * sizeof(float));
            out.push_back(std::move(img));
        }
        done += n;
    }
    return out;
}

TaskMetrics evaluate_generator(GeneratorWeights& base, const ArchSpec& arch,
                               const AdapterSet* adapters, const std::vector<Tensor>& task_data,
                               const EvalConfig& eval) {
    std::vector<Tensor> generated =
        generate_samples(base, arch, adapters, eval.fid_samples, eval.seed, eval.batch);
    TaskMetrics m;
    m.fid = proxy_fid(generated, task_data);
    int ds = std::min<int>(eval.diversity_samples, static_cast<int>(generated.size()));
    std::vector<Tensor> div_set(generated.begin(), generated.begin() + ds);
    m.diversity = pairwise_diversity(div_set);
    return m;
}

ContinualReport run_continual(const std::vector<NamedDataset>& tasks, GeneratorWeights& base,
                              const ArchSpec& arch, const TrainConfig& cfg, int rank,
                              const AlphaPolicy& policy, const DatasetSpec& source,
                              const EvalConfig& eval, const fs::path& registry_dir,
                              const std::string& base_checkpoint_rel, const fs::path& log_dir) {
    if (tasks.empty()) throw ValueError("run_continual: need at least one task");
    base.set_trainable(false);
    Registry reg = Registry::create(registry_dir, base.fingerprint(), base_checkpoint_rel);

    DatasetSpec probe_spec = source;
    probe_spec.samples = eval.probe_samples;
    std::vector<Tensor> source_probe = render_dataset(probe_spec);

    ContinualReport report;
    for (const NamedDataset& task : tasks) {
        std::vector<Tensor> data = render_dataset(task.spec);
        ContinualTaskResult res;
        res.task_id = task.task_id;
        res.l_st = source_target_distance(source_probe, data);
        if (policy.automatic) {
            AlphaChoice ac = select_alphas(res.l_st, default_multiplier(res.l_st));
            res.alpha_fc = ac.alpha_fc;
            res.alpha_conv = ac.alpha_conv;
        } else {
            res.alpha_fc = policy.alpha_fc;
            res.alpha_conv = policy.alpha_conv;
        }
        TrainLog log;
        AdapterSet set = train_adaptation(base, arch, data, cfg, res.alpha_fc, res.alpha_conv, rank,
                                          Activation::Relu, Placement::Both, &log);
        if (!log_dir.empty()) log.write_csv((log_dir / ("adapt_" + task.task_id + ".csv")).string());
        res.at_train = evaluate_generator(base, arch, &set, data, eval);

        TaskRecord rec;
        rec.task_id = task.task_id;
        rec.l_st = res.l_st;
        rec.fid_at_train = res.at_train.fid;
        rec.diversity_at_train = res.at_train.diversity;
        reg.add_task(set, rec);
        report.tasks.push_back(std::move(res));
    }

    // end-of-sequence evaluation of every stored task from its checkpoint
    double fid_acc = 0.0, div_acc = 0.0;
    for (ContinualTaskResult& res : report.tasks) {
        AdapterSet set = reg.load_task(res.task_id, arch);
        const NamedDataset* task = nullptr;
        for (const NamedDataset& t : tasks)
            if (t.task_id == res.task_id) task = &t;
        std::vector<Tensor> data = render_dataset(task->spec);
        res.at_end = evaluate_generator(base, arch, &set, data, eval);
        fid_acc += res.at_end.fid;
        div_acc += res.at_end.diversity;
    }
    report.avg_fid = fid_acc / double(report.tasks.size());
    report.avg_diversity = div_acc / double(report.tasks.size());
    return report;
}

}  // namespace colora
