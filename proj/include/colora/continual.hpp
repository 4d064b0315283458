// SPDX-License-Identifier: Apache-2.0
#pragma once

// The continual protocol driver: sequential task training over one frozen
// base, adapter-only persistence, and seeded evaluation of any stored task.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colora/datasets.hpp"
#include "colora/metrics.hpp"
#include "colora/networks.hpp"
#include "colora/registry.hpp"
#include "colora/training.hpp"

namespace colora {

struct EvalConfig {
    int fid_samples = 500;
    int diversity_samples = 100;
    int probe_samples = 32;  // source-side sample count for L_st
    uint64_t seed = 99;
    int batch = 16;  // generation batch; part of the seeded stream layout
};

// Deterministic sample sheet: `count` images from base (+ adapters) under
// `eval_seed`. The z and noise streams depend only on (seed, batch layout).
std::vector<Tensor> generate_samples(GeneratorWeights& base, const ArchSpec& arch,
                                     const AdapterSet* adapters, int count, uint64_t eval_seed,
                                     int batch = 16);

struct TaskMetrics {
    double fid = 0.0;
    double diversity = 0.0;
};

// proxy-FID(generated vs task data) + pairwise diversity of the generations.
TaskMetrics evaluate_generator(GeneratorWeights& base, const ArchSpec& arch,
                               const AdapterSet* adapters, const std::vector<Tensor>& task_data,
                               const EvalConfig& eval);

struct NamedDataset {
    std::string task_id;
    DatasetSpec spec;
};

struct AlphaPolicy {
    bool automatic = true;   // multiplier from default_multiplier(L_st)
    double alpha_fc = 0.0;   // used when !automatic
    double alpha_conv = 0.0;
};

struct ContinualTaskResult {
    std::string task_id;
    double l_st = 0.0;
    double alpha_fc = 0.0;
    double alpha_conv = 0.0;
    TaskMetrics at_train;   // measured right after this task finished
    TaskMetrics at_end;     // measured after the final task, via reload
};

struct ContinualReport {
    std::vector<ContinualTaskResult> tasks;
    double avg_fid = 0.0;
    double avg_diversity = 0.0;
};

// Trains every task in order against the frozen base, persists adapter
// checkpoints into a fresh registry at registry_dir, then re-evaluates every
// stored task from its checkpoint.
ContinualReport run_continual(const std::vector<NamedDataset>& tasks, GeneratorWeights& base,
                              const ArchSpec& arch, const TrainConfig& cfg, int rank,
                              const AlphaPolicy& policy, const DatasetSpec& source,
                              const EvalConfig& eval, const std::filesystem::path& registry_dir,
                              const std::string& base_checkpoint_rel = "",
                              const std::filesystem::path& log_dir = {});

}  // namespace colora
