// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration (line-oriented key = value file with [section] headers),
// experiment orchestration and report emission for the CLI.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "colora/adapters.hpp"
#include "colora/arch.hpp"
#include "colora/continual.hpp"
#include "colora/datasets.hpp"
#include "colora/training.hpp"

namespace colora {

struct RunConfig {
    ArchSpec arch;
    TrainConfig train;
    int pretrain_iterations = 3000;
    int rank = 1;
    AlphaPolicy alpha;
    Activation activation = Activation::Relu;
    DatasetSpec source;
    std::vector<NamedDataset> tasks;
    EvalConfig eval;
};

RunConfig parse_config(const std::filesystem::path& path);

// Flag overrides shared by the subcommands.
struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string base_path;
    std::string registry_dir;
    std::string task_id;
    std::string axis;
    std::optional<uint64_t> seed;
    std::optional<int> iterations;
    std::optional<int> rank;
    std::optional<double> alpha_fc;
    std::optional<double> alpha_conv;
};

// Exit codes: 0 success, 2 config/usage, 3 numerical failure,
// 4 registry/protocol violation.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitRegistry = 4;

int cmd_pretrain(const CliOptions& opt);
int cmd_adapt(const CliOptions& opt);
int cmd_eval(const CliOptions& opt);
int cmd_ablate(const CliOptions& opt);
int cmd_count(const CliOptions& opt);
int cmd_gen_dataset(const CliOptions& opt);

// Maps the error taxonomy onto the exit-code contract and prints the message
// to stderr; used by main() around every subcommand.
int run_guarded(int (*cmd)(const CliOptions&), const CliOptions& opt);

}  // namespace colora
