// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include "colora/harness.hpp"

using colora::CliOptions;

int main(int argc, char** argv) {
    CLI::App app{"colora: continual few-shot GAN adaptation with low-rank adapters"};
    app.require_subcommand(1);

    CliOptions opt;
    uint64_t seed = 0;
    int iterations = 0, rank = 0;
    double alpha_fc = 0, alpha_conv = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "run configuration file")->required();
        sub->add_option("--out", opt.out_dir, "output directory (must exist)");
        sub->add_option("--seed", seed, "override the training seed");
        sub->add_option("--iterations", iterations, "override the iteration count");
        sub->add_option("--rank", rank, "override the adapter rank");
        sub->add_option("--alpha-fc", alpha_fc, "explicit FC alpha (with --alpha-conv)");
        sub->add_option("--alpha-conv", alpha_conv, "explicit conv alpha (with --alpha-fc)");
    };
    auto collect_overrides = [&](CLI::App* sub) {
        if (sub->count("--seed")) opt.seed = seed;
        if (sub->count("--iterations")) opt.iterations = iterations;
        if (sub->count("--rank")) opt.rank = rank;
        if (sub->count("--alpha-fc")) opt.alpha_fc = alpha_fc;
        if (sub->count("--alpha-conv")) opt.alpha_conv = alpha_conv;
    };

    CLI::App* pretrain = app.add_subcommand("pretrain", "train the base generator on the source data");
    add_common(pretrain);

    CLI::App* adapt = app.add_subcommand("adapt", "few-shot adapt a task over a frozen base");
    add_common(adapt);
    adapt->add_option("--base", opt.base_path, "base checkpoint")->required();
    adapt->add_option("--task", opt.task_id, "task id from the config (default: first)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate every stored task of a registry");
    add_common(eval);
    eval->add_option("--registry", opt.registry_dir, "registry directory (default: <out>/registry)");
    eval->add_option("--base", opt.base_path, "base checkpoint (default: from the manifest)");

    CLI::App* ablate = app.add_subcommand("ablate", "grid runs over one hyperparameter axis");
    add_common(ablate);
    ablate->add_option("--base", opt.base_path, "base checkpoint")->required();
    ablate->add_option("--axis", opt.axis, "rank | alpha | activation | placement")->required();
    ablate->add_option("--task", opt.task_id, "task id from the config (default: first)");

    CLI::App* count = app.add_subcommand("count", "print the parameter-count report as JSON");
    add_common(count);

    CLI::App* gen = app.add_subcommand("gen-dataset", "write a dataset to PPM files");
    add_common(gen);
    gen->add_option("--task", opt.task_id, "task id or 'source' (default: source)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : colora::kExitConfig;
    }

    for (CLI::App* sub : {pretrain, adapt, eval, ablate, count, gen})
        if (sub->parsed()) collect_overrides(sub);

    if (pretrain->parsed()) return colora::run_guarded(colora::cmd_pretrain, opt);
    if (adapt->parsed()) return colora::run_guarded(colora::cmd_adapt, opt);
    if (eval->parsed()) return colora::run_guarded(colora::cmd_eval, opt);
    if (ablate->parsed()) return colora::run_guarded(colora::cmd_ablate, opt);
    if (count->parsed()) return colora::run_guarded(colora::cmd_count, opt);
    if (gen->parsed()) return colora::run_guarded(colora::cmd_gen_dataset, opt);
    return colora::kExitConfig;
}
