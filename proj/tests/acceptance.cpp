// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code is the number of failed criteria.
//
// The heavy end-to-end criteria share one pretrained 8x8 base generator
// (configs/accept8.cfg); the analytical criteria run on the architectures
// they name. Everything executes in reference mode.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "colora/continual.hpp"
#include "colora/harness.hpp"
#include "colora/registry.hpp"
#include "oracles.hpp"

using namespace colora;
namespace fs = std::filesystem;

namespace {

struct Ctx {
    fs::path work;
    RunConfig cfg;  // accept8
    GeneratorWeights base;
    bool base_ready = false;

    void ensure_base() {
        if (base_ready) return;
        std::vector<Tensor> source = render_dataset(cfg.source);
        base = train_base(cfg.arch, source, cfg.train, cfg.pretrain_iterations);
        base.set_trainable(false);
        base_ready = true;
    }
};

std::string fmt(double v) { return format_sig6(v); }

// ---------------------------------------------------------------------------
// 1. adapter-math oracle equivalence
// ---------------------------------------------------------------------------
bool c1_adapter_oracles(Ctx&, std::string& detail) {
    RandomSource rng(20240105);
    double worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
        int r = rng.uniform_int(1, 4);
        int cin = rng.uniform_int(r, 16);
        int cout = rng.uniform_int(r, 16);
        int k = rng.uniform_int(0, 1) ? 1 : 3;
        double alpha = rng.uniform(0.2, 2.0);

        LLoraConvAdapterT<float> conv;
        conv.rank = r;
        conv.alpha = alpha;
        conv.c_out = cout;
        conv.c_in = cin;
        conv.k = k;
        conv.act = Activation::Relu;
        conv.B_prime = oracles::random_tensor<float>({cout, r}, rng, -1, 1);
        conv.M_inst = oracles::random_tensor<float>({r, r, k, k}, rng, -1, 1);
        conv.A = oracles::random_tensor<float>({r, cin}, rng, -1, 1);
        Tensor got = llora_conv_delta(conv);
        auto want = oracles::llora_delta_ref(conv.B_prime.data(), conv.M_inst.data(), conv.A.data(),
                                             cout, cin, r, k, alpha, 0);
        worst = std::max(worst, oracles::max_abs_diff(got.data(), want));

        LoraFcAdapterT<float> fc;
        fc.rank = r;
        fc.alpha = alpha;
        fc.d_out = cout;
        fc.d_in = cin;
        fc.B = oracles::random_tensor<float>({cout, r}, rng, -1, 1);
        fc.A = oracles::random_tensor<float>({r, cin}, rng, -1, 1);
        auto prod = oracles::matmul_ref(fc.B.data(), fc.A.data(), cout, r, cin);
        for (auto& v : prod) v = static_cast<float>(v * alpha / r);
        worst = std::max(worst, oracles::max_abs_diff(lora_fc_delta(fc).data(), prod));
    }
    detail = "120 randomized shapes, max abs diff " + fmt(worst);
    return worst < 1e-6;
}

// ---------------------------------------------------------------------------
// 2. zero-init identity
// ---------------------------------------------------------------------------
bool c2_zero_init_identity(Ctx& ctx, std::string& detail) {
    for (const ArchSpec& arch : {ctx.cfg.arch, ArchSpec::desk_default()}) {
        GeneratorWeights g = init_generator<float>(arch, 77);
        AdapterSet set = init_adapter_set<float>(arch, 1, 1.0, 1.0, 31);
        RandomSource rng(5);
        Tensor z = Tensor::randn({4, arch.z_dim}, rng, 1.0);
        Tensor w_plain = mapping_forward(z, g, arch);
        Tensor w_ad = mapping_forward(z, g, arch, &set);
        if (w_plain.data() != w_ad.data()) {
            detail = "mapping output differs at init";
            return false;
        }
        Tensor img_plain = synthesis_forward<float>(w_plain, g, arch, nullptr, 9);
        Tensor img_ad = synthesis_forward(w_plain, g, arch, &set, 9);
        if (img_plain.data() != img_ad.data()) {
            detail = "synthesis output differs at init";
            return false;
        }
    }
    detail = "mapping and synthesis bit-identical on 2 architectures";
    return true;
}

// ---------------------------------------------------------------------------
// 3. gradient integrity (64-bit finite differences)
// ---------------------------------------------------------------------------
bool c3_gradients(Ctx&, std::string& detail) {
    RandomSource rng(808);
    double worst = 0.0;
    auto track = [&](double e) { worst = std::max(worst, e); };

    {
        Tensor64 a = oracles::random_tensor<double>({4, 3}, rng);
        Tensor64 b = oracles::random_tensor<double>({3, 5}, rng);
        track(oracles::max_grad_rel_err([&](Tape<double>* t) { return sum(matmul(a, b, t), t); },
                                        {a, b}));
    }
    {
        Tensor64 x = oracles::random_tensor<double>({2, 3, 6, 6}, rng);
        Tensor64 w = oracles::random_tensor<double>({4, 3, 3, 3}, rng);
        track(oracles::max_grad_rel_err([&](Tape<double>* t) { return mean(conv2d(x, w, t), t); },
                                        {x, w}));
    }
    {
        Tensor64 x = oracles::random_tensor<double>({3, 5}, rng);
        Tensor64 w = oracles::random_tensor<double>({4, 5}, rng);
        Tensor64 b = oracles::random_tensor<double>({4}, rng);
        track(oracles::max_grad_rel_err([&](Tape<double>* t) { return mean(linear(x, w, b, t), t); },
                                        {x, w, b}));
    }
    {
        Tensor64 a = oracles::random_tensor<double>({12}, rng);
        Tensor64 b = oracles::random_tensor<double>({12}, rng);
        track(oracles::max_grad_rel_err(
            [&](Tape<double>* t) {
                Tensor64 u = mul(add(a, b, t), sub(a, b, t), t);
                Tensor64 v = scale(leaky_relu(relu(u, t), 0.2, t), 1.3, t);
                return mean(colora::tanh(v, t), t);
            },
            {a, b}));
    }
    {
        Tensor64 x = oracles::random_tensor<double>({2, 2, 4, 4}, rng);
        Tensor64 s = oracles::random_tensor<double>({2, 2}, rng, 0.3, 1.5);
        Tensor64 cb = oracles::random_tensor<double>({2}, rng);
        Tensor64 ns = oracles::random_tensor<double>({1}, rng);
        RandomSource nr(4);
        Tensor64 noise = Tensor64::randn({2, 1, 8, 8}, nr, 1.0);
        track(oracles::max_grad_rel_err(
            [&](Tape<double>* t) {
                Tensor64 u = upsample2x_nearest(x, t);
                u = scale_channels(u, s, t);
                u = add_noise(u, ns, noise, t);
                u = add_channel_bias(u, cb, t);
                u = avgpool2x(u, t);
                Tensor64 r = reshape(permute(u, {1, 0, 2, 3}, t), {2, 2 * 4 * 4}, t);
                return mean(mul(r, r, t), t);
            },
            {x, s, cb, ns}));
    }
    {
        Tensor64 w = oracles::random_tensor<double>({3, 2, 3, 3}, rng, 0.2, 1.5);
        Tensor64 s = oracles::random_tensor<double>({2, 2}, rng, 0.2, 1.5);
        track(oracles::max_grad_rel_err(
            [&](Tape<double>* t) { return mean(demod_scales(w, s, 1e-8, t), t); }, {w, s}));
    }
    {
        // the full composite: act(act(B'M) A), gradients for all three factors
        LLoraConvAdapterT<double> ad;
        ad.rank = 2;
        ad.alpha = 0.9;
        ad.c_out = 4;
        ad.c_in = 3;
        ad.k = 3;
        ad.act = Activation::Relu;
        ad.B_prime = oracles::random_tensor<double>({4, 2}, rng);
        ad.M_inst = oracles::random_tensor<double>({2, 2, 3, 3}, rng);
        ad.A = oracles::random_tensor<double>({2, 3}, rng);
        track(oracles::max_grad_rel_err(
            [&](Tape<double>* t) { return mean(llora_conv_delta(ad, t), t); },
            {ad.B_prime, ad.M_inst, ad.A}));
    }
    detail = "worst FD relative error " + fmt(worst);
    return worst < 1e-4;
}

// ---------------------------------------------------------------------------
// 4. parameter accounting on the 256-class architecture fixture
// ---------------------------------------------------------------------------
bool c4_param_accounting(Ctx&, std::string& detail) {
    RunConfig fixture =
        parse_config(std::string(COLORA_SOURCE_DIR) + "/configs/arch_stylegan2_256.cfg");
    ParamCountReport r1 = count_params(fixture.arch, 1);
    std::ostringstream os;
    os << "base=" << r1.base_params << " ratio(r=1)=" << fmt(100.0 * r1.ratio) << "%";
    bool ok = r1.base_params >= 21000000ull && r1.base_params <= 39000000ull;
    ok = ok && r1.ratio <= 0.0025;
    for (int r : {2, 4, 8}) {
        double ratio = double(count_params(fixture.arch, r).adapter_params) / double(r1.adapter_params);
        os << " count(" << r << ")/count(1)=" << fmt(ratio);
        ok = ok && ratio >= 0.95 * r && ratio <= 1.05 * r;
    }
    detail = os.str();
    return ok;
}

// ---------------------------------------------------------------------------
// 5. alpha heuristic argmax consistency with the pinned sweep fixture
// ---------------------------------------------------------------------------
bool c5_alpha_argmax(Ctx&, std::string& detail) {
    const std::vector<std::pair<double, int>> pinned = {
        {0.735, 4}, {0.253, 1}, {0.451, 4}, {0.309, 1}, {0.531, 4}};
    for (auto [l, m] : pinned) {
        if (static_cast<int>(default_multiplier(l)) != m) {
            detail = "multiplier for L=" + fmt(l) + " is not " + std::to_string(m);
            return false;
        }
    }
    std::ifstream in(std::string(COLORA_SOURCE_DIR) + "/data/alpha_reference.csv");
    if (!in) {
        detail = "missing alpha_reference.csv";
        return false;
    }
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("dataset", 0) == 0) continue;
        std::istringstream is(line);
        std::string name, cell;
        std::getline(is, name, ',');
        std::getline(is, cell, ',');
        double l = std::stod(cell);
        double best_fid = 1e30;
        int best_m = 0;
        for (int m = 1; m <= 5; ++m) {
            std::getline(is, cell, ',');
            double fid = std::stod(cell);
            if (fid < best_fid) {
                best_fid = fid;
                best_m = m;
            }
        }
        if (static_cast<int>(default_multiplier(l)) != best_m) {
            detail = name + ": picked m=" + std::to_string(int(default_multiplier(l))) +
                     ", best row is m=" + std::to_string(best_m);
            return false;
        }
        ++rows;
    }
    detail = "best-FID multiplier selected on all " + std::to_string(rows) + " pinned datasets";
    return rows == 5;
}

// ---------------------------------------------------------------------------
// 6. zero forgetting across a 3-task continual run
// ---------------------------------------------------------------------------
bool c6_zero_forgetting(Ctx& ctx, std::string& detail) {
    ctx.ensure_base();
    TrainConfig cfg = ctx.cfg.train;
    cfg.iterations = 300;  // forgetting is structural; criterion fixes the seed, not the length
    fs::path reg_dir = ctx.work / "registry_c6";
    ContinualReport report = run_continual(ctx.cfg.tasks, ctx.base, ctx.cfg.arch, cfg, ctx.cfg.rank,
                                           ctx.cfg.alpha, ctx.cfg.source, ctx.cfg.eval, reg_dir);
    const ContinualTaskResult& t1 = report.tasks[0];
    bool ok = t1.at_train.fid == t1.at_end.fid && t1.at_train.diversity == t1.at_end.diversity;
    detail = "task-1 proxy-FID " + fmt(t1.at_train.fid) + " after task 1 vs " + fmt(t1.at_end.fid) +
             " after task 3 (bit compare " + (ok ? "equal" : "DIFFERENT") + ")";
    return ok;
}

// ---------------------------------------------------------------------------
// 7. adaptation effectiveness: 3 targets x 3 seeds at 1500 iterations
// ---------------------------------------------------------------------------
bool c7_adaptation_effectiveness(Ctx& ctx, std::string& detail) {
    ctx.ensure_base();
    DatasetSpec probe = ctx.cfg.source;
    probe.samples = ctx.cfg.eval.probe_samples;
    std::vector<Tensor> source_probe = render_dataset(probe);

    std::ostringstream os;
    bool all_ok = true;
    for (const NamedDataset& task : ctx.cfg.tasks) {
        std::vector<Tensor> data = render_dataset(task.spec);
        double l_st = source_target_distance(source_probe, data);
        AlphaChoice ac = select_alphas(l_st, default_multiplier(l_st));
        double fid_before =
            proxy_fid(generate_samples(ctx.base, ctx.cfg.arch, nullptr, ctx.cfg.eval.fid_samples,
                                       ctx.cfg.eval.seed, ctx.cfg.eval.batch),
                      data);
        int improved = 0;
        for (uint64_t seed : {101ull, 202ull, 303ull}) {
            TrainConfig cfg = ctx.cfg.train;
            cfg.iterations = 1500;
            cfg.seed = seed;
            AdapterSet set = train_adaptation(ctx.base, ctx.cfg.arch, data, cfg, ac.alpha_fc,
                                              ac.alpha_conv, ctx.cfg.rank);
            double fid_after =
                proxy_fid(generate_samples(ctx.base, ctx.cfg.arch, &set, ctx.cfg.eval.fid_samples,
                                           ctx.cfg.eval.seed, ctx.cfg.eval.batch),
                          data);
            if (fid_after < fid_before) ++improved;
        }
        os << task.task_id << ": " << improved << "/3 improved vs base FID " << fmt(fid_before)
           << "; ";
        all_ok = all_ok && improved >= 2;
    }
    detail = os.str();
    return all_ok;
}

// ---------------------------------------------------------------------------
// 8. Frechet distance correctness
// ---------------------------------------------------------------------------
bool c8_frechet(Ctx&, std::string& detail) {
    RandomSource rng(4242);
    auto random_spd = [&](int d, double jitter) {
        GaussStats s;
        s.dim = d;
        s.n = d + 2;
        s.mean.resize(static_cast<std::size_t>(d));
        for (auto& m : s.mean) m = rng.uniform(-1, 1);
        std::vector<double> a(static_cast<std::size_t>(d) * d);
        for (auto& v : a) v = rng.uniform(-1, 1);
        s.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double acc = 0;
                for (int k = 0; k < d; ++k)
                    acc += a[static_cast<std::size_t>(i) * d + k] * a[static_cast<std::size_t>(j) * d + k];
                s.cov[static_cast<std::size_t>(i) * d + j] = acc / d + (i == j ? jitter : 0.0);
            }
        return s;
    };

    GaussStats same = random_spd(16, 0.1);
    double d_same = frechet_distance(same, same);
    if (!(std::fabs(d_same) < 1e-8)) {
        detail = "identical stats gave " + fmt(d_same);
        return false;
    }

    GaussStats a1{{0.0}, {1.0}, 1, 2}, b1{{1.0}, {4.0}, 1, 2};
    double d1 = frechet_distance(a1, b1);
    if (std::fabs(d1 - 2.0) > 1e-10) {
        detail = "1-d closed form gave " + fmt(d1) + ", wanted 2";
        return false;
    }

    double worst_rel = 0.0;
    for (int t = 0; t < 50; ++t) {
        int d = 4 + (t % 5) * 3;
        GaussStats a = random_spd(d, 0.2);
        GaussStats b = random_spd(d, 0.2);
        double got = frechet_distance(a, b);
        double mean_term = 0, tr = 0;
        for (int i = 0; i < d; ++i) {
            double dv = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
            mean_term += dv * dv;
            tr += a.cov[static_cast<std::size_t>(i) * d + i] + b.cov[static_cast<std::size_t>(i) * d + i];
        }
        double want = mean_term + tr - 2.0 * oracles::trace_sqrt_product_oracle(d, a.cov, b.cov);
        worst_rel = std::max(worst_rel, std::fabs(got - want) / std::max(std::fabs(want), 1e-12));
    }
    detail = "identity " + fmt(d_same) + ", 1-d exact, 50 SPD pairs worst rel err " + fmt(worst_rel);
    return worst_rel < 1e-6;
}

// ---------------------------------------------------------------------------
// 9. checkpoint durability
// ---------------------------------------------------------------------------
bool c9_checkpoints(Ctx& ctx, std::string& detail) {
    ArchSpec arch;
    arch.z_dim = 8;
    arch.w_dim = 8;
    arch.mapping_layers = 2;
    arch.base_resolution = 4;
    arch.base_channels = 6;
    arch.img_channels = 3;
    arch.synthesis = {{4, 6, 6, 3}, {8, 6, 4, 3}};
    arch.torgbs = {{8, 4}};

    fs::path dir = ctx.work / "c9";
    fs::create_directories(dir);
    std::string path = (dir / "roundtrip.ckpt").string();
    RandomSource rng(1717);
    for (int trial = 0; trial < 1000; ++trial) {
        int rank = 1 + trial % 3;
        AdapterSet set = init_adapter_set<float>(arch, rank, rng.uniform(0.1, 3.0),
                                                 rng.uniform(0.1, 3.0), 5000 + trial);
        for (auto& [name, ad] : set.fc)
            for (auto& v : ad.B.data()) v = static_cast<float>(rng.uniform(-2, 2));
        for (auto& [name, ad] : set.conv)
            for (auto& v : ad.B_prime.data()) v = static_cast<float>(rng.uniform(-2, 2));
        save_adapter_checkpoint(path, set);
        AdapterSet back = load_adapter_checkpoint(path, arch);
        for (std::size_t i = 0; i < set.fc.size(); ++i)
            if (set.fc[i].second.B.data() != back.fc[i].second.B.data() ||
                set.fc[i].second.A.data() != back.fc[i].second.A.data()) {
                detail = "roundtrip " + std::to_string(trial) + " differs (fc)";
                return false;
            }
        for (std::size_t i = 0; i < set.conv.size(); ++i) {
            const auto& x = set.conv[i].second;
            const auto& y = back.conv[i].second;
            if (x.B_prime.data() != y.B_prime.data() || x.M_inst.data() != y.M_inst.data() ||
                x.A.data() != y.A.data()) {
                detail = "roundtrip " + std::to_string(trial) + " differs (conv)";
                return false;
            }
        }
        if (back.rank != set.rank || back.alpha_fc != set.alpha_fc || back.alpha_conv != set.alpha_conv) {
            detail = "roundtrip " + std::to_string(trial) + " metadata differs";
            return false;
        }
    }

    // every single-byte corruption of the header must be detected through the
    // registry load path (the manifest cross-checks rank and alpha bits)
    GeneratorWeights g = init_generator<float>(arch, 3);
    Registry reg = Registry::create(dir / "reg", g.fingerprint(), "");
    AdapterSet set = init_adapter_set<float>(arch, 1, 1.5, 0.25, 99);
    TaskRecord rec;
    rec.task_id = "probe";
    reg.add_task(set, rec);
    fs::path ckpt = dir / "reg" / "checkpoints" / "probe.ckpt";
    std::ifstream in(ckpt, std::ios::binary);
    std::vector<char> pristine((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const std::size_t header_len = 4 + 2 + 32 + 2 + 8 + 8 + 4;
    int detected = 0;
    for (std::size_t off = 0; off < header_len; ++off) {
        auto corrupt = pristine;
        corrupt[off] = static_cast<char>(corrupt[off] ^ 0xFF);
        {
            std::ofstream out(ckpt, std::ios::binary);
            out.write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
        }
        try {
            reg.load_task("probe", arch);
        } catch (const std::exception&) {
            ++detected;
        }
    }
    {
        std::ofstream out(ckpt, std::ios::binary);
        out.write(pristine.data(), static_cast<std::streamsize>(pristine.size()));
    }
    detail = "1000 roundtrips bit-exact; " + std::to_string(detected) + "/" +
             std::to_string(header_len) + " header corruptions detected";
    return detected == static_cast<int>(header_len);
}

// ---------------------------------------------------------------------------
// 10. ablation harness grid shapes + placement dominance
// ---------------------------------------------------------------------------
int csv_data_rows(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return -1;
    std::string line;
    int rows = -1;  // don't count the header
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    return rows;
}

// placement CSV rows: placement,proxy_fid,diversity
bool read_placement_fids(const fs::path& p, double& fc, double& conv, double& both) {
    std::ifstream in(p);
    if (!in) return false;
    std::string line;
    std::getline(in, line);  // header
    int seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string label, fid_s;
        std::getline(is, label, ',');
        std::getline(is, fid_s, ',');
        double fid = std::stod(fid_s);
        if (label == "fc_only") fc = fid;
        else if (label == "conv_only") conv = fid;
        else if (label == "both") both = fid;
        else return false;
        ++seen;
    }
    return seen == 3;
}

bool c10_ablation_harness(Ctx& ctx, std::string& detail) {
    ctx.ensure_base();
    fs::path out_base = ctx.work / "c10";
    fs::create_directories(out_base);
    std::string base_ckpt = (out_base / "base.ckpt").string();
    save_base_checkpoint(base_ckpt, ctx.base, ctx.cfg.arch);

    const std::string config_path = std::string(COLORA_SOURCE_DIR) + "/configs/accept8.cfg";
    auto run_axis = [&](const std::string& axis, uint64_t seed, const fs::path& out) {
        fs::create_directories(out);
        CliOptions opt;
        opt.config_path = config_path;
        opt.out_dir = out.string();
        opt.base_path = base_ckpt;
        opt.axis = axis;
        opt.iterations = 300;
        opt.seed = seed;
        return cmd_ablate(opt);
    };

    std::ostringstream os;
    bool ok = true;
    const std::vector<std::pair<std::string, int>> axes = {
        {"rank", 4}, {"alpha", 5}, {"activation", 2}};
    for (const auto& [axis, want_rows] : axes) {
        fs::path out = out_base / axis;
        if (run_axis(axis, ctx.cfg.train.seed, out) != 0) {
            detail = "ablate --axis " + axis + " failed";
            return false;
        }
        int rows = csv_data_rows(out / "reports" / ("ablate_" + axis + ".csv"));
        os << axis << "=" << rows << " rows; ";
        ok = ok && rows == want_rows;
    }

    int dominated = 0;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        fs::path out = out_base / ("placement_s" + std::to_string(seed));
        if (run_axis("placement", seed, out) != 0) {
            detail = "ablate --axis placement failed";
            return false;
        }
        int rows = csv_data_rows(out / "reports" / "ablate_placement.csv");
        if (rows != 3) {
            detail = "placement grid has " + std::to_string(rows) + " rows";
            return false;
        }
        double fc = 0, conv = 0, both = 0;
        if (!read_placement_fids(out / "reports" / "ablate_placement.csv", fc, conv, both)) {
            detail = "could not parse placement report";
            return false;
        }
        if (both <= fc && both <= conv) ++dominated;
        os << "s" << seed << " fid(fc/conv/both)=" << fmt(fc) << "/" << fmt(conv) << "/" << fmt(both)
           << "; ";
    }
    os << "both dominates in " << dominated << "/3 seeds";
    detail = os.str();
    return ok && dominated >= 2;
}

}  // namespace

int main() {
    set_reference_mode(true);

    Ctx ctx;
    ctx.work = fs::temp_directory_path() /
               ("colora_accept_" +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    fs::create_directories(ctx.work);
    ctx.cfg = parse_config(std::string(COLORA_SOURCE_DIR) + "/configs/accept8.cfg");

    struct Criterion {
        int id;
        const char* name;
        bool (*fn)(Ctx&, std::string&);
    };
    const std::vector<Criterion> criteria = {
        {1, "adapter-math oracle equivalence", c1_adapter_oracles},
        {2, "zero-init identity", c2_zero_init_identity},
        {3, "gradient integrity (64-bit FD)", c3_gradients},
        {4, "parameter accounting vs 256-class arch", c4_param_accounting},
        {5, "alpha heuristic argmax consistency", c5_alpha_argmax},
        {6, "zero forgetting over 3 sequential tasks", c6_zero_forgetting},
        {7, "adaptation beats the unadapted base", c7_adaptation_effectiveness},
        {8, "Frechet distance correctness", c8_frechet},
        {9, "checkpoint durability", c9_checkpoints},
        {10, "ablation harness grids", c10_ablation_harness},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(ctx, detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%2d] %s  %s  (%.1f s)  %s\n", c.id, ok ? "PASS" : "FAIL", c.name, secs,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    fs::remove_all(ctx.work);
    if (failures == 0) std::printf("all 10 acceptance criteria passed\n");
    return failures;
}
