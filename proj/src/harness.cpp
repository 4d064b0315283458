// SPDX-License-Identifier: Apache-2.0
#include "colora/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "colora/registry.hpp"

namespace colora {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s, char sep, int expect, const std::string& what) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, sep)) out.push_back(std::stoi(trim(tok)));
    if (expect > 0 && static_cast<int>(out.size()) != expect)
        throw ConfigError(what + ": expected " + std::to_string(expect) + " fields in '" + s + "'");
    return out;
}

double to_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a number: '" + s + "'");
    }
}

int to_int(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not an integer: '" + s + "'");
    }
}

uint64_t to_u64(const std::string& s, const std::string& key) {
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not an integer: '" + s + "'");
    }
}

bool to_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("key '" + key + "': not a boolean: '" + s + "'");
}

}  // namespace

RunConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    RunConfig cfg;
    cfg.arch.synthesis.clear();
    cfg.arch.torgbs.clear();

    std::string section;
    std::string line;
    int lineno = 0;
    DatasetSpec* current_dataset = nullptr;
    auto fail = [&](const std::string& msg) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            current_dataset = nullptr;
            if (section == "dataset.source") {
                current_dataset = &cfg.source;
            } else if (section.rfind("task.", 0) == 0) {
                std::string id = section.substr(5);
                if (id.empty()) fail("task section needs a name");
                for (const NamedDataset& t : cfg.tasks)
                    if (t.task_id == id) fail("duplicate task '" + id + "'");
                cfg.tasks.push_back({id, DatasetSpec{}});
                current_dataset = &cfg.tasks.back().spec;
            } else if (section != "arch" && section != "train" && section != "adapters" &&
                       section != "eval") {
                fail("unknown section [" + section + "]");
            }
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) fail("empty key or value");

        if (section == "arch") {
            if (key == "z_dim") cfg.arch.z_dim = to_int(val, key);
            else if (key == "w_dim") cfg.arch.w_dim = to_int(val, key);
            else if (key == "mapping_layers") cfg.arch.mapping_layers = to_int(val, key);
            else if (key == "base_resolution") cfg.arch.base_resolution = to_int(val, key);
            else if (key == "base_channels") cfg.arch.base_channels = to_int(val, key);
            else if (key == "img_channels") cfg.arch.img_channels = to_int(val, key);
            else if (key == "demodulate") cfg.arch.demodulate = to_bool(val, key);
            else if (key == "conv") {
                auto f = parse_int_list(val, ':', 4, "conv");
                cfg.arch.synthesis.push_back({f[0], f[1], f[2], f[3]});
            } else if (key == "torgb") {
                auto f = parse_int_list(val, ':', 2, "torgb");
                cfg.arch.torgbs.push_back({f[0], f[1]});
            } else fail("unknown arch key '" + key + "'");
        } else if (section == "train") {
            if (key == "learning_rate") cfg.train.learning_rate = to_double(val, key);
            else if (key == "batch_size") cfg.train.batch_size = to_int(val, key);
            else if (key == "iterations") cfg.train.iterations = to_int(val, key);
            else if (key == "pretrain_iterations") cfg.pretrain_iterations = to_int(val, key);
            else if (key == "n_critic") cfg.train.n_critic = to_int(val, key);
            else if (key == "clip") cfg.train.clip_c = to_double(val, key);
            else if (key == "adam_beta1") cfg.train.adam_beta1 = to_double(val, key);
            else if (key == "adam_beta2") cfg.train.adam_beta2 = to_double(val, key);
            else if (key == "adam_eps") cfg.train.adam_eps = to_double(val, key);
            else if (key == "seed") cfg.train.seed = to_u64(val, key);
            else if (key == "log_every") cfg.train.log_every = to_int(val, key);
            else fail("unknown train key '" + key + "'");
        } else if (section == "adapters") {
            if (key == "rank") cfg.rank = to_int(val, key);
            else if (key == "alpha_policy") {
                if (val == "auto") cfg.alpha.automatic = true;
                else if (val == "explicit") cfg.alpha.automatic = false;
                else fail("alpha_policy must be auto or explicit");
            } else if (key == "alpha_fc") cfg.alpha.alpha_fc = to_double(val, key);
            else if (key == "alpha_conv") cfg.alpha.alpha_conv = to_double(val, key);
            else if (key == "activation") cfg.activation = activation_from_name(val);
            else fail("unknown adapters key '" + key + "'");
        } else if (section == "eval") {
            if (key == "fid_samples") cfg.eval.fid_samples = to_int(val, key);
            else if (key == "diversity_samples") cfg.eval.diversity_samples = to_int(val, key);
            else if (key == "probe_samples") cfg.eval.probe_samples = to_int(val, key);
            else if (key == "seed") cfg.eval.seed = to_u64(val, key);
            else if (key == "batch") cfg.eval.batch = to_int(val, key);
            else fail("unknown eval key '" + key + "'");
        } else if (current_dataset != nullptr) {
            if (key == "kind") current_dataset->kind = dataset_kind_from_name(val);
            else if (key == "strength") current_dataset->strength = to_double(val, key);
            else if (key == "samples" || key == "shots") current_dataset->samples = to_int(val, key);
            else if (key == "seed") current_dataset->seed = to_u64(val, key);
            else if (key == "resolution") current_dataset->resolution = to_int(val, key);
            else fail("unknown dataset key '" + key + "'");
        } else {
            fail("key outside any section");
        }
    }

    cfg.arch.validate();
    int top = cfg.arch.top_resolution();
    if (cfg.source.resolution == 0) cfg.source.resolution = top;
    for (NamedDataset& t : cfg.tasks)
        if (t.spec.resolution == 0) t.spec.resolution = top;
    if (!cfg.alpha.automatic && (cfg.alpha.alpha_fc <= 0 || cfg.alpha.alpha_conv <= 0))
        throw ConfigError("explicit alpha policy requires positive alpha_fc and alpha_conv");
    return cfg;
}

namespace {

RunConfig load_with_overrides(const CliOptions& opt) {
    if (opt.config_path.empty()) throw ConfigError("--config is required");
    RunConfig cfg = parse_config(opt.config_path);
    if (opt.seed) cfg.train.seed = *opt.seed;
    if (opt.iterations) cfg.train.iterations = *opt.iterations;
    if (opt.rank) cfg.rank = *opt.rank;
    if (opt.alpha_fc || opt.alpha_conv) {
        if (!(opt.alpha_fc && opt.alpha_conv))
            throw ConfigError("--alpha-fc and --alpha-conv must be given together");
        cfg.alpha.automatic = false;
        cfg.alpha.alpha_fc = *opt.alpha_fc;
        cfg.alpha.alpha_conv = *opt.alpha_conv;
    }
    return cfg;
}

fs::path require_out_dir(const CliOptions& opt) {
    if (opt.out_dir.empty()) throw ConfigError("--out is required");
    fs::path out(opt.out_dir);
    if (!fs::is_directory(out))
        throw ConfigError("output directory does not exist: " + out.string());
    return out;
}

std::vector<Tensor> probe_samples(const RunConfig& cfg) {
    DatasetSpec probe = cfg.source;
    probe.samples = cfg.eval.probe_samples;
    return render_dataset(probe);
}

const NamedDataset& pick_task(const RunConfig& cfg, const std::string& id) {
    if (cfg.tasks.empty()) throw ConfigError("config defines no tasks");
    if (id.empty()) return cfg.tasks.front();
    for (const NamedDataset& t : cfg.tasks)
        if (t.task_id == id) return t;
    throw ConfigError("task '" + id + "' is not defined in the config");
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write " + path.string());
    out << body;
}

struct AblationRow {
    std::string label;
    std::map<std::string, double> values;  // insertion order not needed; columns fixed per axis
};

}  // namespace

int cmd_pretrain(const CliOptions& opt) {
    RunConfig cfg = load_with_overrides(opt);
    fs::path out = require_out_dir(opt);
    int iters = opt.iterations ? *opt.iterations : cfg.pretrain_iterations;
    std::vector<Tensor> source = render_dataset(cfg.source);
    TrainLog log;
    GeneratorWeights base = train_base(cfg.arch, source, cfg.train, iters, &log);
    fs::create_directories(out / "logs");
    log.write_csv((out / "logs" / "pretrain.csv").string());
    fs::path ckpt = out / "base.ckpt";
    save_base_checkpoint(ckpt.string(), base, cfg.arch);
    std::cout << "base checkpoint: " << ckpt.string() << "\n"
              << "base fingerprint: " << digest_hex(base.fingerprint()) << "\n"
              << "iterations: " << iters << "\n";
    return kExitOk;
}

int cmd_adapt(const CliOptions& opt) {
    RunConfig cfg = load_with_overrides(opt);
    fs::path out = require_out_dir(opt);
    if (opt.base_path.empty()) throw ConfigError("--base is required");
    if (!fs::exists(opt.base_path)) throw ConfigError("base checkpoint not found: " + opt.base_path);
    GeneratorWeights base = load_base_checkpoint(opt.base_path, cfg.arch);
    const NamedDataset& task = pick_task(cfg, opt.task_id);

    fs::path reg_dir = out / "registry";
    Registry reg = fs::exists(reg_dir / "manifest.tsv")
                       ? Registry::open(reg_dir)
                       : Registry::create(reg_dir, base.fingerprint(),
                                          fs::relative(opt.base_path, reg_dir).string());
    if (reg.find(task.task_id)) throw RegistryError("duplicate task id '" + task.task_id + "'");
    if (reg.base_fingerprint() != base.fingerprint())
        throw RegistryError("registry was created against a different base (fingerprint mismatch)");

    std::vector<Tensor> data = render_dataset(task.spec);
    double l_st = source_target_distance(probe_samples(cfg), data);
    double alpha_fc, alpha_conv;
    if (cfg.alpha.automatic) {
        AlphaChoice ac = select_alphas(l_st, default_multiplier(l_st));
        alpha_fc = ac.alpha_fc;
        alpha_conv = ac.alpha_conv;
    } else {
        alpha_fc = cfg.alpha.alpha_fc;
        alpha_conv = cfg.alpha.alpha_conv;
    }

    TrainLog log;
    AdapterSet set = train_adaptation(base, cfg.arch, data, cfg.train, alpha_fc, alpha_conv, cfg.rank,
                                      cfg.activation, Placement::Both, &log);
    fs::create_directories(out / "logs");
    log.write_csv((out / "logs" / ("adapt_" + task.task_id + ".csv")).string());
    TaskMetrics m = evaluate_generator(base, cfg.arch, &set, data, cfg.eval);

    TaskRecord rec;
    rec.task_id = task.task_id;
    rec.l_st = l_st;
    rec.fid_at_train = m.fid;
    rec.diversity_at_train = m.diversity;
    reg.add_task(set, rec);

    std::cout << "task_id,l_st,alpha_fc,alpha_conv,params_trained,proxy_fid,diversity\n"
              << task.task_id << ',' << format_sig6(l_st) << ',' << format_sig6(alpha_fc) << ','
              << format_sig6(alpha_conv) << ',' << set.param_count() << ',' << format_sig6(m.fid)
              << ',' << format_sig6(m.diversity) << "\n";
    return kExitOk;
}

int cmd_eval(const CliOptions& opt) {
    RunConfig cfg = load_with_overrides(opt);
    fs::path out = require_out_dir(opt);
    fs::path reg_dir = opt.registry_dir.empty() ? out / "registry" : fs::path(opt.registry_dir);
    if (!fs::exists(reg_dir / "manifest.tsv")) throw ConfigError("no registry at " + reg_dir.string());
    Registry reg = Registry::open(reg_dir);
    if (reg.records().empty()) throw RegistryError("registry is empty");
    if (opt.seed) cfg.eval.seed = *opt.seed;

    std::string base_path = opt.base_path;
    if (base_path.empty()) base_path = (reg_dir / reg.base_checkpoint_rel()).lexically_normal().string();
    if (!fs::exists(base_path)) throw ConfigError("base checkpoint not found: " + base_path);
    GeneratorWeights base = load_base_checkpoint(base_path, cfg.arch);
    if (base.fingerprint() != reg.base_fingerprint())
        throw RegistryError("base checkpoint does not match the registry fingerprint");

    std::vector<std::pair<std::string, TaskMetrics>> rows;
    for (const TaskRecord& rec : reg.records()) {
        const NamedDataset& task = pick_task(cfg, rec.task_id);
        AdapterSet set = reg.load_task(rec.task_id, cfg.arch);
        rows.emplace_back(rec.task_id,
                          evaluate_generator(base, cfg.arch, &set, render_dataset(task.spec), cfg.eval));
    }

    std::string label = "r" + std::to_string(cfg.rank) + (cfg.alpha.automatic ? "_auto" : "_explicit");
    std::ostringstream csv;
    csv << "config";
    for (auto& [id, m] : rows) csv << ',' << id << "_fid," << id << "_diversity";
    csv << ",avg_fid,avg_diversity\n" << label;
    double fid_acc = 0, div_acc = 0;
    json jtasks = json::array();
    for (auto& [id, m] : rows) {
        csv << ',' << format_sig6(m.fid) << ',' << format_sig6(m.diversity);
        fid_acc += m.fid;
        div_acc += m.diversity;
        jtasks.push_back({{"task", id}, {"proxy_fid", m.fid}, {"diversity", m.diversity}});
    }
    double n = double(rows.size());
    csv << ',' << format_sig6(fid_acc / n) << ',' << format_sig6(div_acc / n) << "\n";

    fs::create_directories(out / "reports");
    write_text(out / "reports" / "eval.csv", csv.str());
    json j{{"config", label},
           {"eval_seed", cfg.eval.seed},
           {"tasks", jtasks},
           {"average", {{"proxy_fid", fid_acc / n}, {"diversity", div_acc / n}}}};
    write_text(out / "reports" / "eval.json", j.dump(2) + "\n");
    std::cout << csv.str();
    return kExitOk;
}

int cmd_count(const CliOptions& opt) {
    RunConfig cfg = load_with_overrides(opt);
    ParamCountReport rep = count_params(cfg.arch, cfg.rank);
    json layers = json::array();
    for (const LayerParamCount& l : rep.per_layer)
        layers.push_back({{"layer", l.name}, {"base", l.base}, {"adapter", l.adapter}});
    json j{{"rank", cfg.rank},
           {"base_params", rep.base_params},
           {"adapter_params", rep.adapter_params},
           {"ratio", rep.ratio},
           {"per_layer", layers}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_gen_dataset(const CliOptions& opt) {
    RunConfig cfg = load_with_overrides(opt);
    fs::path out = require_out_dir(opt);
    std::string which = opt.task_id.empty() ? "source" : opt.task_id;
    DatasetSpec spec;
    if (which == "source") {
        spec = cfg.source;
    } else {
        spec = pick_task(cfg, which).spec;
    }
    fs::path dir = out / "datasets" / which;
    fs::create_directories(dir);
    std::vector<Tensor> imgs = render_dataset(spec);
    char name[32];
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        std::snprintf(name, sizeof(name), "%05zu.ppm", i);
        write_pnm((dir / name).string(), imgs[i]);
    }
    std::cout << "wrote " << imgs.size() << " images to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_ablate(const CliOptions& opt) {
    RunConfig cfg = load_with_overrides(opt);
    fs::path out = require_out_dir(opt);
    if (opt.base_path.empty()) throw ConfigError("--base is required");
    if (!fs::exists(opt.base_path)) throw ConfigError("base checkpoint not found: " + opt.base_path);
    const std::string axis = opt.axis;
    if (axis != "rank" && axis != "alpha" && axis != "activation" && axis != "placement")
        throw ConfigError("--axis must be one of rank, alpha, activation, placement");
    GeneratorWeights base = load_base_checkpoint(opt.base_path, cfg.arch);
    const NamedDataset& task = pick_task(cfg, opt.task_id);
    std::vector<Tensor> data = render_dataset(task.spec);
    double l_st = source_target_distance(probe_samples(cfg), data);
    AlphaChoice auto_alpha = select_alphas(l_st, default_multiplier(l_st));

    struct Cell {
        std::string label;
        int rank;
        double alpha_fc, alpha_conv;
        Activation act;
        Placement placement;
        std::uint64_t params;
    };
    std::vector<Cell> cells;
    if (axis == "rank") {
        for (int r : {1, 2, 4, 8})
            cells.push_back({std::to_string(r), r, auto_alpha.alpha_fc, auto_alpha.alpha_conv,
                             cfg.activation, Placement::Both, 0});
    } else if (axis == "alpha") {
        for (int m : {1, 2, 3, 4, 5}) {
            AlphaChoice ac = select_alphas(l_st, m);
            cells.push_back({std::to_string(m), cfg.rank, ac.alpha_fc, ac.alpha_conv, cfg.activation,
                             Placement::Both, 0});
        }
    } else if (axis == "activation") {
        for (Activation a : {Activation::None, Activation::Relu})
            cells.push_back({activation_name(a), cfg.rank, auto_alpha.alpha_fc, auto_alpha.alpha_conv,
                             a, Placement::Both, 0});
    } else {
        for (Placement p : {Placement::FcOnly, Placement::ConvOnly, Placement::Both})
            cells.push_back({placement_name(p), cfg.rank, auto_alpha.alpha_fc, auto_alpha.alpha_conv,
                             cfg.activation, p, 0});
    }

    std::ostringstream csv;
    if (axis == "rank") csv << "rank,params,proxy_fid,diversity\n";
    else if (axis == "alpha") csv << "multiplier,alpha_fc,alpha_conv,proxy_fid,diversity\n";
    else if (axis == "activation") csv << "activation,proxy_fid,diversity\n";
    else csv << "placement,proxy_fid,diversity\n";

    json jrows = json::array();
    for (Cell& cell : cells) {
        AdapterSet set = train_adaptation(base, cfg.arch, data, cfg.train, cell.alpha_fc,
                                          cell.alpha_conv, cell.rank, cell.act, cell.placement);
        cell.params = set.param_count();
        TaskMetrics m = evaluate_generator(base, cfg.arch, &set, data, cfg.eval);
        json row{{"cell", cell.label}, {"proxy_fid", m.fid}, {"diversity", m.diversity}};
        if (axis == "rank") {
            csv << cell.label << ',' << cell.params << ',' << format_sig6(m.fid) << ','
                << format_sig6(m.diversity) << "\n";
            row["params"] = cell.params;
        } else if (axis == "alpha") {
            csv << cell.label << ',' << format_sig6(cell.alpha_fc) << ',' << format_sig6(cell.alpha_conv)
                << ',' << format_sig6(m.fid) << ',' << format_sig6(m.diversity) << "\n";
            row["alpha_fc"] = cell.alpha_fc;
            row["alpha_conv"] = cell.alpha_conv;
        } else {
            csv << cell.label << ',' << format_sig6(m.fid) << ',' << format_sig6(m.diversity) << "\n";
        }
        jrows.push_back(std::move(row));
    }

    fs::create_directories(out / "reports");
    write_text(out / "reports" / ("ablate_" + axis + ".csv"), csv.str());
    json j{{"axis", axis},       {"task", task.task_id}, {"l_st", l_st},
           {"seed", cfg.train.seed}, {"iterations", cfg.train.iterations}, {"rows", jrows}};
    write_text(out / "reports" / ("ablate_" + axis + ".json"), j.dump(2) + "\n");
    std::cout << csv.str();
    return kExitOk;
}

int run_guarded(int (*cmd)(const CliOptions&), const CliOptions& opt) {
    try {
        return cmd(opt);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const ValueError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << e.what() << "\n";
        return kExitNumerical;
    } catch (const RegistryError& e) {
        std::cerr << e.what() << "\n";
        return kExitRegistry;
    }
}

}  // namespace colora
