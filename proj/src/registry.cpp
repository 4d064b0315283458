// SPDX-License-Identifier: Apache-2.0
#include "colora/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

namespace colora {

namespace fs = std::filesystem;

namespace {

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw ValueError("cannot open " + path + " for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u16(uint16_t v) { uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)}; bytes(b, 2); }
    void u32(uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = uint8_t(u >> (8 * i));
        bytes(b, 8);
    }
    void close() {
        out_.close();
        if (!out_) throw ValueError("short write to " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw ValueError("cannot open " + path);
    }
    std::size_t offset() const { return offset_; }
    void bytes(void* p, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            throw ParseError(std::string("truncated checkpoint while reading ") + what + " in " + path_,
                             offset_);
        offset_ += n;
    }
    uint8_t u8(const char* what) {
        uint8_t v;
        bytes(&v, 1, what);
        return v;
    }
    uint16_t u16(const char* what) {
        uint8_t b[2];
        bytes(b, 2, what);
        return uint16_t(b[0]) | uint16_t(b[1]) << 8;
    }
    uint32_t u32(const char* what) {
        uint8_t b[4];
        bytes(b, 4, what);
        return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
    }
    double f64(const char* what) {
        uint8_t b[8];
        bytes(b, 8, what);
        uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= uint64_t(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

void write_entry(Writer& w, const std::string& name, const Tensor& t) {
    if (name.size() > 0xFFFF) throw ValueError("entry name too long");
    w.u16(static_cast<uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(0);  // dtype f32
    w.u8(static_cast<uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
    static_assert(sizeof(float) == 4);
    w.bytes(t.data().data(), t.numel() * sizeof(float));  // little-endian host
}

struct RawEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

RawEntry read_entry(Reader& r) {
    RawEntry e;
    uint16_t name_len = r.u16("entry name length");
    e.name.resize(name_len);
    if (name_len) r.bytes(e.name.data(), name_len, "entry name");
    uint8_t dtype = r.u8("entry dtype");
    if (dtype != 0) throw ParseError("unsupported dtype tag " + std::to_string(dtype), r.offset() - 1);
    uint8_t ndim = r.u8("entry ndim");
    if (ndim == 0 || ndim > 8) throw ParseError("implausible ndim " + std::to_string(ndim), r.offset() - 1);
    std::size_t numel = 1;
    for (int i = 0; i < ndim; ++i) {
        uint32_t ext = r.u32("entry extent");
        if (ext == 0 || ext > (1u << 24)) throw ParseError("implausible extent", r.offset() - 4);
        e.shape.push_back(static_cast<int>(ext));
        numel *= ext;
    }
    if (numel > (1ull << 28)) throw ParseError("entry too large", r.offset());
    e.data.resize(numel);
    r.bytes(e.data.data(), numel * sizeof(float), "entry data");
    return e;
}

struct Header {
    uint16_t version;
    Digest fingerprint;
    uint16_t rank;
    double alpha_fc, alpha_conv;
    uint32_t count;
};

void write_header(Writer& w, const Digest& fp, uint16_t rank, double afc, double aconv, uint32_t count) {
    w.bytes("CLRG", 4);
    w.u16(kCheckpointVersion);
    w.bytes(fp.data(), fp.size());
    w.u16(rank);
    w.f64(afc);
    w.f64(aconv);
    w.u32(count);
}

Header read_header(Reader& r, const ArchSpec& arch) {
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "CLRG", 4) != 0) throw ParseError("bad checkpoint magic", 0);
    Header h;
    h.version = r.u16("version");
    if (h.version == 0) throw ParseError("checkpoint version 0 is invalid", 4);
    if (h.version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(h.version), 4);
    r.bytes(h.fingerprint.data(), h.fingerprint.size(), "fingerprint");
    if (h.fingerprint != arch.fingerprint())
        throw ParseError("checkpoint fingerprint does not match the architecture", 6);
    h.rank = r.u16("rank");
    h.alpha_fc = r.f64("alpha_fc");
    h.alpha_conv = r.f64("alpha_conv");
    h.count = r.u32("entry count");
    return h;
}

// atomic publish: write to <path>.tmp then rename over <path>
template <typename Fn>
void write_file_atomic(const std::string& path, Fn writer_body) {
    std::string tmp = path + ".tmp";
    {
        Writer w(tmp);
        writer_body(w);
        w.close();
    }
    fs::rename(tmp, path);
}

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// Advisory exclusive lock held for the duration of a registry mutation.
class ScopedLock {
public:
    explicit ScopedLock(const fs::path& lock_path) {
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw RegistryError("cannot open lock file " + lock_path.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw RegistryError("cannot lock " + lock_path.string());
        }
    }
    ~ScopedLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    ScopedLock(const ScopedLock&) = delete;
    ScopedLock& operator=(const ScopedLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace

void save_adapter_checkpoint(const std::string& path, const AdapterSet& set) {
    uint32_t count = static_cast<uint32_t>(set.fc.size() * 2 + set.conv.size() * 3);
    write_file_atomic(path, [&](Writer& w) {
        write_header(w, set.arch_fingerprint, static_cast<uint16_t>(set.rank), set.alpha_fc,
                     set.alpha_conv, count);
        for (const auto& [name, ad] : set.fc) {
            write_entry(w, name + "/B", ad.B);
            write_entry(w, name + "/A", ad.A);
        }
        for (const auto& [name, ad] : set.conv) {
            write_entry(w, name + "/Bp", ad.B_prime);
            write_entry(w, name + "/M", ad.M_inst);
            write_entry(w, name + "/A", ad.A);
        }
    });
}

AdapterSet load_adapter_checkpoint(const std::string& path, const ArchSpec& arch) {
    arch.validate();
    Reader r(path);
    Header h = read_header(r, arch);
    if (h.rank < 1) throw ParseError("adapter checkpoint with rank 0", 38);
    if (h.alpha_fc <= 0 || h.alpha_conv <= 0) throw ParseError("non-positive alpha in header", 40);

    std::vector<RawEntry> entries;
    for (uint32_t i = 0; i < h.count; ++i) entries.push_back(read_entry(r));
    if (!r.at_eof()) throw ParseError("trailing bytes after last entry", r.offset());

    auto fc_ids = adaptable_fc_ids(arch);
    auto conv_ids = adaptable_conv_ids(arch);
    bool has_fc = false, has_conv = false;
    for (const RawEntry& e : entries) {
        if (e.name.rfind("mapping.", 0) == 0) has_fc = true;
        if (e.name.rfind("synth.", 0) == 0 || e.name.rfind("torgb.", 0) == 0) has_conv = true;
    }
    if (!has_fc && !has_conv) throw ParseError("checkpoint holds no adapter entries", 44);
    Placement placement = has_fc && has_conv ? Placement::Both
                          : has_fc           ? Placement::FcOnly
                                             : Placement::ConvOnly;

    AdapterSet set = init_adapter_set<float>(arch, h.rank, h.alpha_fc, h.alpha_conv, /*seed=*/0,
                                             Activation::Relu, placement);
    set.alpha_fc = h.alpha_fc;
    set.alpha_conv = h.alpha_conv;

    // strict canonical order: the writer's layout is the only accepted one
    std::size_t idx = 0;
    auto expect = [&](const std::string& name, Tensor& dst) {
        if (idx >= entries.size())
            throw ParseError("missing entry '" + name + "'", r.offset());
        RawEntry& e = entries[idx++];
        if (e.name != name)
            throw ParseError("unexpected entry '" + e.name + "', wanted '" + name + "'", r.offset());
        if (e.shape != dst.shape())
            throw ParseError("entry '" + name + "' has shape " + shape_str(e.shape) + ", wanted " +
                                 shape_str(dst.shape()),
                             r.offset());
        dst.data() = std::move(e.data);
    };
    for (auto& [name, ad] : set.fc) {
        expect(name + "/B", ad.B);
        expect(name + "/A", ad.A);
    }
    for (auto& [name, ad] : set.conv) {
        expect(name + "/Bp", ad.B_prime);
        expect(name + "/M", ad.M_inst);
        expect(name + "/A", ad.A);
    }
    if (idx != entries.size()) throw ParseError("extra entries in checkpoint", r.offset());
    for (auto& [name, ad] : set.fc) {
        detail::check_finite(ad.B.data(), "load_adapter_checkpoint");
        detail::check_finite(ad.A.data(), "load_adapter_checkpoint");
    }
    for (auto& [name, ad] : set.conv) {
        detail::check_finite(ad.B_prime.data(), "load_adapter_checkpoint");
        detail::check_finite(ad.M_inst.data(), "load_adapter_checkpoint");
        detail::check_finite(ad.A.data(), "load_adapter_checkpoint");
    }
    return set;
}

void save_base_checkpoint(const std::string& path, GeneratorWeights& weights, const ArchSpec& arch) {
    std::vector<std::pair<std::string, Tensor>> items;
    weights.for_each_tensor([&](const std::string& name, Tensor& t) { items.emplace_back("base/" + name, t); });
    write_file_atomic(path, [&](Writer& w) {
        write_header(w, arch.fingerprint(), /*rank=*/0, 0.0, 0.0, static_cast<uint32_t>(items.size()));
        for (auto& [name, t] : items) write_entry(w, name, t);
    });
}

GeneratorWeights load_base_checkpoint(const std::string& path, const ArchSpec& arch) {
    arch.validate();
    Reader r(path);
    Header h = read_header(r, arch);
    if (h.rank != 0) throw ParseError("not a base checkpoint (rank != 0)", 38);
    GeneratorWeights g = init_generator<float>(arch, 0);
    std::vector<RawEntry> entries;
    for (uint32_t i = 0; i < h.count; ++i) entries.push_back(read_entry(r));
    if (!r.at_eof()) throw ParseError("trailing bytes after last entry", r.offset());
    std::size_t idx = 0;
    g.for_each_tensor([&](const std::string& name, Tensor& t) {
        if (idx >= entries.size()) throw ParseError("missing base entry '" + name + "'", r.offset());
        RawEntry& e = entries[idx++];
        if (e.name != "base/" + name)
            throw ParseError("unexpected entry '" + e.name + "', wanted 'base/" + name + "'", r.offset());
        if (e.shape != t.shape())
            throw ParseError("base entry '" + name + "' shape mismatch", r.offset());
        t.data() = std::move(e.data);
    });
    if (idx != entries.size()) throw ParseError("extra entries in base checkpoint", r.offset());
    return g;
}

Registry Registry::create(const fs::path& dir, const Digest& base_fingerprint,
                          const std::string& base_checkpoint_rel) {
    fs::create_directories(dir / "checkpoints");
    Registry reg;
    reg.dir_ = dir;
    reg.base_fingerprint_ = base_fingerprint;
    reg.base_checkpoint_rel_ = base_checkpoint_rel;
    if (fs::exists(dir / "manifest.tsv")) throw RegistryError("registry already exists at " + dir.string());
    ScopedLock lock(dir / ".lock");
    reg.write_manifest();
    return reg;
}

Registry Registry::open(const fs::path& dir) {
    std::ifstream in(dir / "manifest.tsv");
    if (!in) throw RegistryError("no manifest at " + dir.string());
    Registry reg;
    reg.dir_ = dir;
    std::string line;
    int lineno = 0;
    bool have_fp = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream is(line.substr(1));
            std::string key;
            is >> key;
            if (key == "base_fingerprint") {
                std::string hex;
                is >> hex;
                reg.base_fingerprint_ = digest_from_hex(hex);
                have_fp = true;
            } else if (key == "base_checkpoint") {
                is >> reg.base_checkpoint_rel_;
            }
            continue;
        }
        std::istringstream is(line);
        TaskRecord rec;
        std::string rank_s, afc_s, aconv_s, lst_s, fid_s, div_s;
        if (!std::getline(is, rec.task_id, '\t') || !std::getline(is, rec.checkpoint_rel, '\t') ||
            !std::getline(is, rank_s, '\t') || !std::getline(is, afc_s, '\t') ||
            !std::getline(is, aconv_s, '\t') || !std::getline(is, lst_s, '\t') ||
            !std::getline(is, rec.created_utc, '\t') || !std::getline(is, fid_s, '\t') ||
            !std::getline(is, div_s))
            throw RegistryError("malformed manifest line " + std::to_string(lineno));
        rec.rank = std::stoi(rank_s);
        rec.alpha_fc = std::strtod(afc_s.c_str(), nullptr);
        rec.alpha_conv = std::strtod(aconv_s.c_str(), nullptr);
        rec.l_st = std::strtod(lst_s.c_str(), nullptr);
        rec.fid_at_train = std::strtod(fid_s.c_str(), nullptr);
        rec.diversity_at_train = std::strtod(div_s.c_str(), nullptr);
        reg.records_.push_back(std::move(rec));
    }
    if (!have_fp) throw RegistryError("manifest missing base_fingerprint header");
    return reg;
}

const TaskRecord* Registry::find(const std::string& task_id) const {
    for (const TaskRecord& r : records_)
        if (r.task_id == task_id) return &r;
    return nullptr;
}

void Registry::write_manifest() const {
    fs::path tmp = dir_ / "manifest.tsv.tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw RegistryError("cannot write manifest temp file");
        out << "# colora-registry v1\n";
        out << "# base_fingerprint " << digest_hex(base_fingerprint_) << "\n";
        out << "# base_checkpoint " << base_checkpoint_rel_ << "\n";
        out << "# columns: task_id\tcheckpoint\trank\talpha_fc\talpha_conv\tl_st\tcreated\tfid\tdiversity\n";
        for (const TaskRecord& r : records_) {
            out << r.task_id << '\t' << r.checkpoint_rel << '\t' << r.rank << '\t'
                << format_exact(r.alpha_fc) << '\t' << format_exact(r.alpha_conv) << '\t'
                << format_exact(r.l_st) << '\t' << r.created_utc << '\t' << format_exact(r.fid_at_train)
                << '\t' << format_exact(r.diversity_at_train) << '\n';
        }
        out.close();
        if (!out) throw RegistryError("short write to manifest temp file");
    }
    fs::rename(tmp, dir_ / "manifest.tsv");
}

void Registry::add_task(const AdapterSet& set, TaskRecord meta) {
    if (find(meta.task_id)) throw RegistryError("duplicate task id '" + meta.task_id + "'");
    if (meta.task_id.empty() || meta.task_id.find_first_of("\t\n/") != std::string::npos)
        throw RegistryError("task id must be non-empty without tabs or slashes");
    ScopedLock lock(dir_ / ".lock");
    meta.checkpoint_rel = "checkpoints/" + meta.task_id + ".ckpt";
    meta.rank = set.rank;
    meta.alpha_fc = set.alpha_fc;
    meta.alpha_conv = set.alpha_conv;
    if (meta.created_utc.empty()) meta.created_utc = now_utc();
    save_adapter_checkpoint((dir_ / meta.checkpoint_rel).string(), set);
    records_.push_back(std::move(meta));
    write_manifest();
}

AdapterSet Registry::load_task(const std::string& task_id, const ArchSpec& arch) const {
    const TaskRecord* rec = find(task_id);
    if (!rec) throw RegistryError("unknown task id '" + task_id + "'");
    std::string path = (dir_ / rec->checkpoint_rel).string();
    AdapterSet set = load_adapter_checkpoint(path, arch);
    // manifest cross-checks: rank and bit-exact alphas
    if (set.rank != rec->rank)
        throw RegistryError("checkpoint rank " + std::to_string(set.rank) + " disagrees with manifest " +
                            std::to_string(rec->rank) + " for task '" + task_id + "'");
    if (set.alpha_fc != rec->alpha_fc || set.alpha_conv != rec->alpha_conv)
        throw RegistryError("checkpoint alphas disagree with manifest for task '" + task_id + "'");
    return set;
}

}  // namespace colora
