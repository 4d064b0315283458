// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "colora/registry.hpp"
#include "oracles.hpp"

using namespace colora;
namespace fs = std::filesystem;

namespace {

ArchSpec reg_arch() {
    ArchSpec a;
    a.z_dim = 8;
    a.w_dim = 8;
    a.mapping_layers = 2;
    a.base_resolution = 4;
    a.base_channels = 6;
    a.img_channels = 3;
    a.synthesis = {{4, 6, 6, 3}, {8, 6, 4, 3}};
    a.torgbs = {{8, 4}};
    return a;
}

AdapterSet random_set(const ArchSpec& arch, uint64_t seed, int rank = 1) {
    AdapterSet set = init_adapter_set<float>(arch, rank, 1.25, 0.75, seed);
    RandomSource rng(derive_seed(seed, 99));
    for (auto& [name, ad] : set.fc)
        for (auto& v : ad.B.data()) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& [name, ad] : set.conv)
        for (auto& v : ad.B_prime.data()) v = static_cast<float>(rng.uniform(-1, 1));
    return set;
}

bool sets_equal(const AdapterSet& a, const AdapterSet& b) {
    if (a.fc.size() != b.fc.size() || a.conv.size() != b.conv.size()) return false;
    for (std::size_t i = 0; i < a.fc.size(); ++i)
        if (a.fc[i].first != b.fc[i].first || a.fc[i].second.B.data() != b.fc[i].second.B.data() ||
            a.fc[i].second.A.data() != b.fc[i].second.A.data())
            return false;
    for (std::size_t i = 0; i < a.conv.size(); ++i) {
        const auto& x = a.conv[i].second;
        const auto& y = b.conv[i].second;
        if (a.conv[i].first != b.conv[i].first || x.B_prime.data() != y.B_prime.data() ||
            x.M_inst.data() != y.M_inst.data() || x.A.data() != y.A.data())
            return false;
    }
    return a.rank == b.rank && a.alpha_fc == b.alpha_fc && a.alpha_conv == b.alpha_conv;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("colora_test_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    for (int trial = 0; trial < 8; ++trial) {
        AdapterSet set = random_set(arch, 100 + static_cast<uint64_t>(trial), trial % 2 ? 2 : 1);
        std::string p = (tmp.path / "a.ckpt").string();
        save_adapter_checkpoint(p, set);
        AdapterSet back = load_adapter_checkpoint(p, arch);
        CHECK(sets_equal(set, back));
    }
}

TEST_CASE("checkpoint rejects mismatched architectures and bad versions") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    AdapterSet set = random_set(arch, 5);
    std::string p = (tmp.path / "a.ckpt").string();
    save_adapter_checkpoint(p, set);

    SUBCASE("fingerprint mismatch when arch differs") {
        ArchSpec other = reg_arch();
        other.z_dim = 16;
        CHECK_THROWS_AS(load_adapter_checkpoint(p, other), ParseError);
    }
    SUBCASE("version 0 rejected, corrupted magic names the offset") {
        auto bytes = slurp(p);
        auto v0 = bytes;
        v0[4] = 0;
        v0[5] = 0;
        spit(p, v0);
        CHECK_THROWS_WITH_AS(load_adapter_checkpoint(p, arch),
                             doctest::Contains("version 0"), ParseError);
        auto bad_magic = bytes;
        bad_magic[0] = 'X';
        spit(p, bad_magic);
        try {
            load_adapter_checkpoint(p, arch);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
        }
    }
    SUBCASE("truncation is detected") {
        auto bytes = slurp(p);
        bytes.resize(bytes.size() - 7);
        spit(p, bytes);
        CHECK_THROWS_AS(load_adapter_checkpoint(p, arch), ParseError);
    }
    SUBCASE("trailing garbage is detected") {
        auto bytes = slurp(p);
        bytes.push_back('z');
        spit(p, bytes);
        CHECK_THROWS_AS(load_adapter_checkpoint(p, arch), ParseError);
    }
}

TEST_CASE("base checkpoint roundtrip") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    GeneratorWeights g = init_generator<float>(arch, 77);
    std::string p = (tmp.path / "base.ckpt").string();
    save_base_checkpoint(p, g, arch);
    GeneratorWeights back = load_base_checkpoint(p, arch);
    CHECK(back.fingerprint() == g.fingerprint());
    CHECK_THROWS_AS(load_adapter_checkpoint(p, arch), ParseError);  // rank 0 is not an adapter ckpt
}

TEST_CASE("registry: add, reload, duplicate rejection, isolation") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    GeneratorWeights g = init_generator<float>(arch, 1);
    Registry reg = Registry::create(tmp.path / "reg", g.fingerprint(), "../base.ckpt");

    AdapterSet s1 = random_set(arch, 11);
    TaskRecord r1;
    r1.task_id = "t1";
    r1.l_st = 0.31;
    reg.add_task(s1, r1);

    AdapterSet s2 = random_set(arch, 12);
    TaskRecord r2;
    r2.task_id = "t2";
    reg.add_task(s2, r2);

    SUBCASE("duplicate id fails and the manifest stays intact") {
        auto before = slurp(tmp.path / "reg" / "manifest.tsv");
        CHECK_THROWS_AS(reg.add_task(s2, r2), RegistryError);
        CHECK(slurp(tmp.path / "reg" / "manifest.tsv") == before);
    }
    SUBCASE("roundtrip through open() preserves records and checkpoints") {
        Registry re = Registry::open(tmp.path / "reg");
        CHECK(re.records().size() == 2);
        CHECK(re.base_fingerprint() == g.fingerprint());
        AdapterSet back = re.load_task("t1", arch);
        CHECK(sets_equal(back, s1));
        CHECK(re.find("t1")->l_st == doctest::Approx(0.31));
        CHECK_THROWS_AS(re.load_task("nope", arch), RegistryError);
    }
    SUBCASE("training a later task never mutates an earlier checkpoint") {
        auto t1_bytes = slurp(tmp.path / "reg" / "checkpoints" / "t1.ckpt");
        AdapterSet s3 = random_set(arch, 13);
        TaskRecord r3;
        r3.task_id = "t3";
        reg.add_task(s3, r3);
        CHECK(slurp(tmp.path / "reg" / "checkpoints" / "t1.ckpt") == t1_bytes);
    }
}

TEST_CASE("registry: manifest cross-check catches alpha and rank tampering") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    GeneratorWeights g = init_generator<float>(arch, 1);
    Registry reg = Registry::create(tmp.path / "reg", g.fingerprint(), "");
    AdapterSet s1 = random_set(arch, 21);
    TaskRecord r1;
    r1.task_id = "t1";
    reg.add_task(s1, r1);

    fs::path ckpt = tmp.path / "reg" / "checkpoints" / "t1.ckpt";
    auto bytes = slurp(ckpt);
    // alpha_fc occupies bytes [40, 48); flip one byte in its mantissa
    auto tampered = bytes;
    tampered[41] ^= 0x01;
    spit(ckpt, tampered);
    Registry re = Registry::open(tmp.path / "reg");
    CHECK_THROWS_AS(re.load_task("t1", arch), RegistryError);
}

TEST_CASE("registry: every single-byte header corruption is detected via the registry path") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    GeneratorWeights g = init_generator<float>(arch, 1);
    Registry reg = Registry::create(tmp.path / "reg", g.fingerprint(), "");
    AdapterSet s1 = random_set(arch, 31);
    TaskRecord r1;
    r1.task_id = "t1";
    reg.add_task(s1, r1);

    fs::path ckpt = tmp.path / "reg" / "checkpoints" / "t1.ckpt";
    auto pristine = slurp(ckpt);
    Registry re = Registry::open(tmp.path / "reg");
    const std::size_t header_len = 4 + 2 + 32 + 2 + 8 + 8 + 4;  // magic..count
    int detected = 0;
    for (std::size_t off = 0; off < header_len; ++off) {
        auto corrupt = pristine;
        corrupt[off] ^= 0xFF;
        spit(ckpt, corrupt);
        try {
            re.load_task("t1", arch);
        } catch (const std::exception&) {
            ++detected;
        }
    }
    spit(ckpt, pristine);
    CHECK(detected == static_cast<int>(header_len));
}

TEST_CASE("registry: crash between temp write and rename leaves old state readable") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    GeneratorWeights g = init_generator<float>(arch, 1);
    Registry reg = Registry::create(tmp.path / "reg", g.fingerprint(), "");
    AdapterSet s1 = random_set(arch, 41);
    TaskRecord r1;
    r1.task_id = "t1";
    reg.add_task(s1, r1);

    // a stray temp file from an interrupted update must not confuse open()
    std::ofstream(tmp.path / "reg" / "manifest.tsv.tmp") << "# colora-registry v1\ngarbage";
    Registry re = Registry::open(tmp.path / "reg");
    CHECK(re.records().size() == 1);
    CHECK(re.records()[0].task_id == "t1");
}

TEST_CASE("registry: creating over an existing registry is rejected") {
    TempDir tmp;
    ArchSpec arch = reg_arch();
    GeneratorWeights g = init_generator<float>(arch, 1);
    Registry::create(tmp.path / "reg", g.fingerprint(), "");
    CHECK_THROWS_AS(Registry::create(tmp.path / "reg", g.fingerprint(), ""), RegistryError);
}
