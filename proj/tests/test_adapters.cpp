// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "colora/adapters.hpp"
#include "colora/networks.hpp"
#include "colora/sha256.hpp"
#include "oracles.hpp"

using namespace colora;

namespace {

LLoraConvAdapterT<float> make_conv_adapter(RandomSource& rng, int cout, int cin, int r, int k,
                                           double alpha, Activation act) {
    LLoraConvAdapterT<float> ad;
    ad.rank = r;
    ad.alpha = alpha;
    ad.c_out = cout;
    ad.c_in = cin;
    ad.k = k;
    ad.act = act;
    ad.B_prime = oracles::random_tensor<float>({cout, r}, rng, -1, 1);
    ad.M_inst = oracles::random_tensor<float>({r, r, k, k}, rng, -1, 1);
    ad.A = oracles::random_tensor<float>({r, cin}, rng, -1, 1);
    return ad;
}

}  // namespace

TEST_CASE("lora_fc_delta: zero factor, hand product, alpha linearity") {
    LoraFcAdapter ad;
    ad.rank = 1;
    ad.alpha = 1.0;
    ad.d_out = 2;
    ad.d_in = 2;
    ad.B = Tensor::from_data({2, 1}, {1, 0});
    ad.A = Tensor::from_data({1, 2}, {2, 3});
    CHECK(lora_fc_delta(ad).data() == std::vector<float>{2, 3, 0, 0});

    ad.B = Tensor::zeros({2, 1});
    CHECK(lora_fc_delta(ad).data() == std::vector<float>{0, 0, 0, 0});

    RandomSource rng(5);
    ad.B = oracles::random_tensor<float>({2, 1}, rng);
    ad.A = oracles::random_tensor<float>({1, 2}, rng);
    Tensor d1 = lora_fc_delta(ad);
    ad.alpha = 2.0;
    Tensor d2 = lora_fc_delta(ad);
    for (std::size_t i = 0; i < d1.numel(); ++i)
        CHECK(d2.data()[i] == doctest::Approx(2.0f * d1.data()[i]));
}

TEST_CASE("llora_conv_B: zero factor, scalar case, loop oracle") {
    RandomSource rng(19);
    SUBCASE("zero B' gives zero B") {
        auto ad = make_conv_adapter(rng, 3, 2, 2, 3, 1.0, Activation::Relu);
        ad.B_prime = Tensor::zeros({3, 2});
        Tensor b0 = llora_conv_B(ad);
        for (float v : b0.data()) CHECK(v == 0.0f);
    }
    SUBCASE("scalar contraction") {
        auto ad = make_conv_adapter(rng, 1, 1, 1, 1, 1.0, Activation::Relu);
        ad.B_prime = Tensor::from_data({1, 1}, {2});
        ad.M_inst = Tensor::from_data({1, 1, 1, 1}, {3});
        CHECK(llora_conv_B(ad).data()[0] == 6.0f);
        ad.B_prime.data()[0] = -2;
        CHECK(llora_conv_B(ad).data()[0] == 0.0f);  // relu clips
    }
    SUBCASE("random factors vs brute-force contraction") {
        for (int trial = 0; trial < 20; ++trial) {
            int cout = rng.uniform_int(1, 6), r = rng.uniform_int(1, 4);
            int k = rng.uniform_int(0, 1) ? 1 : 3;
            auto ad = make_conv_adapter(rng, cout, 2, r, k, 1.0, Activation::Relu);
            auto ref = oracles::llora_B_ref(ad.B_prime.data(), ad.M_inst.data(), cout, r, k, 0);
            CHECK(oracles::max_abs_diff(llora_conv_B(ad).data(), ref) < 1e-6);
        }
    }
}

TEST_CASE("llora_conv_delta: zero factors, scalar compositions, loop oracle") {
    RandomSource rng(23);
    SUBCASE("zero B' or zero A give zero delta") {
        auto ad = make_conv_adapter(rng, 4, 3, 2, 3, 0.7, Activation::Relu);
        ad.B_prime = Tensor::zeros({4, 2});
        { Tensor d0 = llora_conv_delta(ad); for (float v : d0.data()) CHECK(v == 0.0f); }
        auto ad2 = make_conv_adapter(rng, 4, 3, 2, 3, 0.7, Activation::Relu);
        ad2.A = Tensor::zeros({2, 3});
        { Tensor d0 = llora_conv_delta(ad2); for (float v : d0.data()) CHECK(v == 0.0f); }
    }
    SUBCASE("scalar case: relu(relu(2)*(-3)) = 0") {
        auto ad = make_conv_adapter(rng, 1, 1, 1, 1, 1.0, Activation::Relu);
        ad.B_prime = Tensor::from_data({1, 1}, {1});
        ad.M_inst = Tensor::from_data({1, 1, 1, 1}, {2});
        ad.A = Tensor::from_data({1, 1}, {-3});
        CHECK(llora_conv_delta(ad).data()[0] == 0.0f);
    }
    SUBCASE("scalar case: 0.5 * relu(relu(2)*3) = 3") {
        auto ad = make_conv_adapter(rng, 1, 1, 1, 1, 0.5, Activation::Relu);
        ad.B_prime = Tensor::from_data({1, 1}, {1});
        ad.M_inst = Tensor::from_data({1, 1, 1, 1}, {2});
        ad.A = Tensor::from_data({1, 1}, {3});
        CHECK(llora_conv_delta(ad).data()[0] == doctest::Approx(3.0f));
    }
    SUBCASE("random r=2 c_in=3 c_out=4 k=3 vs nested-loop oracle") {
        auto ad = make_conv_adapter(rng, 4, 3, 2, 3, 1.3, Activation::Relu);
        auto ref = oracles::llora_delta_ref(ad.B_prime.data(), ad.M_inst.data(), ad.A.data(), 4, 3, 2,
                                            3, 1.3, 0);
        CHECK(oracles::max_abs_diff(llora_conv_delta(ad).data(), ref) < 1e-6);
    }
    SUBCASE("activation variants agree with the oracle") {
        for (auto [act, code] : {std::pair{Activation::LeakyRelu02, 1}, {Activation::None, 2}}) {
            auto ad = make_conv_adapter(rng, 3, 2, 2, 3, 0.9, act);
            auto ref = oracles::llora_delta_ref(ad.B_prime.data(), ad.M_inst.data(), ad.A.data(), 3, 2,
                                                2, 3, 0.9, code);
            CHECK(oracles::max_abs_diff(llora_conv_delta(ad).data(), ref) < 1e-6);
        }
    }
}

TEST_CASE("oracle equivalence over 100+ randomized shapes") {
    RandomSource rng(314);
    for (int trial = 0; trial < 110; ++trial) {
        int r = rng.uniform_int(1, 4);
        int cin = rng.uniform_int(r, 16);
        int cout = rng.uniform_int(r, 16);
        int k = rng.uniform_int(0, 1) ? 1 : 3;
        auto ad = make_conv_adapter(rng, cout, cin, r, k, rng.uniform(0.2, 2.0), Activation::Relu);
        auto ref = oracles::llora_delta_ref(ad.B_prime.data(), ad.M_inst.data(), ad.A.data(), cout,
                                            cin, r, k, ad.alpha, 0);
        CHECK(oracles::max_abs_diff(llora_conv_delta(ad).data(), ref) < 1e-6);

        LoraFcAdapter fc;
        fc.rank = r;
        fc.alpha = rng.uniform(0.2, 2.0);
        fc.d_out = cout;
        fc.d_in = cin;
        fc.B = oracles::random_tensor<float>({cout, r}, rng, -1, 1);
        fc.A = oracles::random_tensor<float>({r, cin}, rng, -1, 1);
        std::vector<float> prod = oracles::matmul_ref(fc.B.data(), fc.A.data(), cout, r, cin);
        for (auto& v : prod) v = static_cast<float>(v * fc.alpha / r);
        CHECK(oracles::max_abs_diff(lora_fc_delta(fc).data(), prod) < 1e-6);
    }
}

TEST_CASE("llora delta 64-bit gradient check through both activations") {
    RandomSource rng(55);
    LLoraConvAdapterT<double> ad;
    ad.rank = 2;
    ad.alpha = 0.8;
    ad.c_out = 3;
    ad.c_in = 2;
    ad.k = 3;
    ad.act = Activation::Relu;
    ad.B_prime = oracles::random_tensor<double>({3, 2}, rng);
    ad.M_inst = oracles::random_tensor<double>({2, 2, 3, 3}, rng);
    ad.A = oracles::random_tensor<double>({2, 2}, rng);
    double err = oracles::max_grad_rel_err(
        [&](Tape<double>* t) { return mean(llora_conv_delta(ad, t), t); },
        {ad.B_prime, ad.M_inst, ad.A});
    CHECK(err < 1e-4);
}

TEST_CASE("merged_weight: frozen-base contract") {
    RandomSource rng(31);
    Tensor base = oracles::random_tensor<float>({4, 3}, rng);
    LoraFcAdapter ad;
    ad.rank = 1;
    ad.alpha = 1.0;
    ad.d_out = 4;
    ad.d_in = 3;
    ad.B = Tensor::zeros({4, 1});
    ad.A = oracles::random_tensor<float>({1, 3}, rng);
    ad.B.set_requires_grad(true);
    ad.A.set_requires_grad(true);

    SUBCASE("zero-initialized adapter leaves the base bit-identical") {
        Tensor merged = merged_weight(base, ad);
        CHECK(merged.storage().get() == base.storage().get());  // fast path: same storage
    }
    SUBCASE("gradients flow into the factors, never into the base") {
        Tape<float> tape;
        Tensor merged = merged_weight(base, ad, &tape);
        Tensor loss = sum(merged, &tape);
        backward(tape, loss);
        CHECK(!base.has_grad());
        CHECK(ad.B.has_grad());
    }
    SUBCASE("trainable base is rejected") {
        Tensor hot = base.clone();
        hot.set_requires_grad(true);
        CHECK_THROWS_AS(merged_weight(hot, ad), ValueError);
    }
    SUBCASE("shape mismatch is rejected") {
        Tensor wrong = Tensor::zeros({3, 3});
        CHECK_THROWS_AS(merged_weight(wrong, ad), ShapeError);
    }
}

TEST_CASE("merged_weight two-path equivalence") {
    // forward through (base + delta) == forward(base) + forward(delta path)
    RandomSource rng(99);
    Tensor base = oracles::random_tensor<float>({5, 4}, rng, -0.5, 0.5);
    Tensor x = oracles::random_tensor<float>({3, 4}, rng);
    LoraFcAdapter ad;
    ad.rank = 2;
    ad.alpha = 1.5;
    ad.d_out = 5;
    ad.d_in = 4;
    ad.B = oracles::random_tensor<float>({5, 2}, rng, -0.5, 0.5);
    ad.A = oracles::random_tensor<float>({2, 4}, rng, -0.5, 0.5);
    Tensor merged = merged_weight(base, ad);
    Tensor y1 = linear(x, merged, Tensor());
    Tensor y2 = add(linear(x, base, Tensor()), linear(x, lora_fc_delta(ad), Tensor()));
    CHECK(oracles::max_abs_diff(y1.data(), y2.data()) < 1e-5);
}

TEST_CASE("init_adapter_set: zero deltas, determinism, seed sensitivity") {
    ArchSpec arch = ArchSpec::desk_default();
    AdapterSet s1 = init_adapter_set<float>(arch, 1, 1.0, 1.0, 42);
    AdapterSet s2 = init_adapter_set<float>(arch, 1, 1.0, 1.0, 42);
    AdapterSet s3 = init_adapter_set<float>(arch, 1, 1.0, 1.0, 43);

    for (auto& [name, ad] : s1.fc)
        { Tensor d0 = lora_fc_delta(ad); for (float v : d0.data()) CHECK(v == 0.0f); }
    for (auto& [name, ad] : s1.conv)
        { Tensor d0 = llora_conv_delta(ad); for (float v : d0.data()) CHECK(v == 0.0f); }

    bool identical = true, differs = false;
    for (std::size_t i = 0; i < s1.fc.size(); ++i) {
        identical &= s1.fc[i].second.A.data() == s2.fc[i].second.A.data();
        differs |= s1.fc[i].second.A.data() != s3.fc[i].second.A.data();
    }
    CHECK(identical);
    CHECK(differs);

    CHECK(s1.fc.size() == std::size_t(arch.mapping_layers));
    CHECK(s1.conv.size() == arch.synthesis.size() + arch.torgbs.size());

    SUBCASE("rank beyond a conv layer's min dim is rejected") {
        CHECK_THROWS_AS((init_adapter_set<float>(arch, 48, 1.0, 1.0, 1)), ValueError);
    }
    SUBCASE("placement filters layer families") {
        AdapterSet fc_only = init_adapter_set<float>(arch, 1, 1.0, 1.0, 1, Activation::Relu,
                                                     Placement::FcOnly);
        CHECK(fc_only.conv.empty());
        CHECK(!fc_only.fc.empty());
        AdapterSet conv_only = init_adapter_set<float>(arch, 1, 1.0, 1.0, 1, Activation::Relu,
                                                       Placement::ConvOnly);
        CHECK(conv_only.fc.empty());
        CHECK(!conv_only.conv.empty());
    }
}

TEST_CASE("count_params: formula arithmetic and enumeration equivalence") {
    SUBCASE("single 512x512 FC at r=1 contributes 1024 adapter params") {
        ArchSpec a;
        a.z_dim = 512;
        a.w_dim = 512;
        a.mapping_layers = 1;
        a.base_channels = 512;
        a.synthesis = {{4, 512, 512, 3}};
        a.torgbs = {{4, 512}};
        ParamCountReport rep = count_params(a, 1);
        CHECK(rep.per_layer[0].adapter == 1024);
        // conv 512->512 k=3 r=1: 512 + 9 + 512
        for (const auto& l : rep.per_layer)
            if (l.name == "synth.0") CHECK(l.adapter == 1033);
    }
    SUBCASE("formula equals brute enumeration of initialized tensors") {
        ArchSpec arch = ArchSpec::desk_default();
        for (int r : {1, 2, 4, 8}) {
            AdapterSet set = init_adapter_set<float>(arch, r, 1.0, 1.0, 7);
            ParamCountReport rep = count_params(arch, r);
            CHECK(rep.adapter_params == set.param_count());
        }
    }
    SUBCASE("ratio is in (0,1) and counts are positive") {
        ParamCountReport rep = count_params(ArchSpec::desk_default(), 1);
        CHECK(rep.base_params > 0);
        CHECK(rep.adapter_params > 0);
        CHECK(rep.ratio > 0.0);
        CHECK(rep.ratio < 1.0);
    }
}

TEST_CASE("alpha linearity of the outer scale") {
    RandomSource rng(1234);
    auto ad = make_conv_adapter(rng, 3, 4, 2, 3, 1.0, Activation::Relu);
    Tensor d1 = llora_conv_delta(ad);
    ad.alpha = 3.0;
    Tensor d3 = llora_conv_delta(ad);
    for (std::size_t i = 0; i < d1.numel(); ++i)
        CHECK(d3.data()[i] == doctest::Approx(3.0f * d1.data()[i]).epsilon(1e-5));
}
