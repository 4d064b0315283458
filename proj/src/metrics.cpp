// SPDX-License-Identifier: Apache-2.0
#include "colora/metrics.hpp"

#include <cmath>

#include "colora/linalg.hpp"
#include "colora/rng.hpp"

namespace colora {

namespace {
constexpr int kC1 = 16, kC2 = 16, kC3 = 32;
}

const FeatureEmbedder& FeatureEmbedder::instance() {
    static FeatureEmbedder e;
    return e;
}

FeatureEmbedder::FeatureEmbedder() {
    RandomSource rng(kEmbedderSeed);
    auto he = [&](int cout, int cin) {
        double sigma = std::sqrt(2.0 / (double(cin) * 9.0));
        return Tensor::randn({cout, cin, 3, 3}, rng, sigma);
    };
    w1_ = he(kC1, 3);
    w2_ = he(kC2, kC1);
    w3_ = he(kC3, kC2);
}

FeatureEmbedder::Maps FeatureEmbedder::forward(const Tensor& img) const {
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw ShapeError("embedder: image must be [3 x R x R], got " + shape_str(img.shape()));
    if (img.dim(1) % 8 != 0 || img.dim(1) != img.dim(2))
        throw ShapeError("embedder: resolution must be square and divisible by 8");
    Maps maps;
    Tensor x = img;
    for (const Tensor* w : {&w1_, &w2_, &w3_}) {
        x = leaky_relu(conv2d(x, *w), 0.2);
        maps.layers.push_back(x);
        x = avgpool2x(x);
    }
    return maps;
}

std::array<double, kEmbedDim> FeatureEmbedder::embed(const Tensor& img) const {
    Maps maps = forward(img);
    std::array<double, kEmbedDim> out{};
    int o = 0;
    for (const Tensor& layer : maps.layers) {
        int c = layer.dim(0);
        std::size_t hw = static_cast<std::size_t>(layer.dim(1)) * layer.dim(2);
        for (int ci = 0; ci < c; ++ci) {
            double acc = 0.0;
            const float* p = layer.data().data() + static_cast<std::size_t>(ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) acc += p[i];
            out[static_cast<std::size_t>(o++)] = acc / double(hw);
        }
    }
    return out;
}

namespace {

// Unit-normalizes each spatial position's channel vector; epsilon keeps the
// all-zero column finite.
std::vector<double> normalized_columns(const Tensor& layer) {
    int c = layer.dim(0);
    std::size_t hw = static_cast<std::size_t>(layer.dim(1)) * layer.dim(2);
    std::vector<double> out(static_cast<std::size_t>(c) * hw);
    for (std::size_t p = 0; p < hw; ++p) {
        double nrm = 0.0;
        for (int ci = 0; ci < c; ++ci) {
            double v = layer.data()[static_cast<std::size_t>(ci) * hw + p];
            nrm += v * v;
        }
        nrm = std::sqrt(nrm) + 1e-10;
        for (int ci = 0; ci < c; ++ci)
            out[static_cast<std::size_t>(ci) * hw + p] =
                layer.data()[static_cast<std::size_t>(ci) * hw + p] / nrm;
    }
    return out;
}

}  // namespace

double perceptual_distance(const Tensor& img_a, const Tensor& img_b) {
    if (img_a.shape() != img_b.shape())
        throw ShapeError("perceptual_distance: image shapes differ");
    const FeatureEmbedder& emb = FeatureEmbedder::instance();
    FeatureEmbedder::Maps ma = emb.forward(img_a);
    FeatureEmbedder::Maps mb = emb.forward(img_b);
    double total = 0.0;
    for (std::size_t l = 0; l < ma.layers.size(); ++l) {
        const Tensor& la = ma.layers[l];
        int c = la.dim(0);
        std::size_t hw = static_cast<std::size_t>(la.dim(1)) * la.dim(2);
        std::vector<double> na = normalized_columns(la);
        std::vector<double> nb = normalized_columns(mb.layers[l]);
        double layer_acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
            double d2 = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                double dv = na[static_cast<std::size_t>(ci) * hw + p] - nb[static_cast<std::size_t>(ci) * hw + p];
                d2 += dv * dv;
            }
            layer_acc += d2;
        }
        total += layer_acc / double(hw);
    }
    return total / double(ma.layers.size());
}

double source_target_distance(const std::vector<Tensor>& source, const std::vector<Tensor>& target) {
    if (source.size() < 2 || target.size() < 2)
        throw ValueError("source_target_distance: need at least 2 samples per side");
    double acc = 0.0;
    for (const Tensor& s : source)
        for (const Tensor& t : target) acc += perceptual_distance(s, t);
    return acc / (double(source.size()) * double(target.size()));
}

double pairwise_diversity(const std::vector<Tensor>& samples) {
    if (samples.size() < 2) throw ValueError("pairwise_diversity: need at least 2 samples");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            acc += perceptual_distance(samples[i], samples[j]);
            ++pairs;
        }
    return acc / double(pairs);
}

GaussStats fit_stats(const std::vector<std::array<double, kEmbedDim>>& samples) {
    if (samples.size() < 2) throw ValueError("fit_stats: need at least 2 samples");
    const int d = kEmbedDim;
    GaussStats st;
    st.dim = d;
    st.n = static_cast<int>(samples.size());
    st.mean.assign(d, 0.0);
    st.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    // Welford-style online mean/scatter update.
    std::vector<double> delta(d), delta2(d);
    int n = 0;
    for (const auto& x : samples) {
        ++n;
        for (int i = 0; i < d; ++i) delta[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - st.mean[static_cast<std::size_t>(i)];
        for (int i = 0; i < d; ++i) st.mean[static_cast<std::size_t>(i)] += delta[static_cast<std::size_t>(i)] / n;
        for (int i = 0; i < d; ++i) delta2[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - st.mean[static_cast<std::size_t>(i)];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                st.cov[static_cast<std::size_t>(i) * d + j] += delta[static_cast<std::size_t>(i)] * delta2[static_cast<std::size_t>(j)];
    }
    for (auto& v : st.cov) v /= double(st.n - 1);
    // enforce exact symmetry against accumulation order
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            double m = 0.5 * (st.cov[static_cast<std::size_t>(i) * d + j] + st.cov[static_cast<std::size_t>(j) * d + i]);
            st.cov[static_cast<std::size_t>(i) * d + j] = m;
            st.cov[static_cast<std::size_t>(j) * d + i] = m;
        }
    return st;
}

namespace {

// B = sqrtm(A) for symmetric positive semidefinite A (negative eigenvalues
// clamped to zero).
std::vector<double> sym_sqrt(int n, const std::vector<double>& a) {
    std::vector<double> vals, vecs;
    jacobi_eigh(n, a, vals, vecs);
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        double lam = vals[static_cast<std::size_t>(k)];
        double s = lam > 0 ? std::sqrt(lam) : 0.0;
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            double vik = vecs[static_cast<std::size_t>(i) * n + k] * s;
            if (vik == 0.0) continue;
            for (int j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i) * n + j] += vik * vecs[static_cast<std::size_t>(j) * n + k];
        }
    }
    return out;
}

std::vector<double> matmul_dense(int n, const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double av = a[static_cast<std::size_t>(i) * n + k];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j)
                c[static_cast<std::size_t>(i) * n + j] += av * b[static_cast<std::size_t>(k) * n + j];
        }
    return c;
}

}  // namespace

double frechet_distance(const GaussStats& s1, const GaussStats& s2) {
    if (s1.dim != s2.dim) throw ShapeError("frechet_distance: dimension mismatch");
    const int d = s1.dim;
    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        double dv = s1.mean[static_cast<std::size_t>(i)] - s2.mean[static_cast<std::size_t>(i)];
        mean_term += dv * dv;
    }
    double tr1 = 0.0, tr2 = 0.0;
    for (int i = 0; i < d; ++i) {
        tr1 += s1.cov[static_cast<std::size_t>(i) * d + i];
        tr2 += s2.cov[static_cast<std::size_t>(i) * d + i];
    }
    std::vector<double> s1h = sym_sqrt(d, s1.cov);
    std::vector<double> inner = matmul_dense(d, matmul_dense(d, s1h, s2.cov), s1h);
    // symmetrize fp residue before the eigensolve
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            double m = 0.5 * (inner[static_cast<std::size_t>(i) * d + j] + inner[static_cast<std::size_t>(j) * d + i]);
            inner[static_cast<std::size_t>(i) * d + j] = m;
            inner[static_cast<std::size_t>(j) * d + i] = m;
        }
    std::vector<double> vals, vecs;
    jacobi_eigh(d, inner, vals, vecs);
    double tr_sqrt = 0.0;
    for (double lam : vals) tr_sqrt += lam > 0 ? std::sqrt(lam) : 0.0;
    return mean_term + tr1 + tr2 - 2.0 * tr_sqrt;
}

double proxy_fid(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    const FeatureEmbedder& emb = FeatureEmbedder::instance();
    std::vector<std::array<double, kEmbedDim>> fa, fb;
    fa.reserve(a.size());
    fb.reserve(b.size());
    for (const Tensor& t : a) fa.push_back(emb.embed(t));
    for (const Tensor& t : b) fb.push_back(emb.embed(t));
    return frechet_distance(fit_stats(fa), fit_stats(fb));
}

AlphaChoice select_alphas(double l_st, double m) {
    if (l_st <= 0 || m <= 0) throw ValueError("select_alphas: inputs must be positive");
    AlphaChoice c;
    c.l_st = l_st;
    c.multiplier = m;
    c.alpha_fc = m * l_st;
    c.alpha_conv = l_st / m;
    return c;
}

double default_multiplier(double l_st) {
    if (l_st <= 0) throw ValueError("default_multiplier: distance must be positive");
    return l_st >= 0.40 ? 4.0 : 1.0;
}

}  // namespace colora
