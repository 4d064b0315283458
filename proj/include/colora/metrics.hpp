// SPDX-License-Identifier: Apache-2.0
#pragma once

// Perceptual proxy metrics over a fixed random-conv embedder.
//
// Desk scale forbids pretrained perceptual networks, so patch similarity and
// the Frechet distance both run on features from a small convolutional
// embedder with weights drawn once from a pinned seed. Distances are
// regression-grade proxies: orderings are meaningful, absolute values are
// not comparable to published perceptual metrics.

#include <array>
#include <cstdint>
#include <vector>

#include "colora/common.hpp"
#include "colora/tensor.hpp"

namespace colora {

// The published embedder seed; changing it invalidates every stored metric.
inline constexpr uint64_t kEmbedderSeed = 0xC01AFEA7u;

inline constexpr int kEmbedDim = 64;  // 16 + 16 + 32 channel means

// Three fixed conv layers (He-scaled Normal weights from kEmbedderSeed),
// each followed by leaky_relu(0.2) and 2x average pooling. Exposes per-layer
// activation maps for patch distances and a 64-d channel-mean feature vector.
class FeatureEmbedder {
public:
    static const FeatureEmbedder& instance();

    // img: [3, R, R] in [-1, 1], R divisible by 8.
    struct Maps {
        std::vector<Tensor> layers;  // post-activation, pre-pool maps
    };
    Maps forward(const Tensor& img) const;

    std::array<double, kEmbedDim> embed(const Tensor& img) const;

private:
    FeatureEmbedder();
    Tensor w1_, w2_, w3_;
};

// Mean over layers and spatial positions of the squared L2 distance between
// unit-normalized per-position feature vectors. Symmetric; zero iff the
// inputs agree (up to fp).
double perceptual_distance(const Tensor& img_a, const Tensor& img_b);

// Mean perceptual distance over all (source, target) pairs.
double source_target_distance(const std::vector<Tensor>& source, const std::vector<Tensor>& target);

// Mean perceptual distance over all unordered pairs of one sample set.
double pairwise_diversity(const std::vector<Tensor>& samples);

struct GaussStats {
    std::vector<double> mean;  // [dim]
    std::vector<double> cov;   // [dim x dim], symmetric
    int dim = 0;
    int n = 0;
};

GaussStats fit_stats(const std::vector<std::array<double, kEmbedDim>>& samples);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the matrix square root by
// symmetric eigendecomposition of S1^{1/2} S2 S1^{1/2} with negative
// eigenvalues clamped to zero.
double frechet_distance(const GaussStats& s1, const GaussStats& s2);

// Proxy-FID between two image sets: embed, fit Gaussians, Frechet distance.
double proxy_fid(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

// alpha selection driven by the source-target distance L_st:
//   alpha_fc = m * L_st, alpha_conv = L_st / m.
struct AlphaChoice {
    double l_st = 0.0;
    double multiplier = 1.0;
    double alpha_fc = 0.0;
    double alpha_conv = 0.0;
};

AlphaChoice select_alphas(double l_st, double m);

// Far targets want the FC adapters amplified and the conv adapters
// attenuated; near targets keep the plain split.
double default_multiplier(double l_st);

}  // namespace colora
