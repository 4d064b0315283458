// SPDX-License-Identifier: Apache-2.0
#pragma once

// Procedural datasets: colored geometric patterns as the source domain and
// parameterized shifts of it (palette rotation, shape class swap, texture
// frequency change) as few-shot targets. Rendering is fully determined by
// (kind, params, seed): pixels are quantized to 8 bits before use so the
// in-memory tensors match the PPM files byte for byte.

#include <cstdint>
#include <string>
#include <vector>

#include "colora/common.hpp"
#include "colora/tensor.hpp"

namespace colora {

enum class DatasetKind : uint8_t { Patterns = 0, PaletteShift = 1, ShapeSwap = 2, TextureShift = 3 };

DatasetKind dataset_kind_from_name(const std::string& name);
const char* dataset_kind_name(DatasetKind k);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Patterns;
    double strength = 0.5;  // shift magnitude for the target kinds
    int samples = 10;
    uint64_t seed = 1;
    int resolution = 0;  // 0: fill in from the run's architecture

    void validate() const {
        if (samples < 1) throw ConfigError("dataset: samples must be >= 1");
        if (resolution <= 0) throw ConfigError("dataset: resolution not set");
        if (strength < 0) throw ConfigError("dataset: strength must be >= 0");
    }
};

// One [3, res, res] image in [-1, 1], u8-quantized.
Tensor render_image(const DatasetSpec& spec, int index);

std::vector<Tensor> render_dataset(const DatasetSpec& spec);

// Binary PPM (P6) for 3-channel images, PGM (P5) for single-channel, both
// maxval 255.
void write_pnm(const std::string& path, const Tensor& img);
Tensor read_pnm(const std::string& path);

}  // namespace colora
