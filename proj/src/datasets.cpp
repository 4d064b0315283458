// SPDX-License-Identifier: Apache-2.0
#include "colora/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "colora/rng.hpp"

namespace colora {

DatasetKind dataset_kind_from_name(const std::string& name) {
    if (name == "patterns" || name == "source") return DatasetKind::Patterns;
    if (name == "palette_shift") return DatasetKind::PaletteShift;
    if (name == "shape_swap") return DatasetKind::ShapeSwap;
    if (name == "texture_shift") return DatasetKind::TextureShift;
    throw ConfigError("unknown dataset kind '" + name + "'");
}

const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::Patterns: return "patterns";
        case DatasetKind::PaletteShift: return "palette_shift";
        case DatasetKind::ShapeSwap: return "shape_swap";
        case DatasetKind::TextureShift: return "texture_shift";
    }
    return "?";
}

namespace {

struct Rgb {
    double r, g, b;
};

double wrap01(double x) { return x - std::floor(x); }

Rgb hsv_to_rgb(double h, double s, double v) {
    h = wrap01(h) * 6.0;
    int i = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

struct ShapeDesc {
    int type;  // 0 circle, 1 square, 2 triangle, 3 ring
    double cx, cy, size;
    Rgb color;
};

bool inside_shape(const ShapeDesc& s, double x, double y) {
    double dx = x - s.cx, dy = y - s.cy;
    switch (s.type) {
        case 0: return dx * dx + dy * dy <= s.size * s.size;
        case 1: return std::fabs(dx) <= s.size && std::fabs(dy) <= s.size;
        case 2: {  // upward triangle
            if (dy < -s.size || dy > s.size) return false;
            double half = (s.size - dy) * 0.5;
            return std::fabs(dx) <= half;
        }
        case 3: {
            double r2 = dx * dx + dy * dy;
            double outer = s.size * s.size;
            double inner = 0.55 * s.size * 0.55 * s.size;
            return r2 <= outer && r2 >= inner;
        }
        default: return false;
    }
}

}  // namespace

Tensor render_image(const DatasetSpec& spec, int index) {
    spec.validate();
    RandomSource rng(derive_seed(spec.seed, 0xD47A + static_cast<uint64_t>(index)));
    int res = spec.resolution;
    double hue_shift = spec.kind == DatasetKind::PaletteShift ? spec.strength : 0.0;
    // base palettes occupy half the hue circle so a palette rotation is a
    // genuine distribution shift, not a relabeling of a uniform distribution
    double base_hue = rng.uniform(0.0, 0.5);

    Rgb bg_top = hsv_to_rgb(base_hue + hue_shift, rng.uniform(0.35, 0.65), rng.uniform(0.30, 0.55));
    Rgb bg_bot = hsv_to_rgb(base_hue + 0.08 + hue_shift, rng.uniform(0.35, 0.65), rng.uniform(0.45, 0.70));

    // stripe texture
    double angle = rng.uniform_int(0, 2) * 0.7853981633974483;  // 0, 45, 90 deg
    double freq = rng.uniform(2.5, 5.0);
    if (spec.kind == DatasetKind::TextureShift) freq *= 1.0 + 3.0 * spec.strength;
    double phase = rng.uniform01();
    Rgb stripe = hsv_to_rgb(base_hue + 0.5 + hue_shift, rng.uniform(0.45, 0.75), rng.uniform(0.65, 0.95));
    double stripe_mix = spec.kind == DatasetKind::TextureShift ? 0.5 : 0.35;

    int n_shapes = rng.uniform_int(1, 3);
    std::vector<ShapeDesc> shapes;
    for (int s = 0; s < n_shapes; ++s) {
        ShapeDesc d;
        int pick = rng.uniform_int(0, 1);
        d.type = spec.kind == DatasetKind::ShapeSwap ? pick + 2 : pick;
        d.cx = rng.uniform(0.25, 0.75);
        d.cy = rng.uniform(0.25, 0.75);
        d.size = rng.uniform(0.10, 0.24);
        d.color = hsv_to_rgb(base_hue + rng.uniform(0.25, 0.75) + hue_shift, rng.uniform(0.55, 0.90),
                             rng.uniform(0.65, 1.0));
        shapes.push_back(d);
    }

    Tensor img = Tensor::zeros({3, res, res});
    double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < res; ++y) {
        double fy = (y + 0.5) / res;
        for (int x = 0; x < res; ++x) {
            double fx = (x + 0.5) / res;
            Rgb px{bg_top.r + (bg_bot.r - bg_top.r) * fy, bg_top.g + (bg_bot.g - bg_top.g) * fy,
                   bg_top.b + (bg_bot.b - bg_top.b) * fy};
            double wave = std::sin(6.283185307179586 * (freq * (fx * ca + fy * sa) + phase));
            double t = stripe_mix * (0.5 + 0.5 * wave);
            px = {px.r + (stripe.r - px.r) * t, px.g + (stripe.g - px.g) * t, px.b + (stripe.b - px.b) * t};
            for (const ShapeDesc& s : shapes) {
                if (inside_shape(s, fx, fy)) px = s.color;
            }
            // quantize to u8, then to [-1, 1]
            auto put = [&](int c, double v) {
                int q = static_cast<int>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
                img.data()[(static_cast<std::size_t>(c) * res + y) * res + x] =
                    static_cast<float>(q / 255.0 * 2.0 - 1.0);
            };
            put(0, px.r);
            put(1, px.g);
            put(2, px.b);
        }
    }
    return img;
}

std::vector<Tensor> render_dataset(const DatasetSpec& spec) {
    spec.validate();
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(spec.samples));
    for (int i = 0; i < spec.samples; ++i) out.push_back(render_image(spec, i));
    return out;
}

void write_pnm(const std::string& path, const Tensor& img) {
    if (img.ndim() != 3) throw ShapeError("write_pnm: image must be [c x h x w]");
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (c != 1 && c != 3) throw ShapeError("write_pnm: 1 or 3 channels only");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("cannot open " + path + " for writing");
    out << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ci = 0; ci < c; ++ci) {
                float v = img.data()[(static_cast<std::size_t>(ci) * h + y) * w + x];
                double u = (v + 1.0) * 0.5 * 255.0;
                int q = static_cast<int>(std::lround(std::min(255.0, std::max(0.0, u))));
                row[static_cast<std::size_t>(x) * c + ci] = static_cast<unsigned char>(q);
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw ValueError("short write to " + path);
}

Tensor read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("cannot open " + path);
    std::string magic;
    in >> magic;
    int c = magic == "P6" ? 3 : magic == "P5" ? 1 : 0;
    if (c == 0) throw ParseError("unsupported PNM magic '" + magic + "' in " + path, 0);
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0 || maxval != 255)
        throw ParseError("bad PNM header in " + path, static_cast<std::size_t>(in.tellg()));
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * c);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw ParseError("truncated PNM pixel data in " + path, static_cast<std::size_t>(in.tellg()));
    Tensor img = Tensor::zeros({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ci = 0; ci < c; ++ci)
                img.data()[(static_cast<std::size_t>(ci) * h + y) * w + x] =
                    static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * c + ci] / 255.0 * 2.0 - 1.0);
    return img;
}

}  // namespace colora
