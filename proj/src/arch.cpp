// SPDX-License-Identifier: Apache-2.0
#include "colora/arch.hpp"

#include <sstream>

namespace colora {

void ArchSpec::validate() const {
    if (z_dim <= 0 || w_dim <= 0 || mapping_layers <= 0 || base_resolution <= 0 ||
        base_channels <= 0 || img_channels <= 0)
        throw ConfigError("arch: all dimensions must be positive");
    if (synthesis.empty()) throw ConfigError("arch: at least one synthesis conv required");
    int res = base_resolution;
    int ch = base_channels;
    for (std::size_t i = 0; i < synthesis.size(); ++i) {
        const ConvLayerSpec& c = synthesis[i];
        if (c.k <= 0 || c.k % 2 == 0) throw ConfigError("arch: conv kernels must be odd and positive");
        if (c.c_in <= 0 || c.c_out <= 0) throw ConfigError("arch: conv channels must be positive");
        if (c.res != res && c.res != 2 * res)
            throw ConfigError("arch: conv " + std::to_string(i) + " at res " + std::to_string(c.res) +
                              " does not follow res " + std::to_string(res) +
                              " (resolutions may only stay or double)");
        if (c.c_in != ch)
            throw ConfigError("arch: conv " + std::to_string(i) + " expects " + std::to_string(c.c_in) +
                              " input channels but the stack carries " + std::to_string(ch));
        res = c.res;
        ch = c.c_out;
    }
    if (torgbs.empty()) throw ConfigError("arch: at least one torgb required");
    int prev_rgb_res = 0;
    for (const ToRgbSpec& t : torgbs) {
        bool found = false;
        int ch_at = base_channels;
        for (const ConvLayerSpec& c : synthesis) {
            if (c.res > t.res) break;
            ch_at = c.c_out;
            if (c.res == t.res) found = true;
        }
        if (!found) throw ConfigError("arch: torgb at res " + std::to_string(t.res) + " has no conv there");
        if (t.c_in != ch_at)
            throw ConfigError("arch: torgb at res " + std::to_string(t.res) + " expects " +
                              std::to_string(t.c_in) + " channels, stack carries " + std::to_string(ch_at));
        if (t.res <= prev_rgb_res) throw ConfigError("arch: torgb resolutions must strictly increase");
        prev_rgb_res = t.res;
    }
    if (torgbs.back().res != top_resolution())
        throw ConfigError("arch: the last torgb must sit at the top resolution");
}

std::string ArchSpec::serialize() const {
    std::ostringstream os;
    os << "z=" << z_dim << ";w=" << w_dim << ";map=" << mapping_layers << ";base=" << base_resolution
       << ":" << base_channels << ";img=" << img_channels << ";demod=" << (demodulate ? 1 : 0);
    os << ";conv=";
    for (const ConvLayerSpec& c : synthesis) os << c.res << ":" << c.c_in << ":" << c.c_out << ":" << c.k << ",";
    os << ";torgb=";
    for (const ToRgbSpec& t : torgbs) os << t.res << ":" << t.c_in << ",";
    return os.str();
}

ArchSpec ArchSpec::desk_default() {
    ArchSpec a;
    a.z_dim = 64;
    a.w_dim = 64;
    a.mapping_layers = 4;
    a.base_resolution = 4;
    a.base_channels = 128;
    a.img_channels = 3;
    a.demodulate = false;
    a.synthesis = {
        {4, 128, 128, 3},
        {8, 128, 128, 3},
        {16, 128, 64, 3},
        {32, 64, 32, 3},
    };
    a.torgbs = {{32, 32}};
    return a;
}

CriticSpec derive_critic(const ArchSpec& arch) {
    // channels per resolution = output of the last synthesis conv there
    std::vector<std::pair<int, int>> levels;  // (res, channels), ascending
    int ch = arch.base_channels;
    for (const ConvLayerSpec& c : arch.synthesis) {
        ch = c.c_out;
        if (!levels.empty() && levels.back().first == c.res)
            levels.back().second = ch;
        else
            levels.push_back({c.res, ch});
    }
    CriticSpec cs;
    cs.from_rgb_channels = levels.back().second;
    for (std::size_t i = levels.size(); i-- > 0;) {
        int res = levels[i].first;
        int cin = levels[i].second;
        int cout = i > 0 ? levels[i - 1].second : levels[0].second;
        cs.layers.push_back({res, cin, cout, i > 0});
    }
    cs.flat_dim = cs.layers.back().c_out * arch.base_resolution * arch.base_resolution;
    return cs;
}

}  // namespace colora
