// SPDX-License-Identifier: Apache-2.0
#include "colora/common.hpp"

#include <cstdlib>

namespace colora {

namespace {

bool& reference_flag() {
    static bool flag = [] {
        const char* env = std::getenv("COLORA_REFERENCE_MODE");
        return env != nullptr && env[0] == '1';
    }();
    return flag;
}

}  // namespace

bool reference_mode() { return reference_flag(); }

void set_reference_mode(bool on) { reference_flag() = on; }

}  // namespace colora
