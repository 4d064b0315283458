// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace colora {

// Error taxonomy. The CLI maps these onto the exit-code contract:
// config/usage -> 2, numerical failure -> 3, registry/protocol -> 4.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& msg) : std::runtime_error("value error: " + msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error("numerical failure: " + msg) {}
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error("parse error at offset " + std::to_string(offset) + ": " + msg),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

class RegistryError : public std::runtime_error {
public:
    explicit RegistryError(const std::string& msg) : std::runtime_error("registry error: " + msg) {}
};

// COLORA_REFERENCE_MODE=1 pins the bit-exact single-threaded execution path.
// All math in this library is single-threaded and order-fixed, so the flag is
// a guarantee rather than a behavior switch; it is still plumbed through so
// callers can assert it and future parallel paths can honor it.
bool reference_mode();
void set_reference_mode(bool on);

// Report cells are formatted with 6 significant digits.
inline std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Exact round-trip formatting for doubles persisted in manifests.
inline std::string format_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace colora
