#pragma once

#include <stdexcept>
#include <string>

namespace harunet {

// Bad inputs, malformed data, contract violations. CLI maps this to exit 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and format-level failures. CLI maps this to exit 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace harunet
