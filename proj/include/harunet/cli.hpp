#pragma once

#include <string>
#include <vector>

namespace harunet {

inline constexpr const char* kVersion = "0.1.0";

/// Dispatches one command line (without the program name). Returns the
/// process exit code: 0 success, 1 validation or usage error, 2 I/O error.
int cli_main(const std::vector<std::string>& args);

}  // namespace harunet
