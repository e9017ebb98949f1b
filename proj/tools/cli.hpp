#pragma once

#include <string>
#include <vector>

namespace ecnu::cli {

/// Exit codes: 0 success, 1 usage or configuration, 2 data, 3 runtime or numeric.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

/// Entry point shared by the executable and the in-process CLI tests.
/// argv[0] is the program name.
int run(const std::vector<std::string>& args);

std::string sha256_hex(const std::string& bytes);

}  // namespace ecnu::cli
