#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tcontrol::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

inline constexpr const char* kVersion = "1.0.0";

/// Entry point shared by the binary and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tcontrol::cli
