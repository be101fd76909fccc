#pragma once

#include <string>
#include <vector>

namespace sdf3d {

inline constexpr const char* kToolVersion = "1.0.0";

// Exit codes: 0 success, 1 module error, 2 bad command line.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args); // args exclude the program name

} // namespace sdf3d
