#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "keat/tape.hpp"

namespace keat {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Test seams that the command line cannot reach.
struct CliHooks {
  std::function<void(GradStore&)> corrupt_backward;
};

/// Runs one command (`args` excludes the program name) and returns the exit
/// code. Never throws.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err, const CliHooks& hooks = {});

}  // namespace keat
