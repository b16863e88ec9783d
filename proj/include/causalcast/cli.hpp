#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "causalcast/error.hpp"

namespace causalcast {

inline constexpr std::string_view kVersion = "0.1.0";

/// Exit codes: 0 success, 1 runtime failure, 2 invalid input or config.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 2 for input/config validation failures, 1 for everything else.
int exit_code_for(ErrorCode code);

}  // namespace causalcast
