#pragma once

#include <iosfwd>

namespace factr::cli {

/// Exit codes: 0 success, 1 invalid usage / config / data, 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `factr` executable. Results go to `out`, progress and
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace factr::cli
