#pragma once

#include <iosfwd>

namespace prefrank {

// Exit codes: 0 success, 2 config/parse, 3 data, 4 numeric divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDiverged = 4;

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace prefrank
