#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace drum::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumeric = 2;

// Parses and runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drum::cli
