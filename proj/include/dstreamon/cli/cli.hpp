#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dstreamon::cli {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kApiError = 1;
inline constexpr int kUsage = 2;
}  // namespace exit_code

inline constexpr const char* kDefaultUrl = "http://127.0.0.1:7080";
inline constexpr const char* kUrlEnv = "DSTREAMON_URL";

/// Runs one CLI invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dstreamon::cli
