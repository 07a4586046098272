#pragma once

#include <optional>
#include <string_view>

namespace dstreamon::programs {

/// The repository's canonical detection programs (programs/*.xml).
std::string_view synflood_dsl();
std::string_view portscan_dsl();
std::optional<std::string_view> builtin(std::string_view name);

}  // namespace dstreamon::programs
