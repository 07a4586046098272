#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace dstreamon::controller {

enum class Lifecycle { Registered, Installed, Running, Stopped, Failed, Removed };
enum class Command { Install, Start, Stop, Remove };

inline constexpr std::array kAllLifecycles = {Lifecycle::Registered, Lifecycle::Installed, Lifecycle::Running,
                                              Lifecycle::Stopped,    Lifecycle::Failed,    Lifecycle::Removed};
inline constexpr std::array kAllCommands = {Command::Install, Command::Start, Command::Stop, Command::Remove};

std::string_view to_string(Lifecycle s);
std::string_view to_string(Command c);
std::optional<Lifecycle> parse_lifecycle(std::string_view s);

/// The operator-driven edges: registered->installed, installed->running,
/// running<->stopped, {installed,running,stopped,failed}->removed. Returns
/// nullopt for every other (state, command) pair.
std::optional<Lifecycle> apply(Lifecycle from, Command cmd);

/// Observed (not commanded) edges: running->failed and running->stopped
/// when a probe process exits on its own.
bool observable(Lifecycle from, Lifecycle to);

}  // namespace dstreamon::controller
