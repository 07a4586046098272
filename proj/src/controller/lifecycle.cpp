#include "dstreamon/controller/lifecycle.hpp"

namespace dstreamon::controller {

std::string_view to_string(Lifecycle s) {
  switch (s) {
    case Lifecycle::Registered: return "registered";
    case Lifecycle::Installed: return "installed";
    case Lifecycle::Running: return "running";
    case Lifecycle::Stopped: return "stopped";
    case Lifecycle::Failed: return "failed";
    case Lifecycle::Removed: return "removed";
  }
  return "failed";
}

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Install: return "install";
    case Command::Start: return "start";
    case Command::Stop: return "stop";
    case Command::Remove: return "remove";
  }
  return "?";
}

std::optional<Lifecycle> parse_lifecycle(std::string_view s) {
  for (auto l : kAllLifecycles)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

std::optional<Lifecycle> apply(Lifecycle from, Command cmd) {
  using L = Lifecycle;
  switch (cmd) {
    case Command::Install:
      if (from == L::Registered) return L::Installed;
      break;
    case Command::Start:
      if (from == L::Installed || from == L::Stopped) return L::Running;
      break;
    case Command::Stop:
      if (from == L::Running) return L::Stopped;
      break;
    case Command::Remove:
      if (from == L::Installed || from == L::Running || from == L::Stopped || from == L::Failed) return L::Removed;
      break;
  }
  return std::nullopt;
}

bool observable(Lifecycle from, Lifecycle to) {
  return from == Lifecycle::Running && (to == Lifecycle::Failed || to == Lifecycle::Stopped);
}

}  // namespace dstreamon::controller
