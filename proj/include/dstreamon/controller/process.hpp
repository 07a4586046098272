#pragma once

#include <sys/types.h>

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dstreamon/net/socket.hpp"

namespace dstreamon::controller {

struct ExitInfo {
  int code = 0;    // valid when signal == 0
  int signal = 0;  // terminating signal, 0 if exited normally

  bool clean() const { return signal == 0 && code == 0; }
  std::string describe() const;
};

struct SpawnSpec {
  std::string exe;
  std::vector<std::string> args;  // excluding argv[0]
  std::string cwd;                // empty: inherit
  std::string stderr_path;        // appended to; empty: inherit
};

struct SpawnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A child process with its stdin/stdout connected to pipes, used as a
/// line-oriented request/response control channel.
class ChildProcess {
 public:
  static std::unique_ptr<ChildProcess> spawn(const SpawnSpec& spec);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  pid_t pid() const { return pid_; }

  /// Writes `line` + '\n' and waits for one response line. nullopt if the
  /// child closed its end or the timeout expired.
  std::optional<std::string> request(std::string_view line, std::chrono::milliseconds timeout);

  /// Reads one line the child wrote; nullopt on EOF or timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);

  /// Non-blocking reap.
  std::optional<ExitInfo> poll();
  /// Reaps, waiting at most `timeout`.
  std::optional<ExitInfo> wait_for(std::chrono::milliseconds timeout);
  /// SIGKILL and reap.
  ExitInfo kill();

 private:
  ChildProcess() = default;
  std::optional<std::string> read_line_until(std::chrono::steady_clock::time_point deadline);

  pid_t pid_ = -1;
  net::Fd to_child_;
  net::Fd from_child_;
  std::string buffered_;
  std::optional<ExitInfo> exit_;
};

}  // namespace dstreamon::controller
