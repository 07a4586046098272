#include "dstreamon/controller/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

extern char** environ;

namespace dstreamon::controller {

std::string ExitInfo::describe() const {
  if (signal != 0) return "killed by signal " + std::to_string(signal) + " (" + strsignal(signal) + ")";
  return "exited with code " + std::to_string(code);
}

namespace {

ExitInfo decode(int status) {
  ExitInfo e;
  if (WIFSIGNALED(status)) e.signal = WTERMSIG(status);
  else e.code = WEXITSTATUS(status);
  return e;
}

struct FileActions {
  posix_spawn_file_actions_t fa;
  FileActions() { posix_spawn_file_actions_init(&fa); }
  ~FileActions() { posix_spawn_file_actions_destroy(&fa); }
};

}  // namespace

std::unique_ptr<ChildProcess> ChildProcess::spawn(const SpawnSpec& spec) {
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  net::Fd in_r(in_pipe[0]), in_w(in_pipe[1]);
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  net::Fd out_r(out_pipe[0]), out_w(out_pipe[1]);

  net::Fd err_fd;
  if (!spec.stderr_path.empty()) {
    err_fd = net::Fd(::open(spec.stderr_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
    if (!err_fd) throw SpawnError("cannot open " + spec.stderr_path + ": " + std::strerror(errno));
  }

  FileActions actions;
  posix_spawn_file_actions_adddup2(&actions.fa, in_r.get(), STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions.fa, out_w.get(), STDOUT_FILENO);
  if (err_fd) posix_spawn_file_actions_adddup2(&actions.fa, err_fd.get(), STDERR_FILENO);
  // Listening sockets and other children's pipes must not leak into the probe.
  posix_spawn_file_actions_addclosefrom_np(&actions.fa, 3);
  if (!spec.cwd.empty()) posix_spawn_file_actions_addchdir_np(&actions.fa, spec.cwd.c_str());

  std::vector<std::string> argv_s;
  argv_s.push_back(spec.exe);
  argv_s.insert(argv_s.end(), spec.args.begin(), spec.args.end());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, spec.exe.c_str(), &actions.fa, nullptr, argv.data(), environ);
  if (rc != 0) throw SpawnError("cannot spawn " + spec.exe + ": " + std::strerror(rc));

  std::unique_ptr<ChildProcess> child(new ChildProcess);
  child->pid_ = pid;
  child->to_child_ = std::move(in_w);
  child->from_child_ = std::move(out_r);
  return child;
}

ChildProcess::~ChildProcess() {
  if (!exit_ && pid_ > 0) kill();
}

std::optional<std::string> ChildProcess::read_line(std::chrono::milliseconds timeout) {
  return read_line_until(std::chrono::steady_clock::now() + timeout);
}

std::optional<std::string> ChildProcess::read_line_until(std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    if (auto nl = buffered_.find('\n'); nl != std::string::npos) {
      std::string line = buffered_.substr(0, nl);
      buffered_.erase(0, nl + 1);
      return line;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{from_child_.get(), POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) return std::nullopt;
    char buf[4096];
    ssize_t n = ::read(from_child_.get(), buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    buffered_.append(buf, static_cast<std::size_t>(n));
  }
}

std::optional<std::string> ChildProcess::request(std::string_view line, std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  if (!to_child_ || !from_child_) return std::nullopt;
  std::string msg(line);
  msg += '\n';
  try {
    if (!net::write_all(to_child_.get(), std::span(reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size())))
      return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return read_line_until(deadline);
}

std::optional<ExitInfo> ChildProcess::poll() {
  if (exit_) return exit_;
  int status = 0;
  pid_t r = ::waitpid(pid_, &status, WNOHANG);
  if (r == pid_) exit_ = decode(status);
  return exit_;
}

std::optional<ExitInfo> ChildProcess::wait_for(std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto e = poll()) return e;
    if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

ExitInfo ChildProcess::kill() {
  if (exit_) return *exit_;
  ::kill(pid_, SIGKILL);
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
  }
  exit_ = decode(status);
  return *exit_;
}

}  // namespace dstreamon::controller
