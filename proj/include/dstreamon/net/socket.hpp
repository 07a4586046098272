#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <streambuf>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dstreamon::net {

struct NetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Owning POSIX file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept;
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset();
  /// Wakes any thread blocked reading or writing this socket.
  void shutdown() const;

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// "host:port"; host may be empty (meaning 127.0.0.1 when connecting).
std::optional<Endpoint> parse_endpoint(std::string_view s);

Fd connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(5));
Fd listen_tcp(const Endpoint& ep, int backlog = 64);
std::uint16_t local_port(const Fd& listener);

/// Waits for a connection; returns an empty Fd on timeout.
Fd accept_for(const Fd& listener, std::chrono::milliseconds timeout);

/// False when the peer is gone. Never raises SIGPIPE.
bool write_all(int fd, std::span<const std::uint8_t> data);
/// False on orderly EOF before any byte; throws NetError on EOF mid-read.
bool read_exact(int fd, std::span<std::uint8_t> out);

/// Read-only streambuf over a socket or pipe, for stream-based parsers.
class FdStreamBuf : public std::streambuf {
 public:
  explicit FdStreamBuf(int fd) : fd_(fd), buf_(64 * 1024) {}

 protected:
  int_type underflow() override;

 private:
  int fd_;
  std::vector<char> buf_;
};

/// Ignores SIGPIPE process-wide; socket writes report broken peers instead.
void ignore_sigpipe();

}  // namespace dstreamon::net
