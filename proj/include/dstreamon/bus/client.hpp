#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "dstreamon/bus/frame.hpp"
#include "dstreamon/net/socket.hpp"

namespace dstreamon::bus {

/// One bus connection. Publishing is safe from one thread at a time;
/// keepalive PINGs from the broker are answered on a background reader.
class Client {
 public:
  /// Connects and sends HELLO. Throws net::NetError.
  static std::unique_ptr<Client> connect(const net::Endpoint& broker, Role role, std::string identity,
                                         std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Sends a PUB with the next sequence number and returns it. Throws
  /// net::NetError once the connection is gone.
  std::uint64_t publish(std::string_view topic, packet::CaptureTime ts, std::string_view payload);
  void subscribe(std::string_view prefix);

  /// Round trip through the broker: true once every frame sent earlier on
  /// this connection was processed and everything routed to us before that
  /// point has been received.
  bool sync(std::chrono::milliseconds timeout = std::chrono::seconds(5));

  /// Next event routed to this subscriber, or nullopt on timeout/close.
  std::optional<MonitoringEvent> next(std::chrono::milliseconds timeout);

  bool connected() const;
  std::uint64_t last_seq() const { return seq_; }
  void close();

 private:
  explicit Client(net::Fd fd);
  void send(const Bytes& frame);
  void read_loop();

  net::Fd fd_;
  std::mutex write_mu_;
  std::thread reader_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_token_ = 0;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<MonitoringEvent> inbox_;
  std::uint64_t last_pong_ = 0;
  bool closed_ = false;
};

}  // namespace dstreamon::bus
