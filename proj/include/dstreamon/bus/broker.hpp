#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dstreamon/bus/frame.hpp"
#include "dstreamon/net/socket.hpp"

namespace dstreamon::bus {

struct BrokerOptions {
  net::Endpoint listen{"127.0.0.1", kDefaultPort};
  /// Outbound frames buffered per connection before it counts as slow.
  std::size_t subscriber_queue = 8192;
  std::chrono::milliseconds ping_interval{10'000};
  int max_missed_pings = 3;
};

struct BrokerStats {
  std::uint64_t connections = 0;
  std::uint64_t routed = 0;
  std::uint64_t delivered = 0;
  std::uint64_t slow_disconnects = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t keepalive_drops = 0;
};

/// Receives every routed event before any external subscriber; called with
/// routing linearized, so calls never overlap and follow routing order.
using BrokerSink = std::function<void(const MonitoringEvent&, const std::string& publisher)>;

/// TCP pub/sub broker with byte-prefix topic filtering. One reader thread
/// per connection; each connection also has a writer thread draining a
/// bounded queue, so a slow subscriber never blocks publishers: when its
/// queue is full it is disconnected.
class Broker {
 public:
  explicit Broker(BrokerOptions opts = {});
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  void set_sink(BrokerSink sink);
  /// Binds and starts serving; returns the bound port (useful with port 0).
  std::uint16_t start();
  void stop();

  std::uint16_t port() const { return port_; }
  BrokerStats stats() const;

 private:
  struct Conn;

  void accept_loop();
  void keepalive_loop();
  void serve(const std::shared_ptr<Conn>& c);
  void handle(const std::shared_ptr<Conn>& c, const Frame& f);
  void route(const std::shared_ptr<Conn>& from, MonitoringEvent ev);
  void enqueue(Conn& c, std::shared_ptr<const Bytes> frame, bool control);
  void drop(Conn& c);
  void reap_finished();

  BrokerOptions opts_;
  BrokerSink sink_;
  net::Fd listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::thread keepalive_thread_;
  std::mutex keepalive_mu_;
  std::condition_variable keepalive_cv_;

  mutable std::mutex route_mu_;  // connection table, subscriptions, routing
  std::map<std::uint64_t, std::shared_ptr<Conn>> conns_;
  std::vector<std::shared_ptr<Conn>> finished_;
  std::uint64_t next_id_ = 1;

  mutable std::mutex stats_mu_;
  BrokerStats stats_;
};

}  // namespace dstreamon::bus
