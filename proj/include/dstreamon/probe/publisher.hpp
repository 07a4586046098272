#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "dstreamon/bus/client.hpp"

namespace dstreamon::probe {

struct PublisherOptions {
  std::size_t max_buffer = 10'000;
  /// How long to keep retrying an unreachable broker before failing.
  std::chrono::milliseconds retry_window{30'000};
};

/// Order-preserving asynchronous publisher. Events wait in a bounded buffer
/// while the broker is unreachable; the connection is retried with backoff.
/// It fails (never drops silently) when the buffer overflows or the broker
/// stays unreachable for the retry window.
class BusPublisher {
 public:
  BusPublisher(net::Endpoint broker, std::string identity, PublisherOptions opts = {});
  ~BusPublisher();

  /// Initial connection with backoff; false once the retry window elapses.
  bool connect();
  /// False if the publisher has failed (the event is not accepted).
  bool enqueue(std::string topic, packet::CaptureTime ts, std::string payload);
  /// Waits until every accepted event reached the broker.
  bool flush(std::chrono::milliseconds timeout);
  void close();

  bool failed() const;
  std::string error() const;
  std::uint64_t delivered() const;

 private:
  struct Item {
    std::string topic;
    packet::CaptureTime ts;
    std::string payload;
  };

  bool reconnect_until(std::chrono::steady_clock::time_point deadline);
  void send_loop();
  void fail(std::string why);

  net::Endpoint broker_;
  std::string identity_;
  PublisherOptions opts_;
  std::unique_ptr<bus::Client> client_;
  std::thread sender_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  bool in_flight_ = false;
  bool closing_ = false;
  bool failed_ = false;
  std::string error_;
  std::uint64_t delivered_ = 0;
};

}  // namespace dstreamon::probe
