#include "dstreamon/probe/publisher.hpp"

#include <spdlog/spdlog.h>

namespace dstreamon::probe {

using Clock = std::chrono::steady_clock;

BusPublisher::BusPublisher(net::Endpoint broker, std::string identity, PublisherOptions opts)
    : broker_(std::move(broker)), identity_(std::move(identity)), opts_(opts) {}

BusPublisher::~BusPublisher() { close(); }

bool BusPublisher::reconnect_until(Clock::time_point deadline) {
  auto backoff = std::chrono::milliseconds(50);
  for (;;) {
    try {
      client_ = bus::Client::connect(broker_, bus::Role::Publisher, identity_, std::chrono::seconds(2));
      return true;
    } catch (const net::NetError& e) {
      spdlog::debug("bus {} unreachable: {}", broker_.to_string(), e.what());
    }
    {
      std::unique_lock lk(mu_);
      if (Clock::now() + backoff >= deadline) return false;
      if (cv_.wait_for(lk, backoff, [&] { return closing_; })) return false;
    }
    backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
  }
}

bool BusPublisher::connect() {
  if (!reconnect_until(Clock::now() + opts_.retry_window)) {
    fail("bus " + broker_.to_string() + " unreachable");
    return false;
  }
  sender_ = std::thread([this] { send_loop(); });
  return true;
}

void BusPublisher::fail(std::string why) {
  std::lock_guard lk(mu_);
  if (!failed_) {
    failed_ = true;
    error_ = std::move(why);
    spdlog::error("publisher failed: {}", error_);
  }
  cv_.notify_all();
}

bool BusPublisher::enqueue(std::string topic, packet::CaptureTime ts, std::string payload) {
  bool overflow = false;
  {
    std::lock_guard lk(mu_);
    if (failed_) return false;
    if (queue_.size() >= opts_.max_buffer) overflow = true;
    else queue_.push_back({std::move(topic), ts, std::move(payload)});
  }
  if (overflow) {
    fail("event buffer of " + std::to_string(opts_.max_buffer) + " exhausted while the bus was unavailable");
    return false;
  }
  cv_.notify_all();
  return true;
}

void BusPublisher::send_loop() {
  for (;;) {
    Item item;
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return closing_ || failed_ || !queue_.empty(); });
      if (failed_ || (closing_ && queue_.empty())) return;
      if (closing_ && !client_) return;
      item = queue_.front();
      in_flight_ = true;
    }
    bool sent = false;
    if (client_) {
      try {
        client_->publish(item.topic, item.ts, item.payload);
        sent = true;
      } catch (const net::NetError& e) {
        spdlog::warn("bus connection lost: {}; buffering", e.what());
        client_.reset();
      }
    }
    if (!sent && !client_) {
      if (!reconnect_until(Clock::now() + opts_.retry_window)) {
        {
          std::lock_guard lk(mu_);
          in_flight_ = false;
        }
        fail("bus " + broker_.to_string() + " unreachable for the retry window");
        return;
      }
      spdlog::info("bus connection re-established");
    }
    std::lock_guard lk(mu_);
    in_flight_ = false;
    if (sent) {
      queue_.pop_front();
      ++delivered_;
    }
    cv_.notify_all();
  }
}

bool BusPublisher::flush(std::chrono::milliseconds timeout) {
  auto deadline = Clock::now() + timeout;
  {
    std::unique_lock lk(mu_);
    if (!cv_.wait_until(lk, deadline, [&] { return failed_ || (queue_.empty() && !in_flight_); })) return false;
    if (failed_) return false;
  }
  // All frames are written; a round trip proves the broker processed them.
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  if (!client_ || !client_->sync(std::max(left, std::chrono::milliseconds(1)))) {
    fail("bus did not acknowledge buffered events");
    return false;
  }
  return true;
}

void BusPublisher::close() {
  {
    std::lock_guard lk(mu_);
    closing_ = true;
  }
  cv_.notify_all();
  if (sender_.joinable()) sender_.join();
  if (client_) client_->close();
}

bool BusPublisher::failed() const {
  std::lock_guard lk(mu_);
  return failed_;
}

std::string BusPublisher::error() const {
  std::lock_guard lk(mu_);
  return error_;
}

std::uint64_t BusPublisher::delivered() const {
  std::lock_guard lk(mu_);
  return delivered_;
}

}  // namespace dstreamon::probe
