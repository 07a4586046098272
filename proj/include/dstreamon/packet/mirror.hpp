#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "dstreamon/packet/packet.hpp"

namespace dstreamon::packet {

/// Port-mirroring fan-out: one producer, n independent taps. Every connected
/// tap receives every packet in producer order. Buffers are bounded; when a
/// connected tap is full the producer blocks instead of dropping.
class Mirror {
 public:
  class Tap {
   public:
    /// Blocks until a packet is available; nullopt once the producer closed
    /// and the buffer drained, or after disconnect().
    std::optional<PacketRecord> next();
    /// Detaches this tap; the producer stops waiting on it.
    void disconnect();
    bool connected() const;

   private:
    friend class Mirror;
    explicit Tap(Mirror& owner) : owner_(owner) {}
    Mirror& owner_;
    std::deque<PacketRecord> buf_;
    bool connected_ = true;
  };

  explicit Mirror(std::size_t n_taps, std::size_t capacity = 1024);
  Mirror(const Mirror&) = delete;
  Mirror& operator=(const Mirror&) = delete;

  void push(const PacketRecord& pkt);
  void close();

  Tap& tap(std::size_t i) { return *taps_.at(i); }
  std::size_t size() const { return taps_.size(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable space_;
  std::condition_variable data_;
  std::vector<std::unique_ptr<Tap>> taps_;
  std::size_t capacity_;
  bool closed_ = false;
};

/// Runs a Mirror with one consumer thread per tap and collects each tap's
/// full output.
std::vector<std::vector<PacketRecord>> mirror(std::span<const PacketRecord> input,
                                              std::size_t n_taps, std::size_t capacity = 64);

}  // namespace dstreamon::packet
