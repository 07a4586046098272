#pragma once

#include <atomic>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dstreamon/net/socket.hpp"
#include "dstreamon/packet/mirror.hpp"
#include "dstreamon/packet/pcap.hpp"

namespace dstreamon::packet {

/// Sequential packet input for a probe.
class PacketSource {
 public:
  virtual ~PacketSource() = default;
  virtual std::optional<PacketRecord> next() = 0;
  virtual std::uint64_t skipped() const = 0;
  /// Unblocks a pending next() from another thread; later calls return nullopt.
  virtual void interrupt() {}
};

/// "tcp://host:port" names a tap endpoint; anything else is a pcap path.
bool is_tap_uri(std::string_view source);

/// Opens a pcap file or connects to a tap. Throws PcapError or net::NetError.
std::unique_ptr<PacketSource> open_source(const std::string& source);

/// Serves a packet stream to n TCP taps as pcap byte streams. Streaming
/// starts once all n taps are connected (tap i = i-th connection); each tap
/// then receives every packet in order, with Mirror backpressure semantics.
/// A tap whose socket breaks is disconnected; the others continue.
class TapServer {
 public:
  TapServer(std::vector<PacketRecord> packets, std::size_t n_taps, net::Endpoint listen,
            std::size_t capacity = 1024);
  ~TapServer();

  /// Binds and starts accepting; returns the bound port.
  std::uint16_t start();
  /// Blocks until every tap has been served (or disconnected).
  void wait();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void run();

  std::vector<PacketRecord> packets_;
  std::size_t n_taps_;
  net::Endpoint listen_;
  std::size_t capacity_;
  net::Fd listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<net::Fd> taps_;
  std::thread thread_;
};

}  // namespace dstreamon::packet
