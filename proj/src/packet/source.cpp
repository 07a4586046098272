#include "dstreamon/packet/source.hpp"

#include <sys/socket.h>

#include <istream>

namespace dstreamon::packet {
namespace {

class FileSource : public PacketSource {
 public:
  explicit FileSource(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw PcapError("cannot open capture " + path);
    reader_.emplace(in_);
  }
  std::optional<PacketRecord> next() override {
    if (stopped_) return std::nullopt;
    return reader_->next();
  }
  std::uint64_t skipped() const override { return reader_->skipped(); }
  void interrupt() override { stopped_ = true; }

 private:
  std::ifstream in_;
  std::optional<PcapReader> reader_;
  std::atomic<bool> stopped_{false};
};

class TapSource : public PacketSource {
 public:
  explicit TapSource(const net::Endpoint& ep)
      : fd_(net::connect_tcp(ep)), buf_(fd_.get()), in_(&buf_) {}
  std::optional<PacketRecord> next() override {
    if (stopped_) return std::nullopt;
    try {
      // The stream header arrives only once the mirror starts; read it here
      // so opening the source never blocks on the mirror.
      if (!reader_) reader_.emplace(in_);
      return reader_->next();
    } catch (const std::exception&) {
      if (stopped_) return std::nullopt;
      throw;
    }
  }
  std::uint64_t skipped() const override { return reader_ ? reader_->skipped() : 0; }
  void interrupt() override {
    stopped_ = true;
    fd_.shutdown();
  }

 private:
  net::Fd fd_;
  net::FdStreamBuf buf_;
  std::istream in_;
  std::optional<PcapReader> reader_;
  std::atomic<bool> stopped_{false};
};

}  // namespace

bool is_tap_uri(std::string_view source) { return source.rfind("tcp://", 0) == 0; }

std::unique_ptr<PacketSource> open_source(const std::string& source) {
  if (is_tap_uri(source)) {
    auto ep = net::parse_endpoint(source.substr(6));
    if (!ep) throw net::NetError("bad tap endpoint '" + source + "'");
    return std::make_unique<TapSource>(*ep);
  }
  return std::make_unique<FileSource>(source);
}

TapServer::TapServer(std::vector<PacketRecord> packets, std::size_t n_taps, net::Endpoint listen,
                     std::size_t capacity)
    : packets_(std::move(packets)), n_taps_(n_taps), listen_(std::move(listen)), capacity_(capacity) {
  if (n_taps_ == 0) throw std::invalid_argument("a mirror needs at least one tap");
}

TapServer::~TapServer() { stop(); }

std::uint16_t TapServer::start() {
  net::ignore_sigpipe();
  listener_ = net::listen_tcp(listen_);
  port_ = net::local_port(listener_);
  thread_ = std::thread([this] { run(); });
  return port_;
}

void TapServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void TapServer::stop() {
  stopping_ = true;
  {
    std::lock_guard lk(mu_);
    for (auto& fd : taps_) fd.shutdown();
  }
  wait();
}

void TapServer::run() {
  auto& taps = taps_;
  while (!stopping_) {
    auto fd = net::accept_for(listener_, std::chrono::milliseconds(100));
    std::lock_guard lk(mu_);
    if (fd) taps.push_back(std::move(fd));
    if (taps.size() == n_taps_) break;
  }
  if (stopping_) return;

  Mirror m(n_taps_, capacity_);
  std::vector<std::jthread> writers;
  for (std::size_t i = 0; i < n_taps_; ++i) {
    writers.emplace_back([&, i] {
      auto& tap = m.tap(i);
      int fd = taps[i].get();
      if (!net::write_all(fd, pcap_global_header())) {
        tap.disconnect();
        return;
      }
      while (auto p = tap.next()) {
        if (!net::write_all(fd, pcap_record(*p))) {
          tap.disconnect();
          return;
        }
      }
      ::shutdown(fd, SHUT_WR);
    });
  }
  for (const auto& p : packets_) {
    if (stopping_) break;
    m.push(p);
  }
  m.close();
  writers.clear();
}

}  // namespace dstreamon::packet
