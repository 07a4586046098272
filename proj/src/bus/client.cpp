#include "dstreamon/bus/client.hpp"

namespace dstreamon::bus {

std::unique_ptr<Client> Client::connect(const net::Endpoint& broker, Role role, std::string identity,
                                        std::chrono::milliseconds timeout) {
  net::ignore_sigpipe();
  std::unique_ptr<Client> c(new Client(net::connect_tcp(broker, timeout)));
  c->send(encode_hello(role, identity));
  return c;
}

Client::Client(net::Fd fd) : fd_(std::move(fd)) {
  reader_ = std::thread([this] { read_loop(); });
}

Client::~Client() { close(); }

void Client::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  fd_.shutdown();
  cv_.notify_all();
  if (reader_.joinable()) reader_.join();
}

bool Client::connected() const {
  std::lock_guard lk(mu_);
  return !closed_;
}

void Client::send(const Bytes& frame) {
  std::lock_guard lk(write_mu_);
  if (!connected() || !net::write_all(fd_.get(), frame)) throw net::NetError("bus connection lost");
}

std::uint64_t Client::publish(std::string_view topic, packet::CaptureTime ts, std::string_view payload) {
  MonitoringEvent ev{std::string(topic), seq_ + 1, ts, std::string(payload)};
  send(encode_pub(ev));
  return ++seq_;
}

void Client::subscribe(std::string_view prefix) { send(encode_sub(prefix)); }

bool Client::sync(std::chrono::milliseconds timeout) {
  std::uint64_t token = ++next_token_;
  try {
    send(encode_ping(token));
  } catch (const net::NetError&) {
    return false;
  }
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, timeout, [&] { return last_pong_ >= token || closed_; }) && last_pong_ >= token;
}

std::optional<MonitoringEvent> Client::next(std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, timeout, [&] { return !inbox_.empty() || closed_; });
  if (inbox_.empty()) return std::nullopt;
  auto ev = std::move(inbox_.front());
  inbox_.pop_front();
  return ev;
}

void Client::read_loop() {
  try {
    while (auto f = read_frame(fd_.get())) {
      switch (f->kind) {
        case FrameKind::Pub: {
          auto ev = decode_pub(f->body);
          std::lock_guard lk(mu_);
          inbox_.push_back(std::move(ev));
          break;
        }
        case FrameKind::Ping: {
          auto pong = encode_pong(decode_token(f->body));
          std::lock_guard lk(write_mu_);
          net::write_all(fd_.get(), pong);
          continue;
        }
        case FrameKind::Pong: {
          auto t = decode_token(f->body);
          std::lock_guard lk(mu_);
          last_pong_ = std::max(last_pong_, t);
          break;
        }
        default:
          throw ProtocolError("unexpected frame from broker");
      }
      cv_.notify_all();
    }
  } catch (const std::exception&) {
  }
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

}  // namespace dstreamon::bus
