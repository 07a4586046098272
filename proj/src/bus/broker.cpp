#include "dstreamon/bus/broker.hpp"

#include <spdlog/spdlog.h>

#include <deque>
#include <set>

namespace dstreamon::bus {

struct Broker::Conn {
  std::uint64_t id = 0;
  net::Fd fd;
  std::thread reader;
  std::thread writer;

  // Guarded by Broker::route_mu_.
  bool hello = false;
  Role role = Role::Publisher;
  std::string identity;
  std::set<std::string> prefixes;
  std::uint64_t last_seq = 0;

  std::mutex mu;  // guards out
  std::condition_variable cv;
  std::deque<std::shared_ptr<const Bytes>> out;
  std::atomic<bool> dead{false};
  std::atomic<int> missed{0};

  bool subscribes() const { return hello && role != Role::Publisher; }
  bool publishes() const { return hello && role != Role::Subscriber; }
};

Broker::Broker(BrokerOptions opts) : opts_(std::move(opts)) {}

Broker::~Broker() { stop(); }

void Broker::set_sink(BrokerSink sink) { sink_ = std::move(sink); }

std::uint16_t Broker::start() {
  net::ignore_sigpipe();
  listener_ = net::listen_tcp(opts_.listen);
  port_ = net::local_port(listener_);
  accept_thread_ = std::thread([this] { accept_loop(); });
  keepalive_thread_ = std::thread([this] { keepalive_loop(); });
  spdlog::info("bus broker listening on {}:{}", opts_.listen.host, port_);
  return port_;
}

void Broker::stop() {
  if (stopping_.exchange(true)) return;
  keepalive_cv_.notify_all();
  if (accept_thread_.joinable()) accept_thread_.join();
  if (keepalive_thread_.joinable()) keepalive_thread_.join();
  std::vector<std::shared_ptr<Conn>> all;
  {
    std::lock_guard lk(route_mu_);
    for (auto& [id, c] : conns_) all.push_back(c);
    all.insert(all.end(), finished_.begin(), finished_.end());
    finished_.clear();
  }
  for (auto& c : all) drop(*c);
  for (auto& c : all)
    if (c->reader.joinable()) c->reader.join();
  {
    std::lock_guard lk(route_mu_);
    finished_.clear();
  }
  listener_.reset();
}

BrokerStats Broker::stats() const {
  std::lock_guard lk(stats_mu_);
  return stats_;
}

void Broker::accept_loop() {
  while (!stopping_) {
    net::Fd fd = net::accept_for(listener_, std::chrono::milliseconds(100));
    reap_finished();
    if (!fd) continue;
    auto c = std::make_shared<Conn>();
    c->fd = std::move(fd);
    {
      std::lock_guard lk(route_mu_);
      c->id = next_id_++;
      conns_[c->id] = c;
    }
    {
      std::lock_guard lk(stats_mu_);
      ++stats_.connections;
    }
    c->reader = std::thread([this, c] { serve(c); });
  }
}

void Broker::reap_finished() {
  std::vector<std::shared_ptr<Conn>> done;
  {
    std::lock_guard lk(route_mu_);
    done.swap(finished_);
  }
  for (auto& c : done)
    if (c->reader.joinable()) c->reader.join();
}

void Broker::keepalive_loop() {
  std::unique_lock lk(keepalive_mu_);
  std::uint64_t token = 0;
  while (!keepalive_cv_.wait_for(lk, opts_.ping_interval, [this] { return stopping_.load(); })) {
    std::vector<std::shared_ptr<Conn>> snapshot;
    {
      std::lock_guard rl(route_mu_);
      for (auto& [id, c] : conns_) snapshot.push_back(c);
    }
    auto ping = std::make_shared<const Bytes>(encode_ping(++token));
    for (auto& c : snapshot) {
      if (c->missed >= opts_.max_missed_pings) {
        spdlog::warn("bus: dropping connection {} after {} unanswered pings", c->id, c->missed.load());
        {
          std::lock_guard sl(stats_mu_);
          ++stats_.keepalive_drops;
        }
        drop(*c);
        continue;
      }
      ++c->missed;
      enqueue(*c, ping, true);
    }
  }
}

void Broker::drop(Conn& c) {
  c.dead = true;
  c.fd.shutdown();
  c.cv.notify_all();
}

void Broker::enqueue(Conn& c, std::shared_ptr<const Bytes> frame, bool control) {
  if (c.dead) return;
  bool overflow = false;
  {
    std::lock_guard lk(c.mu);
    if (!control && c.out.size() >= opts_.subscriber_queue) overflow = true;
    else c.out.push_back(std::move(frame));
  }
  if (overflow) {
    spdlog::warn("bus: subscriber {} ({}) exceeded its {}-frame buffer; disconnecting", c.id, c.identity,
                 opts_.subscriber_queue);
    {
      std::lock_guard sl(stats_mu_);
      ++stats_.slow_disconnects;
    }
    drop(c);
    return;
  }
  c.cv.notify_one();
}

void Broker::serve(const std::shared_ptr<Conn>& c) {
  c->writer = std::thread([this, c] {
    for (;;) {
      std::shared_ptr<const Bytes> next;
      {
        std::unique_lock lk(c->mu);
        c->cv.wait(lk, [&] { return c->dead || !c->out.empty(); });
        if (c->dead) return;
        next = std::move(c->out.front());
        c->out.pop_front();
      }
      if (!net::write_all(c->fd.get(), *next)) {
        drop(*c);
        return;
      }
    }
  });

  try {
    while (!c->dead) {
      auto f = read_frame(c->fd.get());
      if (!f) break;
      c->missed = 0;
      handle(c, *f);
    }
  } catch (const ProtocolError& e) {
    spdlog::warn("bus: protocol violation on connection {}: {}", c->id, e.what());
    std::lock_guard sl(stats_mu_);
    ++stats_.protocol_errors;
  } catch (const std::exception& e) {
    spdlog::debug("bus: connection {} closed: {}", c->id, e.what());
  }

  drop(*c);
  if (c->writer.joinable()) c->writer.join();
  std::lock_guard lk(route_mu_);
  conns_.erase(c->id);
  // Never let this thread hold the last reference to its own Conn.
  finished_.push_back(c);
}

void Broker::handle(const std::shared_ptr<Conn>& c, const Frame& f) {
  switch (f.kind) {
    case FrameKind::Hello: {
      auto h = decode_hello(f.body);
      std::lock_guard lk(route_mu_);
      if (c->hello) throw ProtocolError("duplicate HELLO");
      c->hello = true;
      c->role = h.role;
      c->identity = h.identity;
      return;
    }
    case FrameKind::Sub: {
      auto prefix = decode_sub(f.body);
      std::lock_guard lk(route_mu_);
      if (!c->subscribes()) throw ProtocolError("SUB without a subscriber HELLO");
      c->prefixes.insert(prefix);  // duplicates are a no-op
      return;
    }
    case FrameKind::Pub:
      route(c, decode_pub(f.body));
      return;
    case FrameKind::Ping:
      // Queued behind everything already routed to this connection, so the
      // PONG doubles as a delivery barrier for the client.
      enqueue(*c, std::make_shared<const Bytes>(encode_pong(decode_token(f.body))), true);
      return;
    case FrameKind::Pong:
      decode_token(f.body);
      return;
  }
}

void Broker::route(const std::shared_ptr<Conn>& from, MonitoringEvent ev) {
  {
    std::lock_guard lk(route_mu_);
    if (!from->publishes()) throw ProtocolError("PUB without a publisher HELLO");
    if (ev.seq <= from->last_seq)
      throw ProtocolError("PUB seq " + std::to_string(ev.seq) + " not above " + std::to_string(from->last_seq));
    from->last_seq = ev.seq;
    if (sink_) sink_(ev, from->identity);
    auto frame = std::make_shared<const Bytes>(encode_pub(ev));
    std::uint64_t delivered = 0;
    for (auto& [id, c] : conns_) {
      if (!c->subscribes() || c->dead) continue;
      bool hit = false;
      for (const auto& p : c->prefixes)
        if (matches(p, ev.topic)) {
          hit = true;
          break;
        }
      if (!hit) continue;
      enqueue(*c, frame, false);
      ++delivered;
    }
    std::lock_guard sl(stats_mu_);
    ++stats_.routed;
    stats_.delivered += delivered;
  }
}

}  // namespace dstreamon::bus
