#include "dstreamon/bus/frame.hpp"

#include "dstreamon/net/socket.hpp"

namespace dstreamon::bus {
namespace {

BeWriter framed(FrameKind kind) {
  BeWriter w;
  w.u32(0);
  w.u8(static_cast<std::uint8_t>(kind));
  return w;
}

Bytes finish(BeWriter&& w) {
  if (w.size() - 4 > kMaxFrameBytes) throw ProtocolError("frame exceeds 1 MiB");
  w.patch_u32(0, static_cast<std::uint32_t>(w.size() - 4));
  return std::move(w).take();
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const TruncatedInput&) {
    throw ProtocolError(std::string("truncated ") + what + " frame");
  }
}

}  // namespace

std::string make_topic(std::string_view probe_id, xfsm::Severity severity, std::string_view label) {
  std::string t = "probe/";
  t += probe_id;
  t += '/';
  t += xfsm::to_string(severity);
  t += '/';
  t += label;
  return t;
}

Bytes encode_hello(Role role, std::string_view identity) {
  auto w = framed(FrameKind::Hello);
  w.u8(static_cast<std::uint8_t>(role));
  w.str16(identity);
  return finish(std::move(w));
}

Bytes encode_sub(std::string_view prefix) {
  auto w = framed(FrameKind::Sub);
  w.str16(prefix);
  return finish(std::move(w));
}

Bytes encode_pub(const MonitoringEvent& ev) {
  auto w = framed(FrameKind::Pub);
  w.str16(ev.topic);
  w.u64(ev.seq);
  w.u64(ev.ts.micros);
  w.raw(ev.payload);
  return finish(std::move(w));
}

Bytes encode_ping(std::uint64_t token) {
  auto w = framed(FrameKind::Ping);
  w.u64(token);
  return finish(std::move(w));
}

Bytes encode_pong(std::uint64_t token) {
  auto w = framed(FrameKind::Pong);
  w.u64(token);
  return finish(std::move(w));
}

Hello decode_hello(const Bytes& body) {
  return guarded("HELLO", [&] {
    BeReader r(body);
    auto role = r.u8();
    if (role < 1 || role > 3) throw ProtocolError("HELLO with unknown role " + std::to_string(role));
    Hello h{static_cast<Role>(role), r.str16()};
    if (!r.done()) throw ProtocolError("trailing bytes in HELLO");
    return h;
  });
}

std::string decode_sub(const Bytes& body) {
  return guarded("SUB", [&] {
    BeReader r(body);
    auto s = r.str16();
    if (!r.done()) throw ProtocolError("trailing bytes in SUB");
    return s;
  });
}

MonitoringEvent decode_pub(const Bytes& body) {
  return guarded("PUB", [&] {
    BeReader r(body);
    MonitoringEvent ev;
    ev.topic = r.str16();
    ev.seq = r.u64();
    ev.ts = packet::CaptureTime{r.u64()};
    auto rest = r.take(r.remaining());
    ev.payload.assign(rest.begin(), rest.end());
    return ev;
  });
}

std::uint64_t decode_token(const Bytes& body) {
  return guarded("PING/PONG", [&] {
    BeReader r(body);
    auto t = r.u64();
    if (!r.done()) throw ProtocolError("trailing bytes in PING/PONG");
    return t;
  });
}

std::optional<Frame> read_frame(int fd) {
  std::uint8_t hdr[4];
  if (!net::read_exact(fd, hdr)) return std::nullopt;
  std::uint32_t len = BeReader(hdr).u32();
  if (len == 0) throw ProtocolError("empty frame");
  if (len > kMaxFrameBytes) throw ProtocolError("frame of " + std::to_string(len) + " bytes exceeds 1 MiB");
  Bytes buf(len);
  if (!net::read_exact(fd, buf)) throw net::NetError("connection closed mid-frame");
  std::uint8_t kind = buf[0];
  if (kind < 1 || kind > 5) throw ProtocolError("unknown frame kind " + std::to_string(kind));
  return Frame{static_cast<FrameKind>(kind), Bytes(buf.begin() + 1, buf.end())};
}

}  // namespace dstreamon::bus
