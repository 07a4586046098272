#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dstreamon/common/bytes.hpp"
#include "dstreamon/packet/packet.hpp"
#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::bus {

/// Wire format, every integer big-endian, strings u16-length-prefixed:
///   u32 length (bytes after this field) | u8 kind | body
///   HELLO  u8 role | str identity
///   SUB    str topic_prefix
///   PUB    str topic | u64 seq | u64 ts_micros | payload (rest of frame)
///   PING   u64 token            PONG  u64 token (echoed)
enum class FrameKind : std::uint8_t { Hello = 1, Sub = 2, Pub = 3, Ping = 4, Pong = 5 };

enum class Role : std::uint8_t { Publisher = 1, Subscriber = 2, Both = 3 };

inline constexpr std::uint32_t kMaxFrameBytes = 1u << 20;
inline constexpr std::uint16_t kDefaultPort = 7500;

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MonitoringEvent {
  std::string topic;
  std::uint64_t seq = 0;
  packet::CaptureTime ts;
  std::string payload;
  bool operator==(const MonitoringEvent&) const = default;
};

/// "probe/<probe_id>/<severity>/<label>"
std::string make_topic(std::string_view probe_id, xfsm::Severity severity, std::string_view label);

/// Byte-prefix filter used by the broker.
inline bool matches(std::string_view prefix, std::string_view topic) {
  return topic.substr(0, prefix.size()) == prefix;
}

struct Frame {
  FrameKind kind = FrameKind::Ping;
  Bytes body;
};

Bytes encode_hello(Role role, std::string_view identity);
Bytes encode_sub(std::string_view prefix);
Bytes encode_pub(const MonitoringEvent& ev);
Bytes encode_ping(std::uint64_t token);
Bytes encode_pong(std::uint64_t token);

struct Hello {
  Role role;
  std::string identity;
};

/// Body decoders; throw ProtocolError on malformed bodies.
Hello decode_hello(const Bytes& body);
std::string decode_sub(const Bytes& body);
MonitoringEvent decode_pub(const Bytes& body);
std::uint64_t decode_token(const Bytes& body);

/// Blocking read of one frame. nullopt on orderly close between frames;
/// ProtocolError on oversize or unknown kind; net::NetError mid-frame.
std::optional<Frame> read_frame(int fd);

}  // namespace dstreamon::bus
