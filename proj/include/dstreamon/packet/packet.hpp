#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dstreamon::packet {

/// Capture time in microseconds since the Unix epoch.
struct CaptureTime {
  std::uint64_t micros = 0;

  static constexpr CaptureTime from_parts(std::uint64_t sec, std::uint32_t usec) {
    return CaptureTime{sec * 1'000'000ULL + usec};
  }
  constexpr std::uint64_t sec() const { return micros / 1'000'000ULL; }
  constexpr std::uint32_t usec() const { return static_cast<std::uint32_t>(micros % 1'000'000ULL); }

  /// "<sec>.<usec>" with six fractional digits.
  std::string to_string() const;

  auto operator<=>(const CaptureTime&) const = default;
};

struct Ipv4 {
  std::uint32_t value = 0;  // host order, a.b.c.d == (a << 24) | ...

  static std::optional<Ipv4> parse(std::string_view dotted);
  std::string to_string() const;

  auto operator<=>(const Ipv4&) const = default;
};

namespace proto {
inline constexpr std::uint8_t kIcmp = 1;
inline constexpr std::uint8_t kTcp = 6;
inline constexpr std::uint8_t kUdp = 17;
}  // namespace proto

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flag

/// Header summary of one captured IPv4 packet.
/// Ports are 0 unless ip_proto is TCP or UDP; tcp_flags is 0 unless TCP.
struct PacketRecord {
  CaptureTime ts;
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint8_t ip_proto = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tcp_flags = 0;
  std::uint32_t wire_len = 0;

  bool has_ports() const { return ip_proto == proto::kTcp || ip_proto == proto::kUdp; }
  bool well_formed() const {
    if (!has_ports() && (src_port != 0 || dst_port != 0)) return false;
    if (ip_proto != proto::kTcp && tcp_flags != 0) return false;
    return true;
  }

  bool operator==(const PacketRecord&) const = default;
};

}  // namespace dstreamon::packet
