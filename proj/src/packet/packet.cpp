#include "dstreamon/packet/packet.hpp"

#include <charconv>
#include <cstdio>

namespace dstreamon::packet {

std::string CaptureTime::to_string() const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%llu.%06u", static_cast<unsigned long long>(sec()), usec());
  return buf;
}

std::optional<Ipv4> Ipv4::parse(std::string_view dotted) {
  std::uint32_t out = 0;
  const char* p = dotted.data();
  const char* end = dotted.data() + dotted.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc{} || next == p || octet > 255 || next - p > 3) return std::nullopt;
    out = (out << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4{out};
}

std::string Ipv4::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", value >> 24, (value >> 16) & 0xFF,
                (value >> 8) & 0xFF, value & 0xFF);
  return buf;
}

}  // namespace dstreamon::packet
