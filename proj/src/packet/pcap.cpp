#include "dstreamon/packet/pcap.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dstreamon::packet {
namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRaw = 101;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;
constexpr std::uint32_t kMaxCaptureLen = 256 * 1024;

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::size_t kEthernetLen = 14;
constexpr std::size_t kIpv4Len = 20;
constexpr std::size_t kTcpLen = 20;
constexpr std::size_t kUdpLen = 8;

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

std::uint32_t load_le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t load_be16(const std::uint8_t* p) { return std::uint16_t(p[0] << 8 | p[1]); }
std::uint32_t load_be32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 |
         std::uint32_t(p[3]);
}

bool read_exact(std::istream& in, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint16_t ip_checksum(std::span<const std::uint8_t> hdr) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < hdr.size(); i += 2) sum += load_be16(&hdr[i]);
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace

PcapReader::PcapReader(std::istream& in) : in_(in) {
  std::uint8_t hdr[kGlobalHeaderLen];
  if (!read_exact(in_, hdr, sizeof hdr)) throw PcapError("truncated pcap global header");
  std::uint32_t magic = load_le32(hdr);
  if (magic == kMagicMicros || magic == kMagicNanos) {
    swapped_ = false;
  } else if (bswap32(magic) == kMagicMicros || bswap32(magic) == kMagicNanos) {
    swapped_ = true;
    magic = bswap32(magic);
  } else {
    throw PcapError("bad pcap magic number");
  }
  nanos_ = magic == kMagicNanos;
  std::uint32_t link = load_le32(hdr + 20);
  link_type_ = swapped_ ? bswap32(link) : link;
}

std::optional<PacketRecord> PcapReader::next() {
  auto field = [this](const std::uint8_t* p) {
    std::uint32_t v = load_le32(p);
    return swapped_ ? bswap32(v) : v;
  };
  for (;;) {
    std::uint8_t rec[kRecordHeaderLen];
    in_.read(reinterpret_cast<char*>(rec), sizeof rec);
    auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return std::nullopt;
    if (got < sizeof rec) {
      ++skipped_;
      return std::nullopt;
    }
    std::uint32_t ts_sec = field(rec);
    std::uint32_t ts_frac = field(rec + 4);
    std::uint32_t incl_len = field(rec + 8);
    std::uint32_t orig_len = field(rec + 12);
    if (incl_len > kMaxCaptureLen) {
      // Corrupt record header; no way to resynchronise.
      ++skipped_;
      return std::nullopt;
    }
    frame_.resize(incl_len);
    if (!read_exact(in_, frame_.data(), incl_len)) {
      ++skipped_;
      return std::nullopt;
    }
    std::uint32_t usec = nanos_ ? ts_frac / 1000 : ts_frac;
    if (usec >= 1'000'000) {
      ++skipped_;
      continue;
    }
    if (auto pkt = decode(CaptureTime::from_parts(ts_sec, usec), orig_len, frame_)) return pkt;
    ++skipped_;
  }
}

std::optional<PacketRecord> PcapReader::decode(CaptureTime ts, std::uint32_t orig_len,
                                               std::span<const std::uint8_t> frame) const {
  std::size_t off = 0;
  if (link_type_ == kLinkEthernet) {
    if (frame.size() < kEthernetLen) return std::nullopt;
    std::uint16_t ethertype = load_be16(&frame[12]);
    off = kEthernetLen;
    if (ethertype == kEtherVlan) {
      if (frame.size() < off + 4) return std::nullopt;
      ethertype = load_be16(&frame[off + 2]);
      off += 4;
    }
    if (ethertype != kEtherIpv4) return std::nullopt;
  } else if (link_type_ != kLinkRaw) {
    return std::nullopt;
  }

  auto ip = frame.subspan(off);
  if (ip.size() < kIpv4Len || (ip[0] >> 4) != 4) return std::nullopt;
  std::size_t ihl = std::size_t(ip[0] & 0x0F) * 4;
  if (ihl < kIpv4Len || ip.size() < ihl) return std::nullopt;
  if ((load_be16(&ip[6]) & 0x1FFF) != 0) return std::nullopt;  // non-first fragment

  PacketRecord pkt;
  pkt.ts = ts;
  pkt.wire_len = orig_len;
  pkt.ip_proto = ip[9];
  pkt.src_ip = Ipv4{load_be32(&ip[12])};
  pkt.dst_ip = Ipv4{load_be32(&ip[16])};

  auto l4 = ip.subspan(ihl);
  if (pkt.ip_proto == proto::kTcp) {
    if (l4.size() < 14) return std::nullopt;
    pkt.src_port = load_be16(&l4[0]);
    pkt.dst_port = load_be16(&l4[2]);
    pkt.tcp_flags = l4[13];
  } else if (pkt.ip_proto == proto::kUdp) {
    if (l4.size() < 4) return std::nullopt;
    pkt.src_port = load_be16(&l4[0]);
    pkt.dst_port = load_be16(&l4[2]);
  }
  return pkt;
}

Capture read_pcap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PcapError("cannot open capture " + path);
  PcapReader reader(in);
  Capture cap;
  while (auto pkt = reader.next()) cap.packets.push_back(*pkt);
  cap.skipped = reader.skipped();
  return cap;
}

Capture read_pcap(std::span<const std::uint8_t> bytes) {
  std::istringstream in(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                        std::ios::binary);
  PcapReader reader(in);
  Capture cap;
  while (auto pkt = reader.next()) cap.packets.push_back(*pkt);
  cap.skipped = reader.skipped();
  return cap;
}

std::uint32_t header_bytes(const PacketRecord& pkt) {
  std::size_t n = kEthernetLen + kIpv4Len;
  if (pkt.ip_proto == proto::kTcp) n += kTcpLen;
  if (pkt.ip_proto == proto::kUdp) n += kUdpLen;
  return static_cast<std::uint32_t>(n);
}

Bytes pcap_global_header() {
  LeWriter w;
  w.u32(kMagicMicros);
  w.u16(2);
  w.u16(4);
  w.u32(0);  // thiszone
  w.u32(0);  // sigfigs
  w.u32(65535);
  w.u32(kLinkEthernet);
  return std::move(w).take();
}

Bytes pcap_record(const PacketRecord& pkt) {
  if (!pkt.well_formed()) throw std::invalid_argument("malformed packet record");
  std::uint32_t hdr_len = header_bytes(pkt);
  if (pkt.wire_len < hdr_len)
    throw std::invalid_argument("wire_len shorter than the packet headers");
  if (pkt.ts.sec() > 0xFFFFFFFFULL) throw std::invalid_argument("timestamp beyond 32-bit seconds");

  BeWriter frame;
  // Ethernet: locally administered placeholder MACs.
  frame.raw(std::string_view("\x02\x00\x00\x00\x00\x02\x02\x00\x00\x00\x00\x01", 12));
  frame.u16(kEtherIpv4);

  std::size_t ip_at = frame.size();
  std::uint32_t ip_total = std::min<std::uint32_t>(pkt.wire_len - kEthernetLen, 0xFFFF);
  frame.u8(0x45);
  frame.u8(0);
  frame.u16(static_cast<std::uint16_t>(ip_total));
  frame.u16(0);
  frame.u16(0x4000);  // DF
  frame.u8(64);
  frame.u8(pkt.ip_proto);
  frame.u16(0);  // checksum, patched below
  frame.u32(pkt.src_ip.value);
  frame.u32(pkt.dst_ip.value);

  if (pkt.ip_proto == proto::kTcp) {
    frame.u16(pkt.src_port);
    frame.u16(pkt.dst_port);
    frame.u32(0);  // seq
    frame.u32(0);  // ack
    frame.u8(0x50);
    frame.u8(pkt.tcp_flags);
    frame.u16(65535);
    frame.u16(0);
    frame.u16(0);
  } else if (pkt.ip_proto == proto::kUdp) {
    frame.u16(pkt.src_port);
    frame.u16(pkt.dst_port);
    frame.u16(static_cast<std::uint16_t>(std::min<std::uint32_t>(ip_total - kIpv4Len, 0xFFFF)));
    frame.u16(0);
  }

  Bytes bytes = std::move(frame).take();
  std::uint16_t csum = ip_checksum(std::span(bytes).subspan(ip_at, kIpv4Len));
  bytes[ip_at + 10] = static_cast<std::uint8_t>(csum >> 8);
  bytes[ip_at + 11] = static_cast<std::uint8_t>(csum);

  LeWriter rec;
  rec.u32(static_cast<std::uint32_t>(pkt.ts.sec()));
  rec.u32(pkt.ts.usec());
  rec.u32(static_cast<std::uint32_t>(bytes.size()));
  rec.u32(pkt.wire_len);
  rec.raw(bytes);
  return std::move(rec).take();
}

PcapWriter::PcapWriter(std::ostream& out) : out_(out) {
  Bytes h = pcap_global_header();
  out_.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size()));
}

void PcapWriter::write(const PacketRecord& pkt) {
  Bytes r = pcap_record(pkt);
  out_.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size()));
}


void PcapWriter::flush() { out_.flush(); }

Bytes encode_pcap(std::span<const PacketRecord> packets) {
  std::ostringstream out(std::ios::binary);
  PcapWriter w(out);
  for (const auto& p : packets) w.write(p);
  std::string s = out.str();
  return Bytes(s.begin(), s.end());
}

void write_pcap(const std::string& path, std::span<const PacketRecord> packets) {
  write_file_atomic(path, encode_pcap(packets));
}

}  // namespace dstreamon::packet
