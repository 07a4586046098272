#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dstreamon/common/bytes.hpp"
#include "dstreamon/packet/packet.hpp"

namespace dstreamon::packet {

/// The capture cannot be read at all (bad magic, truncated global header).
struct PcapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Streaming pcap reader. Accepts microsecond and nanosecond captures in
/// either byte order; yields IPv4 packets only. Frames that are not IPv4,
/// are non-first fragments, or are too short for the headers we need are
/// counted in skipped() and otherwise ignored.
class PcapReader {
 public:
  explicit PcapReader(std::istream& in);

  std::optional<PacketRecord> next();

  std::uint64_t skipped() const { return skipped_; }
  std::uint32_t link_type() const { return link_type_; }

 private:
  std::optional<PacketRecord> decode(CaptureTime ts, std::uint32_t orig_len,
                                     std::span<const std::uint8_t> frame) const;

  std::istream& in_;
  bool swapped_ = false;
  bool nanos_ = false;
  std::uint32_t link_type_ = 0;
  std::uint64_t skipped_ = 0;
  Bytes frame_;
};

struct Capture {
  std::vector<PacketRecord> packets;
  std::uint64_t skipped = 0;
};

Capture read_pcap(const std::string& path);
Capture read_pcap(std::span<const std::uint8_t> bytes);

/// Writes little-endian microsecond Ethernet captures. Each record carries
/// synthesized link/IP/transport headers only; orig_len is the record's
/// wire_len, so payload bytes are implied rather than stored.
class PcapWriter {
 public:
  explicit PcapWriter(std::ostream& out);

  /// Throws std::invalid_argument if the record is malformed or its
  /// wire_len cannot hold the synthesized headers.
  void write(const PacketRecord& pkt);
  void flush();

 private:
  std::ostream& out_;
};

/// Global header the writer emits (little-endian, microseconds, Ethernet).
Bytes pcap_global_header();
/// One complete record (record header + synthesized frame). Throws like
/// PcapWriter::write.
Bytes pcap_record(const PacketRecord& pkt);

/// Bytes of Ethernet + IPv4 + transport headers the writer emits for `pkt`.
std::uint32_t header_bytes(const PacketRecord& pkt);

Bytes encode_pcap(std::span<const PacketRecord> packets);
void write_pcap(const std::string& path, std::span<const PacketRecord> packets);

}  // namespace dstreamon::packet
