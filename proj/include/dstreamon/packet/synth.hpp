#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dstreamon/packet/packet.hpp"

namespace dstreamon::packet {

struct SynFlood {
  Ipv4 attacker_ip;
  Ipv4 victim_ip;
  std::uint16_t victim_port = 80;
  std::uint32_t count = 1;
  std::uint64_t inter_arrival_us = 1000;
};

struct PortScan {
  Ipv4 scanner_ip;
  Ipv4 victim_ip;
  std::uint16_t first_port = 1;
  std::uint16_t last_port = 1024;  // inclusive
  std::uint64_t inter_arrival_us = 1000;
};

struct Benign {
  std::uint32_t flow_count = 10;
  std::uint32_t packets_per_flow = 4;  // data packets after the handshake
  std::uint64_t inter_arrival_us = 1000;
};

using Scenario = std::variant<SynFlood, PortScan, Benign>;

struct TraceSpec {
  Scenario scenario;
  std::uint64_t seed = 1;
  CaptureTime start = CaptureTime::from_parts(1'700'000'000, 0);
};

/// Throws std::invalid_argument when the spec violates its invariants
/// (count >= 1, non-empty ascending port range, inter-arrival > 0).
void validate(const TraceSpec& spec);

/// Deterministic in (spec, seed). Timestamps start at spec.start and advance
/// by the scenario inter-arrival for every emitted packet.
std::vector<PacketRecord> synthesize(const TraceSpec& spec);

/// Parses the CLI/config stanza form, e.g.
///   "syn_flood attacker=10.0.0.66 victim=10.0.0.1 port=80 count=6 gap_us=1000"
///   "port_scan scanner=10.0.0.66 victim=10.0.0.1 ports=80-99"
///   "benign flows=20 packets=4"
/// plus an optional "seed=N" token. Throws std::invalid_argument on errors.
TraceSpec parse_trace_spec(const std::string& stanza);

}  // namespace dstreamon::packet
