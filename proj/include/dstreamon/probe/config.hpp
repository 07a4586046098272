#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "dstreamon/net/socket.hpp"

namespace dstreamon::probe {

enum class AttachMode { Direct, Mirrored };
enum class Pacing { AsFastAsPossible, HonorTimestamps };

std::string_view to_string(AttachMode m);
std::string_view to_string(Pacing p);

/// Probe invocation settings, stored as a key=value text file:
///   probe_id=p1
///   attach=direct|mirrored
///   source=<pcap path>|tcp://host:port     (mirrored requires a tap endpoint)
///   bus_address=127.0.0.1:7500
///   artifact_path=/path/to/program.dsmc
///   replay_pacing=as_fast_as_possible|honor_timestamps
/// Blank lines and lines starting with '#' are ignored.
struct ProbeConfig {
  std::string probe_id;
  AttachMode attach = AttachMode::Direct;
  std::string source;
  net::Endpoint bus_address{"127.0.0.1", 7500};
  std::string artifact_path;
  Pacing replay_pacing = Pacing::AsFastAsPossible;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws ConfigError naming the offending line or key.
ProbeConfig parse_probe_config(std::string_view text);
ProbeConfig load_probe_config(const std::string& path);
std::string to_text(const ProbeConfig& c);

}  // namespace dstreamon::probe
