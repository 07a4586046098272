#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dstreamon/bus/frame.hpp"
#include "dstreamon/packet/source.hpp"
#include "dstreamon/probe/config.hpp"
#include "dstreamon/probe/publisher.hpp"
#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::probe {

enum class ProbeState { Installed, Running, Stopped, Failed };

std::string_view to_string(ProbeState s);
std::optional<ProbeState> parse_probe_state(std::string_view s);

struct ProbeStatus {
  ProbeState state = ProbeState::Installed;
  std::uint64_t packets_processed = 0;
  std::uint64_t events_published = 0;
  std::uint64_t packets_skipped = 0;
  std::optional<std::uint64_t> started_at_us;  // wall clock, Unix microseconds
  std::string reason;                          // set when failed

  bool operator==(const ProbeStatus&) const = default;
};

nlohmann::json to_json(const ProbeStatus& s);
ProbeStatus status_from_json(const nlohmann::json& j);

namespace exit_code {
inline constexpr int kClean = 0;
inline constexpr int kConfig = 2;
inline constexpr int kArtifact = 3;
inline constexpr int kBus = 4;
}  // namespace exit_code

/// Topic of the terminal event a probe publishes when its input is exhausted.
std::string eof_topic(std::string_view probe_id);

/// Bus events (without sequence numbers) a probe running `program` publishes
/// for `packets`, excluding the terminal eof event.
std::vector<bus::MonitoringEvent> probe_events(const xfsm::XfsmProgram& program, std::string_view probe_id,
                                               std::span<const packet::PacketRecord> packets);

struct RuntimeOptions {
  /// Snapshot file rewritten while running and on exit; empty disables it.
  std::string status_path;
  PublisherOptions publisher;
  std::chrono::milliseconds flush_timeout{30'000};
};

/// The probe: loads the artifact, attaches to the source, runs the engine and
/// publishes every emitted event; obeys STATUS and STOP.
class ProbeRuntime {
 public:
  ProbeRuntime(ProbeConfig config, RuntimeOptions opts = {});

  /// Runs to exhaustion or stop; returns the process exit code.
  int run();

  ProbeStatus status() const;
  /// Halts intake; run() then flushes pending events and returns.
  void request_stop();
  /// Control channel: "STATUS" / "STOP" -> "OK <json>" | "ERR <message>".
  std::string handle_command(std::string_view line);

 private:
  int finish(ProbeState state, int code, std::string reason = {});
  void publish_status(bool force);

  ProbeConfig config_;
  RuntimeOptions opts_;

  mutable std::mutex mu_;
  std::condition_variable done_cv_;
  ProbeStatus status_;
  bool started_ = false;
  bool done_ = false;
  std::atomic<bool> stop_{false};
  std::unique_ptr<packet::PacketSource> source_;  // guarded by mu_ for interrupt()
  std::chrono::steady_clock::time_point last_status_write_{};
};

}  // namespace dstreamon::probe
