#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dstreamon/xfsm/metrics.hpp"
#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::xfsm {

/// Output of one publish action, before a probe assigns it a topic.
struct EmittedEvent {
  Severity severity = Severity::Info;
  std::string label;
  packet::CaptureTime ts;
  std::string payload;

  bool operator==(const EmittedEvent&) const = default;
};

/// Current state per encoded flow key. Flows appear once a transition fires
/// for them; until then they are implicitly in the initial state.
using FlowTable = std::map<std::string, std::uint32_t>;

/// Index of the first event definition whose predicates all hold.
std::optional<std::uint32_t> derive_event(const XfsmProgram& program, const PacketRecord& pkt);

/// Feature value at `key`: floor(scale * (metric + offset)), saturated to int64.
std::int64_t feature_value(const XfsmProgram& program, const MetricStore& metrics,
                           std::uint32_t feature, const PacketRecord& pkt);

/// Advances the machine by one packet. `program` must satisfy
/// check_invariants(); the metric store must have been built from it.
std::vector<EmittedEvent> step(const XfsmProgram& program, FlowTable& flows, MetricStore& metrics,
                               const PacketRecord& pkt);

/// One program instance with its own flow table and metric store.
class Engine {
 public:
  explicit Engine(std::shared_ptr<const XfsmProgram> program);

  std::vector<EmittedEvent> step(const PacketRecord& pkt) {
    return xfsm::step(*program_, flows_, metrics_, pkt);
  }
  std::optional<std::uint32_t> derive_event(const PacketRecord& pkt) const {
    return xfsm::derive_event(*program_, pkt);
  }
  /// State name for `pkt`'s flow (initial state for unseen flows).
  const std::string& state_of(const PacketRecord& pkt) const;

  const XfsmProgram& program() const { return *program_; }
  const FlowTable& flows() const { return flows_; }
  const MetricStore& metrics() const { return metrics_; }

 private:
  std::shared_ptr<const XfsmProgram> program_;
  FlowTable flows_;
  MetricStore metrics_;
};

}  // namespace dstreamon::xfsm
