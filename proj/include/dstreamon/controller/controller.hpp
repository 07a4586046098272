#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dstreamon/bus/broker.hpp"
#include "dstreamon/controller/config_store.hpp"
#include "dstreamon/controller/event_log.hpp"
#include "dstreamon/controller/lifecycle.hpp"
#include "dstreamon/controller/process.hpp"
#include "dstreamon/probe/config.hpp"
#include "dstreamon/probe/runtime.hpp"

namespace dstreamon::controller {

struct AttachSpec {
  probe::AttachMode mode = probe::AttachMode::Direct;
  std::string source;  // pcap path or tcp://host:port
  probe::Pacing pacing = probe::Pacing::AsFastAsPossible;

  bool operator==(const AttachSpec&) const = default;
};

struct ArtifactRef {
  std::string program_id;
  std::uint32_t version = 0;

  bool operator==(const ArtifactRef&) const = default;
};

struct ProbeDescriptor {
  std::string probe_id;
  std::string host_label;
  std::optional<AttachSpec> attach;
  std::optional<ArtifactRef> artifact;
  Lifecycle lifecycle = Lifecycle::Registered;
  std::optional<int> pid;
  std::optional<probe::ProbeStatus> last_status;
  std::string reason;  // why the probe failed, if it did

  bool operator==(const ProbeDescriptor&) const = default;
};

nlohmann::json to_json(const AttachSpec& a);
AttachSpec attach_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbeDescriptor& d);
ProbeDescriptor descriptor_from_json(const nlohmann::json& j);

/// An API-level failure with its HTTP status and a JSON body ({"error": ...}).
struct ApiError : std::runtime_error {
  ApiError(int status, const std::string& message, nlohmann::json extra = nlohmann::json::object());
  int status;
  nlohmann::json body;
};

struct ControllerOptions {
  std::string data_dir = "dstreamon-data";
  net::Endpoint bus_listen{"127.0.0.1", bus::kDefaultPort};
  bus::BrokerOptions broker;  // listen is taken from bus_listen
  /// Probe executable; empty means `dstreamon-probe` next to the running binary.
  std::string probe_binary;
  std::chrono::milliseconds poll_interval{200};
  std::chrono::milliseconds stop_timeout{5000};
};

/// Live view of log records appended after subscription (optionally preceded
/// by a backlog), filtered by topic prefix.
class EventStream {
 public:
  /// nullopt on timeout or once closed.
  std::optional<EventLogRecord> next(std::chrono::milliseconds timeout);
  bool closed() const;

 private:
  friend class Controller;
  static constexpr std::size_t kMaxQueued = 100'000;
  void push(const EventLogRecord& r);
  void close();

  std::string prefix_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<EventLogRecord> queue_;
  bool closed_ = false;
};

class Controller {
 public:
  explicit Controller(ControllerOptions opts);
  ~Controller();
  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  /// Starts the broker and the monitor thread; returns the bus port.
  std::uint16_t start();
  /// Stops every running probe, the broker and the monitor.
  void shutdown();

  std::uint16_t bus_port() const;
  const ControllerOptions& options() const { return opts_; }

  ConfigStore::UploadResult upload_config(std::string_view dsl);
  std::vector<StoredConfig> list_configs() const;

  ProbeDescriptor add_probe(const std::string& probe_id, const std::string& host_label);
  ProbeDescriptor install(const std::string& probe_id, const ArtifactRef& artifact, const AttachSpec& attach);
  ProbeDescriptor start_probe(const std::string& probe_id);
  ProbeDescriptor stop_probe(const std::string& probe_id);
  ProbeDescriptor remove_probe(const std::string& probe_id);
  /// Throws the not-found / illegal-transition ApiError `cmd` would raise now.
  void require(const std::string& probe_id, Command cmd) const;
  ProbeDescriptor get_probe(const std::string& probe_id) const;
  std::vector<ProbeDescriptor> list_probes() const;
  /// Applies observed process exits and status snapshots now.
  void poll_probes();

  std::vector<EventLogRecord> query_events(std::string_view prefix, std::uint64_t since, std::size_t limit) const;
  /// Live stream; when `since` is set, records after it are delivered first.
  std::shared_ptr<EventStream> stream_events(std::string prefix, std::optional<std::uint64_t> since = std::nullopt);
  void close_stream(const std::shared_ptr<EventStream>& s);
  std::uint64_t last_offset() const { return log_.last_offset(); }

  nlohmann::json health() const;

 private:
  struct Entry {
    ProbeDescriptor desc;
    std::unique_ptr<ChildProcess> child;
  };

  Entry& entry(const std::string& probe_id);
  const Entry& entry(const std::string& probe_id) const;
  static Lifecycle transition(const Entry& e, Command cmd);
  std::string probe_dir(const std::string& probe_id) const;
  void write_probe_config(const Entry& e);
  void stop_child(Entry& e);
  void observe(Entry& e);
  void persist();
  void load_registry();
  void monitor_loop();

  ControllerOptions opts_;
  ConfigStore configs_;
  EventLog log_;
  bus::Broker broker_;

  mutable std::mutex mu_;  // registry
  std::map<std::string, Entry> probes_;

  std::mutex streams_mu_;
  std::map<EventStream*, std::shared_ptr<EventStream>> streams_;

  std::mutex monitor_mu_;
  std::condition_variable monitor_cv_;
  bool stopping_ = false;
  bool started_ = false;
  std::thread monitor_;
};

/// Resolves `dstreamon-probe` next to the running executable.
std::string default_probe_binary();

}  // namespace dstreamon::controller
