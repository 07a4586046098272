#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "dstreamon/bus/frame.hpp"

namespace dstreamon::controller {

struct EventLogRecord {
  std::uint64_t offset = 0;  // dense, starting at 1
  bus::MonitoringEvent event;
  std::string publisher;
  std::uint64_t received_at_us = 0;

  bool operator==(const EventLogRecord&) const = default;
};

nlohmann::json to_json(const EventLogRecord& r);
EventLogRecord record_from_json(const nlohmann::json& j);

/// Append-only JSON-lines event log (one record per line, fsync per append).
/// All records are also kept in memory for queries and live streaming.
class EventLog {
 public:
  using Listener = std::function<void(const EventLogRecord&)>;

  /// Opens or creates `path`. A torn final line (crash mid-append) is
  /// discarded; any other corruption throws std::runtime_error.
  explicit EventLog(std::string path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Durably appends and notifies listeners; returns the new offset.
  std::uint64_t append(const bus::MonitoringEvent& ev, const std::string& publisher);

  /// Records with offset > since and topic starting with prefix, ascending,
  /// at most limit.
  std::vector<EventLogRecord> query(std::string_view prefix, std::uint64_t since, std::size_t limit) const;
  std::uint64_t last_offset() const;

  /// Listener runs under the log lock, in offset order; keep it short.
  std::uint64_t add_listener(Listener l);
  void remove_listener(std::uint64_t id);

 private:
  std::string path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::vector<EventLogRecord> records_;
  std::map<std::uint64_t, Listener> listeners_;
  std::uint64_t next_listener_ = 1;
};

}  // namespace dstreamon::controller
