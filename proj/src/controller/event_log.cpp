#include "dstreamon/controller/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace dstreamon::controller {

nlohmann::json to_json(const EventLogRecord& r) {
  return {{"offset", r.offset},
          {"topic", r.event.topic},
          {"seq", r.event.seq},
          {"ts_us", r.event.ts.micros},
          {"ts", r.event.ts.to_string()},
          {"payload", r.event.payload},
          {"publisher", r.publisher},
          {"received_at_us", r.received_at_us}};
}

EventLogRecord record_from_json(const nlohmann::json& j) {
  EventLogRecord r;
  r.offset = j.at("offset").get<std::uint64_t>();
  r.event.topic = j.at("topic").get<std::string>();
  r.event.seq = j.at("seq").get<std::uint64_t>();
  r.event.ts = packet::CaptureTime{j.at("ts_us").get<std::uint64_t>()};
  r.event.payload = j.at("payload").get<std::string>();
  r.publisher = j.value("publisher", std::string{});
  r.received_at_us = j.value("received_at_us", std::uint64_t{0});
  return r;
}

EventLog::EventLog(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  std::uint64_t good_bytes = 0;
  bool torn = false;
  while (in && std::getline(in, line)) {
    bool complete = !in.eof();  // getline hit '\n'
    try {
      if (!complete) throw std::runtime_error("unterminated line");
      auto rec = record_from_json(nlohmann::json::parse(line));
      if (rec.offset != records_.size() + 1)
        throw std::runtime_error("event log offsets are not dense at offset " + std::to_string(rec.offset));
      records_.push_back(std::move(rec));
      good_bytes += line.size() + 1;
    } catch (const nlohmann::json::exception& e) {
      if (complete && in.peek() != EOF)
        throw std::runtime_error("corrupt event log line " + std::to_string(records_.size() + 1) + ": " + e.what());
      torn = true;
      break;
    } catch (const std::runtime_error& e) {
      if (complete) throw;
      torn = true;
      break;
    }
  }
  in.close();
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open event log " + path_ + ": " + std::strerror(errno));
  if (torn) {
    spdlog::warn("event log: discarding torn final record after offset {}", records_.size());
    if (::ftruncate(fd_, static_cast<off_t>(good_bytes)) != 0)
      throw std::runtime_error("cannot truncate event log: " + std::string(std::strerror(errno)));
  }
  ::lseek(fd_, 0, SEEK_END);
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t EventLog::append(const bus::MonitoringEvent& ev, const std::string& publisher) {
  std::lock_guard lk(mu_);
  EventLogRecord r;
  r.offset = records_.size() + 1;
  r.event = ev;
  r.publisher = publisher;
  r.received_at_us = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
  std::string line = to_json(r).dump() + "\n";
  std::size_t off = 0;
  while (off < line.size()) {
    ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw std::runtime_error("event log write failed: " + std::string(std::strerror(errno)));
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw std::runtime_error("event log fsync failed: " + std::string(std::strerror(errno)));
  records_.push_back(r);
  for (auto& [id, l] : listeners_) l(records_.back());
  return r.offset;
}

std::vector<EventLogRecord> EventLog::query(std::string_view prefix, std::uint64_t since, std::size_t limit) const {
  std::lock_guard lk(mu_);
  std::vector<EventLogRecord> out;
  for (std::size_t i = since < records_.size() ? since : records_.size(); i < records_.size() && out.size() < limit; ++i)
    if (bus::matches(prefix, records_[i].event.topic)) out.push_back(records_[i]);
  return out;
}

std::uint64_t EventLog::last_offset() const {
  std::lock_guard lk(mu_);
  return records_.size();
}

std::uint64_t EventLog::add_listener(Listener l) {
  std::lock_guard lk(mu_);
  auto id = next_listener_++;
  listeners_[id] = std::move(l);
  return id;
}

void EventLog::remove_listener(std::uint64_t id) {
  std::lock_guard lk(mu_);
  listeners_.erase(id);
}

}  // namespace dstreamon::controller
