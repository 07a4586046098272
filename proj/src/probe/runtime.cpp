#include "dstreamon/probe/runtime.hpp"

#include <spdlog/spdlog.h>

#include <thread>

#include "dstreamon/common/bytes.hpp"
#include "dstreamon/compiler/artifact.hpp"
#include "dstreamon/xfsm/engine.hpp"

namespace dstreamon::probe {
namespace {

std::uint64_t now_us() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(ProbeState s) {
  switch (s) {
    case ProbeState::Installed: return "installed";
    case ProbeState::Running: return "running";
    case ProbeState::Stopped: return "stopped";
    case ProbeState::Failed: return "failed";
  }
  return "failed";
}

std::optional<ProbeState> parse_probe_state(std::string_view s) {
  for (auto st : {ProbeState::Installed, ProbeState::Running, ProbeState::Stopped, ProbeState::Failed})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

nlohmann::json to_json(const ProbeStatus& s) {
  nlohmann::json j = {{"state", to_string(s.state)},
                      {"packets_processed", s.packets_processed},
                      {"events_published", s.events_published},
                      {"packets_skipped", s.packets_skipped},
                      {"started_at_us", nullptr}};
  if (s.started_at_us) j["started_at_us"] = *s.started_at_us;
  if (!s.reason.empty()) j["reason"] = s.reason;
  return j;
}

ProbeStatus status_from_json(const nlohmann::json& j) {
  ProbeStatus s;
  s.state = parse_probe_state(j.at("state").get<std::string>()).value_or(ProbeState::Failed);
  s.packets_processed = j.value("packets_processed", std::uint64_t{0});
  s.events_published = j.value("events_published", std::uint64_t{0});
  s.packets_skipped = j.value("packets_skipped", std::uint64_t{0});
  if (j.contains("started_at_us") && !j["started_at_us"].is_null())
    s.started_at_us = j["started_at_us"].get<std::uint64_t>();
  s.reason = j.value("reason", std::string{});
  return s;
}

std::string eof_topic(std::string_view probe_id) { return "probe/" + std::string(probe_id) + "/log/eof"; }

std::vector<bus::MonitoringEvent> probe_events(const xfsm::XfsmProgram& program, std::string_view probe_id,
                                               std::span<const packet::PacketRecord> packets) {
  xfsm::Engine engine(std::make_shared<xfsm::XfsmProgram>(program));
  std::vector<bus::MonitoringEvent> out;
  for (const auto& p : packets)
    for (auto& e : engine.step(p))
      out.push_back({bus::make_topic(probe_id, e.severity, e.label), 0, e.ts, std::move(e.payload)});
  return out;
}

ProbeRuntime::ProbeRuntime(ProbeConfig config, RuntimeOptions opts)
    : config_(std::move(config)), opts_(std::move(opts)) {}

ProbeStatus ProbeRuntime::status() const {
  std::lock_guard lk(mu_);
  return status_;
}

void ProbeRuntime::request_stop() {
  stop_ = true;
  std::lock_guard lk(mu_);
  if (source_) source_->interrupt();
}

void ProbeRuntime::publish_status(bool force) {
  if (opts_.status_path.empty()) return;
  auto now = std::chrono::steady_clock::now();
  if (!force && now - last_status_write_ < std::chrono::milliseconds(100)) return;
  last_status_write_ = now;
  try {
    write_file_atomic(opts_.status_path, to_json(status()).dump() + "\n");
  } catch (const std::exception& e) {
    spdlog::warn("cannot write status file: {}", e.what());
  }
}

int ProbeRuntime::finish(ProbeState state, int code, std::string reason) {
  {
    std::lock_guard lk(mu_);
    status_.state = state;
    status_.reason = std::move(reason);
    source_.reset();
    done_ = true;
  }
  done_cv_.notify_all();
  publish_status(true);
  if (state == ProbeState::Failed) spdlog::error("probe {} failed: {}", config_.probe_id, status().reason);
  return code;
}

int ProbeRuntime::run() {
  {
    std::lock_guard lk(mu_);
    if (done_) return exit_code::kClean;  // stopped before it started
    started_ = true;
  }
  publish_status(true);
  std::shared_ptr<const xfsm::XfsmProgram> program;
  try {
    program = std::make_shared<const xfsm::XfsmProgram>(
        compiler::decompile(compiler::load_artifact(config_.artifact_path)));
  } catch (const std::exception& e) {
    return finish(ProbeState::Failed, exit_code::kArtifact, std::string("artifact: ") + e.what());
  }

  try {
    auto src = packet::open_source(config_.source);
    std::lock_guard lk(mu_);
    source_ = std::move(src);
  } catch (const std::exception& e) {
    return finish(ProbeState::Failed, exit_code::kConfig, std::string("source: ") + e.what());
  }

  if (stop_) return finish(ProbeState::Stopped, exit_code::kClean);
  BusPublisher publisher(config_.bus_address, "probe/" + config_.probe_id, opts_.publisher);
  if (!publisher.connect()) return finish(ProbeState::Failed, exit_code::kBus, publisher.error());

  {
    std::lock_guard lk(mu_);
    status_.state = ProbeState::Running;
    status_.started_at_us = now_us();
  }
  publish_status(true);
  spdlog::info("probe {} running ({} attach, source {})", config_.probe_id, to_string(config_.attach),
               config_.source);

  xfsm::Engine engine(program);
  packet::CaptureTime last_ts{};
  std::optional<packet::CaptureTime> first_ts;
  auto wall_start = std::chrono::steady_clock::now();
  bool exhausted = false;
  packet::PacketSource* src = nullptr;
  {
    std::lock_guard lk(mu_);
    src = source_.get();
  }
  try {
    while (!stop_) {
      auto pkt = src->next();
      if (!pkt) {
        exhausted = !stop_;
        break;
      }
      if (config_.replay_pacing == Pacing::HonorTimestamps) {
        if (!first_ts) first_ts = pkt->ts;
        auto due = wall_start + std::chrono::microseconds(pkt->ts.micros - std::min(pkt->ts.micros, first_ts->micros));
        while (!stop_ && std::chrono::steady_clock::now() < due)
          std::this_thread::sleep_until(std::min(due, std::chrono::steady_clock::now() + std::chrono::milliseconds(50)));
        if (stop_) break;
      }
      last_ts = pkt->ts;
      auto events = engine.step(*pkt);
      for (auto& e : events)
        if (!publisher.enqueue(bus::make_topic(config_.probe_id, e.severity, e.label), e.ts, std::move(e.payload)))
          return finish(ProbeState::Failed, exit_code::kBus, publisher.error());
      {
        std::lock_guard lk(mu_);
        ++status_.packets_processed;
        status_.events_published += events.size();
        status_.packets_skipped = src->skipped();
      }
      publish_status(false);
    }
  } catch (const std::exception& e) {
    return finish(ProbeState::Failed, exit_code::kConfig, std::string("source: ") + e.what());
  }

  ProbeStatus snap;
  {
    std::lock_guard lk(mu_);
    status_.packets_skipped = src->skipped();
    snap = status_;
  }
  if (exhausted) {
    std::string payload = "packets_processed=" + std::to_string(snap.packets_processed) +
                          " events_published=" + std::to_string(snap.events_published) +
                          " packets_skipped=" + std::to_string(snap.packets_skipped);
    if (!publisher.enqueue(eof_topic(config_.probe_id), last_ts, payload))
      return finish(ProbeState::Failed, exit_code::kBus, publisher.error());
  }
  if (!publisher.flush(opts_.flush_timeout)) return finish(ProbeState::Failed, exit_code::kBus, publisher.error());
  publisher.close();
  spdlog::info("probe {} {}: {} packets, {} events", config_.probe_id, exhausted ? "reached end of input" : "stopped",
               snap.packets_processed, snap.events_published);
  return finish(ProbeState::Stopped, exit_code::kClean);
}

std::string ProbeRuntime::handle_command(std::string_view line) {
  auto cmd = trim(line);
  if (cmd == "STATUS") return "OK " + to_json(status()).dump();
  if (cmd == "STOP") {
    request_stop();
    std::unique_lock lk(mu_);
    // Before run() starts there is nothing to flush; report stopped directly.
    if (!started_) {
      status_.state = ProbeState::Stopped;
      done_ = true;
      return "OK " + to_json(status_).dump();
    }
    done_cv_.wait(lk, [&] { return done_; });
    return "OK " + to_json(status_).dump();
  }
  return "ERR unknown command '" + cmd + "'";
}

}  // namespace dstreamon::probe
