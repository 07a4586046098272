#include "dstreamon/controller/controller.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "dstreamon/packet/source.hpp"

namespace fs = std::filesystem;

namespace dstreamon::controller {
namespace {

std::optional<probe::AttachMode> parse_attach_mode(std::string_view s) {
  if (s == "direct") return probe::AttachMode::Direct;
  if (s == "mirrored") return probe::AttachMode::Mirrored;
  return std::nullopt;
}

std::optional<probe::Pacing> parse_pacing(std::string_view s) {
  if (s == "as_fast_as_possible") return probe::Pacing::AsFastAsPossible;
  if (s == "honor_timestamps") return probe::Pacing::HonorTimestamps;
  return std::nullopt;
}

std::optional<probe::ProbeStatus> read_status(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return probe::status_from_json(nlohmann::json::parse(in));
  } catch (const std::exception&) {
    return std::nullopt;  // torn or partially written; the next poll retries
  }
}

nlohmann::json illegal(const ProbeDescriptor& d, Command cmd) {
  return {{"current_state", to_string(d.lifecycle)}, {"command", to_string(cmd)}};
}

}  // namespace

// ---- JSON -------------------------------------------------------------------

nlohmann::json to_json(const AttachSpec& a) {
  return {{"mode", probe::to_string(a.mode)}, {"source", a.source}, {"pacing", probe::to_string(a.pacing)}};
}

AttachSpec attach_from_json(const nlohmann::json& j) {
  AttachSpec a;
  if (j.is_string()) {
    // Shorthand: "direct:<source>" or "mirrored:<tcp://host:port>".
    auto s = j.get<std::string>();
    auto colon = s.find(':');
    if (colon == std::string::npos) throw ApiError(400, "attach must be '<mode>:<source>' or an object");
    auto mode = parse_attach_mode(s.substr(0, colon));
    if (!mode) throw ApiError(400, "unknown attach mode '" + s.substr(0, colon) + "'");
    a.mode = *mode;
    a.source = s.substr(colon + 1);
    return a;
  }
  if (!j.is_object()) throw ApiError(400, "attach must be an object {mode, source[, pacing]}");
  auto mode_s = j.value("mode", std::string{});
  auto mode = parse_attach_mode(mode_s);
  if (!mode) throw ApiError(400, "unknown attach mode '" + mode_s + "' (expected direct or mirrored)");
  a.mode = *mode;
  if (!j.contains("source") || !j["source"].is_string()) throw ApiError(400, "attach.source is required");
  a.source = j["source"].get<std::string>();
  if (j.contains("pacing")) {
    auto p = parse_pacing(j["pacing"].get<std::string>());
    if (!p) throw ApiError(400, "unknown pacing (expected as_fast_as_possible or honor_timestamps)");
    a.pacing = *p;
  }
  return a;
}

nlohmann::json to_json(const ProbeDescriptor& d) {
  nlohmann::json j = {{"probe_id", d.probe_id},
                      {"host_label", d.host_label},
                      {"attach", nullptr},
                      {"artifact", nullptr},
                      {"lifecycle", to_string(d.lifecycle)},
                      {"pid", nullptr},
                      {"last_status", nullptr},
                      {"reason", d.reason}};
  if (d.attach) j["attach"] = to_json(*d.attach);
  if (d.artifact) j["artifact"] = {{"program_id", d.artifact->program_id}, {"version", d.artifact->version}};
  if (d.pid) j["pid"] = *d.pid;
  if (d.last_status) j["last_status"] = probe::to_json(*d.last_status);
  return j;
}

ProbeDescriptor descriptor_from_json(const nlohmann::json& j) {
  ProbeDescriptor d;
  d.probe_id = j.at("probe_id").get<std::string>();
  d.host_label = j.value("host_label", std::string{});
  if (j.contains("attach") && !j["attach"].is_null()) d.attach = attach_from_json(j["attach"]);
  if (j.contains("artifact") && !j["artifact"].is_null())
    d.artifact = ArtifactRef{j["artifact"].at("program_id").get<std::string>(),
                             j["artifact"].at("version").get<std::uint32_t>()};
  auto lc = parse_lifecycle(j.at("lifecycle").get<std::string>());
  if (!lc) throw std::runtime_error("unknown lifecycle '" + j.at("lifecycle").get<std::string>() + "'");
  d.lifecycle = *lc;
  if (j.contains("pid") && !j["pid"].is_null()) d.pid = j["pid"].get<int>();
  if (j.contains("last_status") && !j["last_status"].is_null())
    d.last_status = probe::status_from_json(j["last_status"]);
  d.reason = j.value("reason", std::string{});
  return d;
}

ApiError::ApiError(int s, const std::string& message, nlohmann::json extra)
    : std::runtime_error(message), status(s), body(std::move(extra)) {
  body["error"] = message;
}

std::string default_probe_binary() {
  std::error_code ec;
  auto self = fs::read_symlink("/proc/self/exe", ec);
  if (ec) return "dstreamon-probe";
  return (self.parent_path() / "dstreamon-probe").string();
}

// ---- EventStream --------------------------------------------------------------

std::optional<EventLogRecord> EventStream::next(std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  auto r = std::move(queue_.front());
  queue_.pop_front();
  return r;
}

bool EventStream::closed() const {
  std::lock_guard lk(mu_);
  return closed_ && queue_.empty();
}

void EventStream::push(const EventLogRecord& r) {
  if (!bus::matches(prefix_, r.event.topic)) return;
  {
    std::lock_guard lk(mu_);
    if (closed_) return;
    if (queue_.size() >= kMaxQueued) {
      // A reader this far behind is gone or stuck; end its stream.
      closed_ = true;
    } else {
      queue_.push_back(r);
    }
  }
  cv_.notify_all();
}

void EventStream::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

// ---- Controller ----------------------------------------------------------------

Controller::Controller(ControllerOptions opts)
    : opts_([&] {
        fs::create_directories(fs::path(opts.data_dir) / "probes");
        if (opts.probe_binary.empty()) opts.probe_binary = default_probe_binary();
        opts.broker.listen = opts.bus_listen;
        return std::move(opts);
      }()),
      configs_(opts_.data_dir),
      log_((fs::path(opts_.data_dir) / "events.log").string()),
      broker_(opts_.broker) {
  load_registry();
  log_.add_listener([this](const EventLogRecord& r) {
    std::lock_guard lk(streams_mu_);
    for (auto& [ptr, s] : streams_) s->push(r);
  });
  // The log is the first consumer of every routed event.
  broker_.set_sink([this](const bus::MonitoringEvent& ev, const std::string& publisher) {
    try {
      log_.append(ev, publisher);
    } catch (const std::exception& e) {
      spdlog::error("event log append failed: {}", e.what());
    }
  });
}

Controller::~Controller() { shutdown(); }

std::uint16_t Controller::start() {
  auto port = broker_.start();
  {
    std::lock_guard lk(monitor_mu_);
    started_ = true;
  }
  monitor_ = std::thread([this] { monitor_loop(); });
  return port;
}

void Controller::shutdown() {
  {
    std::lock_guard lk(monitor_mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  monitor_cv_.notify_all();
  if (monitor_.joinable()) monitor_.join();
  {
    std::lock_guard lk(mu_);
    bool changed = false;
    for (auto& [id, e] : probes_) {
      if (e.child) {
        stop_child(e);
        changed = true;
      }
    }
    if (changed) persist();
  }
  broker_.stop();
  std::lock_guard lk(streams_mu_);
  for (auto& [ptr, s] : streams_) s->close();
  streams_.clear();
}

std::uint16_t Controller::bus_port() const { return broker_.port(); }

void Controller::monitor_loop() {
  std::unique_lock lk(monitor_mu_);
  while (!stopping_) {
    monitor_cv_.wait_for(lk, opts_.poll_interval, [&] { return stopping_; });
    if (stopping_) break;
    lk.unlock();
    try {
      poll_probes();
    } catch (const std::exception& e) {
      spdlog::error("probe monitor: {}", e.what());
    }
    lk.lock();
  }
}

// ---- configs -------------------------------------------------------------------

ConfigStore::UploadResult Controller::upload_config(std::string_view dsl) {
  auto r = configs_.upload(dsl);
  if (auto* c = std::get_if<StoredConfig>(&r))
    spdlog::info("stored config {} revision {} (checksum {:08x})", c->program_id, c->version, c->checksum);
  return r;
}

std::vector<StoredConfig> Controller::list_configs() const { return configs_.list(); }

// ---- registry --------------------------------------------------------------------

std::string Controller::probe_dir(const std::string& probe_id) const {
  return (fs::path(opts_.data_dir) / "probes" / probe_id).string();
}

Controller::Entry& Controller::entry(const std::string& probe_id) {
  auto it = probes_.find(probe_id);
  if (it == probes_.end()) throw ApiError(404, "unknown probe '" + probe_id + "'");
  return it->second;
}

const Controller::Entry& Controller::entry(const std::string& probe_id) const {
  auto it = probes_.find(probe_id);
  if (it == probes_.end()) throw ApiError(404, "unknown probe '" + probe_id + "'");
  return it->second;
}

Lifecycle Controller::transition(const Entry& e, Command cmd) {
  auto next = apply(e.desc.lifecycle, cmd);
  if (!next)
    throw ApiError(409,
                   "illegal transition: cannot " + std::string(to_string(cmd)) + " probe '" + e.desc.probe_id +
                       "' in state " + std::string(to_string(e.desc.lifecycle)),
                   illegal(e.desc, cmd));
  return *next;
}

void Controller::persist() {
  auto arr = nlohmann::json::array();
  for (const auto& [id, e] : probes_) arr.push_back(to_json(e.desc));
  nlohmann::json doc = {{"probes", arr}};
  write_file_atomic((fs::path(opts_.data_dir) / "registry.json").string(), doc.dump(2) + "\n");
}

void Controller::load_registry() {
  auto path = fs::path(opts_.data_dir) / "registry.json";
  std::ifstream in(path);
  if (!in) return;
  auto doc = nlohmann::json::parse(in);
  bool changed = false;
  for (const auto& j : doc.at("probes")) {
    Entry e;
    e.desc = descriptor_from_json(j);
    if (e.desc.lifecycle == Lifecycle::Running) {
      // The process belonged to a previous controller instance; its control
      // channel is gone, so it exits on its own.
      e.desc.lifecycle = Lifecycle::Failed;
      e.desc.reason = "controller restarted while the probe was running";
      if (auto s = read_status((fs::path(probe_dir(e.desc.probe_id)) / "status.json").string()))
        e.desc.last_status = s;
      changed = true;
    }
    e.desc.pid.reset();
    probes_.emplace(e.desc.probe_id, std::move(e));
  }
  if (changed) persist();
}

ProbeDescriptor Controller::add_probe(const std::string& probe_id, const std::string& host_label) {
  if (!storable_program_id(probe_id))
    throw ApiError(400, "invalid probe_id '" + probe_id + "': use letters, digits, '_', '-' and '.'");
  std::lock_guard lk(mu_);
  if (auto it = probes_.find(probe_id); it != probes_.end())
    throw ApiError(409, "probe '" + probe_id + "' already exists (state " +
                            std::string(to_string(it->second.desc.lifecycle)) + ")",
                   {{"current_state", to_string(it->second.desc.lifecycle)}});
  Entry e;
  e.desc.probe_id = probe_id;
  e.desc.host_label = host_label.empty() ? "localhost" : host_label;
  auto d = e.desc;
  probes_.emplace(probe_id, std::move(e));
  persist();
  return d;
}

ProbeDescriptor Controller::install(const std::string& probe_id, const ArtifactRef& artifact,
                                    const AttachSpec& attach_in) {
  std::lock_guard lk(mu_);
  auto& e = entry(probe_id);
  auto next = transition(e, Command::Install);
  auto stored = configs_.find(artifact.program_id, artifact.version);
  if (!stored)
    throw ApiError(404, "unknown config " + artifact.program_id + " version " + std::to_string(artifact.version));
  AttachSpec attach = attach_in;
  if (attach.source.empty()) throw ApiError(400, "attach.source is required");
  if (attach.mode == probe::AttachMode::Mirrored && !packet::is_tap_uri(attach.source))
    throw ApiError(400, "mirrored attach needs a tap endpoint (tcp://host:port)");
  if (!packet::is_tap_uri(attach.source)) attach.source = fs::absolute(attach.source).lexically_normal().string();

  auto dir = probe_dir(probe_id);
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "artifact.dsmc").string(),
                    read_file(configs_.artifact_path(artifact.program_id, artifact.version)));
  e.desc.artifact = artifact;
  e.desc.attach = attach;
  write_probe_config(e);
  e.desc.lifecycle = next;
  persist();
  return e.desc;
}

void Controller::write_probe_config(const Entry& e) {
  probe::ProbeConfig c;
  c.probe_id = e.desc.probe_id;
  c.attach = e.desc.attach->mode;
  c.source = e.desc.attach->source;
  c.replay_pacing = e.desc.attach->pacing;
  auto host = opts_.bus_listen.host;
  if (host.empty() || host == "0.0.0.0") host = "127.0.0.1";
  c.bus_address = net::Endpoint{host, broker_.port() ? broker_.port() : opts_.bus_listen.port};
  auto dir = fs::path(probe_dir(e.desc.probe_id));
  c.artifact_path = (fs::absolute(dir) / "artifact.dsmc").string();
  write_file_atomic((dir / "probe.conf").string(), probe::to_text(c));
}

ProbeDescriptor Controller::start_probe(const std::string& probe_id) {
  std::lock_guard lk(mu_);
  auto& e = entry(probe_id);
  auto next = transition(e, Command::Start);
  auto dir = fs::path(probe_dir(probe_id));
  write_probe_config(e);  // the bus port may differ from install time
  std::error_code ec;
  fs::remove(dir / "status.json", ec);
  SpawnSpec spec;
  spec.exe = opts_.probe_binary;
  spec.args = {"--config", fs::absolute(dir / "probe.conf").string(), "--exit-on-control-eof"};
  spec.cwd = fs::absolute(dir).string();
  spec.stderr_path = (fs::absolute(dir) / "probe.log").string();
  try {
    e.child = ChildProcess::spawn(spec);
  } catch (const SpawnError& err) {
    throw ApiError(500, std::string("cannot start probe: ") + err.what());
  }
  e.desc.lifecycle = next;
  e.desc.pid = e.child->pid();
  e.desc.last_status.reset();
  e.desc.reason.clear();
  persist();
  spdlog::info("probe {} started (pid {})", probe_id, e.child->pid());
  return e.desc;
}

void Controller::stop_child(Entry& e) {
  auto deadline = std::chrono::steady_clock::now() + opts_.stop_timeout;
  auto reply = e.child->request("STOP", opts_.stop_timeout);
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
  auto exit = e.child->wait_for(std::max(left, std::chrono::milliseconds(0)));
  auto status_path = (fs::path(probe_dir(e.desc.probe_id)) / "status.json").string();
  if (auto s = read_status(status_path)) e.desc.last_status = s;
  else if (reply && reply->rfind("OK ", 0) == 0) {
    try {
      e.desc.last_status = probe::status_from_json(nlohmann::json::parse(reply->substr(3)));
    } catch (const std::exception&) {
    }
  }
  if (!exit) {
    e.child->kill();
    e.desc.lifecycle = Lifecycle::Failed;
    e.desc.reason = "probe did not stop within " + std::to_string(opts_.stop_timeout.count()) + " ms; killed";
  } else if (exit->clean()) {
    e.desc.lifecycle = Lifecycle::Stopped;
  } else {
    e.desc.lifecycle = Lifecycle::Failed;
    e.desc.reason = "probe " + exit->describe();
    if (e.desc.last_status && !e.desc.last_status->reason.empty()) e.desc.reason += ": " + e.desc.last_status->reason;
  }
  e.child.reset();
  e.desc.pid.reset();
}

ProbeDescriptor Controller::stop_probe(const std::string& probe_id) {
  std::lock_guard lk(mu_);
  auto& e = entry(probe_id);
  transition(e, Command::Stop);
  if (e.child) {
    stop_child(e);
  } else {
    e.desc.lifecycle = Lifecycle::Stopped;
  }
  persist();
  spdlog::info("probe {} {}", probe_id, to_string(e.desc.lifecycle));
  return e.desc;
}

ProbeDescriptor Controller::remove_probe(const std::string& probe_id) {
  std::lock_guard lk(mu_);
  auto& e = entry(probe_id);
  auto next = transition(e, Command::Remove);
  if (e.child) stop_child(e);
  std::error_code ec;
  fs::remove_all(probe_dir(probe_id), ec);
  if (ec) spdlog::warn("cannot remove {}: {}", probe_dir(probe_id), ec.message());
  e.desc.lifecycle = next;
  e.desc.reason.clear();
  persist();
  return e.desc;
}

void Controller::require(const std::string& probe_id, Command cmd) const {
  std::lock_guard lk(mu_);
  transition(entry(probe_id), cmd);
}

ProbeDescriptor Controller::get_probe(const std::string& probe_id) const {
  std::lock_guard lk(mu_);
  return entry(probe_id).desc;
}

std::vector<ProbeDescriptor> Controller::list_probes() const {
  std::lock_guard lk(mu_);
  std::vector<ProbeDescriptor> out;
  for (const auto& [id, e] : probes_) out.push_back(e.desc);
  return out;
}

void Controller::observe(Entry& e) {
  auto status_path = (fs::path(probe_dir(e.desc.probe_id)) / "status.json").string();
  auto exit = e.child->poll();
  if (auto s = read_status(status_path)) e.desc.last_status = s;
  if (!exit) return;
  Lifecycle next = exit->clean() ? Lifecycle::Stopped : Lifecycle::Failed;
  if (!observable(e.desc.lifecycle, next)) return;
  e.desc.lifecycle = next;
  if (next == Lifecycle::Failed) {
    e.desc.reason = "probe " + exit->describe();
    if (e.desc.last_status && !e.desc.last_status->reason.empty()) e.desc.reason += ": " + e.desc.last_status->reason;
  }
  e.child.reset();
  e.desc.pid.reset();
  spdlog::info("probe {} exited ({}), now {}", e.desc.probe_id, exit->describe(), to_string(next));
}

void Controller::poll_probes() {
  std::lock_guard lk(mu_);
  bool changed = false;
  for (auto& [id, e] : probes_) {
    if (!e.child) continue;
    auto before = e.desc;
    observe(e);
    changed |= e.desc != before;
  }
  if (changed) persist();
}

// ---- events ----------------------------------------------------------------------

std::vector<EventLogRecord> Controller::query_events(std::string_view prefix, std::uint64_t since,
                                                     std::size_t limit) const {
  return log_.query(prefix, since, limit);
}

std::shared_ptr<EventStream> Controller::stream_events(std::string prefix, std::optional<std::uint64_t> since) {
  auto s = std::make_shared<EventStream>();
  s->prefix_ = std::move(prefix);
  {
    std::lock_guard lk(streams_mu_);
    streams_[s.get()] = s;
  }
  if (since) {
    // Live records may already be queued; splice the backlog in front of them
    // without duplicates.
    auto backlog = log_.query(s->prefix_, *since, std::numeric_limits<std::size_t>::max());
    std::uint64_t covered = backlog.empty() ? *since : backlog.back().offset;
    std::lock_guard lk(s->mu_);
    std::deque<EventLogRecord> merged(backlog.begin(), backlog.end());
    for (auto& r : s->queue_)
      if (r.offset > covered) merged.push_back(std::move(r));
    s->queue_ = std::move(merged);
  }
  s->cv_.notify_all();
  return s;
}

void Controller::close_stream(const std::shared_ptr<EventStream>& s) {
  std::lock_guard lk(streams_mu_);
  streams_.erase(s.get());
  s->close();
}

nlohmann::json Controller::health() const {
  std::size_t running = 0, total = 0;
  {
    std::lock_guard lk(mu_);
    for (const auto& [id, e] : probes_) {
      ++total;
      running += e.desc.lifecycle == Lifecycle::Running;
    }
  }
  auto st = broker_.stats();
  return {{"status", "ok"},
          {"bus_port", broker_.port()},
          {"probes", total},
          {"probes_running", running},
          {"events", log_.last_offset()},
          {"bus", {{"connections", st.connections}, {"routed", st.routed}, {"delivered", st.delivered}}}};
}

}  // namespace dstreamon::controller
