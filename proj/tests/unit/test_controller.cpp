#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dstreamon/compiler/programs.hpp"
#include "dstreamon/controller/controller.hpp"
#include "dstreamon/controller/event_log.hpp"
#include "dstreamon/controller/lifecycle.hpp"
#include "dstreamon/packet/pcap.hpp"
#include "dstreamon/packet/synth.hpp"
#include "support/live_controller.hpp"
#include "support/temp_dir.hpp"

using namespace dstreamon;
using namespace dstreamon::controller;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

bus::MonitoringEvent event(std::string topic, std::uint64_t seq, std::string payload = "x") {
  return {std::move(topic), seq, packet::CaptureTime{1'700'000'000'000'000ULL + seq}, std::move(payload)};
}

std::string synflood_trace(const testing::TempDir& dir, std::uint32_t syns) {
  auto t = packet::synthesize(
      {packet::SynFlood{packet::Ipv4{0x0A000042}, packet::Ipv4{0x0A000001}, 80, syns, 1000}, 1});
  auto path = dir.file("flood-" + std::to_string(syns) + ".pcap");
  packet::write_pcap(path, t);
  return path;
}

/// Polls until the probe leaves `running` or the timeout passes.
std::string await_settled(testing::LiveController& lc, const std::string& id, std::chrono::milliseconds timeout = 10s) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string s;
  while (std::chrono::steady_clock::now() < deadline) {
    s = lc.call("GET", "/api/probes/" + id).body.at("lifecycle").get<std::string>();
    if (s != "running") break;
    std::this_thread::sleep_for(20ms);
  }
  return s;
}

}  // namespace

TEST_CASE("lifecycle edge set is exactly the declared one") {
  int legal = 0;
  for (auto s : kAllLifecycles) {
    for (auto c : kAllCommands) {
      auto next = apply(s, c);
      auto expected = testing::expected_target(std::string(to_string(s)), std::string(to_string(c)));
      CAPTURE(to_string(s));
      CAPTURE(to_string(c));
      CHECK(next.has_value() == (expected != nullptr));
      if (next && expected) CHECK(to_string(*next) == expected);
      legal += next.has_value();
    }
  }
  CHECK(legal == 8);
  CHECK(observable(Lifecycle::Running, Lifecycle::Failed));
  CHECK(observable(Lifecycle::Running, Lifecycle::Stopped));
  CHECK_FALSE(observable(Lifecycle::Stopped, Lifecycle::Failed));
  CHECK_FALSE(observable(Lifecycle::Installed, Lifecycle::Failed));
  for (auto s : kAllLifecycles) CHECK(parse_lifecycle(to_string(s)) == s);
}

TEST_CASE("event log: dense offsets, queries, pagination and reopen") {
  testing::TempDir dir;
  auto path = dir.file("events.log");
  {
    EventLog log(path);
    CHECK(log.last_offset() == 0);
    CHECK(log.query("", 0, 100).empty());
    for (std::uint64_t i = 1; i <= 7; ++i) {
      auto topic = i % 2 ? "probe/p1/alert/a" : "probe/p2/info/b";
      CHECK(log.append(event(topic, i, "n=" + std::to_string(i)), "probe/p" + std::to_string(2 - i % 2)) == i);
    }
    auto p1 = log.query("probe/p1/", 0, 100);
    REQUIRE(p1.size() == 4);
    CHECK(p1[0].offset == 1);
    CHECK(p1[3].offset == 7);
    CHECK(log.query("probe/p1/", 3, 100).front().offset == 5);
    CHECK(log.query("probe/p1/", 0, 2).size() == 2);
    CHECK(log.query("", 7, 10).empty());
    CHECK(log.query("", 100, 10).empty());

    // limit=2 pages with an advancing since rebuild the whole log.
    std::vector<std::uint64_t> seen;
    std::uint64_t since = 0;
    for (;;) {
      auto page = log.query("", since, 2);
      if (page.empty()) break;
      for (auto& r : page) seen.push_back(r.offset);
      since = page.back().offset;
    }
    CHECK(seen == std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6, 7});
  }
  EventLog reopened(path);
  CHECK(reopened.last_offset() == 7);
  auto all = reopened.query("", 0, 100);
  CHECK(all[2].event.payload == "n=3");
  CHECK(all[2].publisher == "probe/p1");
  CHECK(reopened.append(event("t", 8), "x") == 8);
}

TEST_CASE("event log: a torn final line is dropped, other corruption refuses to load") {
  testing::TempDir dir;
  auto path = dir.file("events.log");
  {
    EventLog log(path);
    log.append(event("a", 1), "p");
    log.append(event("b", 2), "p");
  }
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"offset":3,"topic":"c","se)";
  }
  {
    EventLog log(path);
    CHECK(log.last_offset() == 2);
    CHECK(log.append(event("c", 3), "p") == 3);
  }
  EventLog again(path);
  CHECK(again.last_offset() == 3);
  CHECK(again.query("c", 0, 10).size() == 1);

  auto bad = dir.file("gap.log");
  {
    std::ofstream out(bad);
    out << to_json(EventLogRecord{1, event("a", 1), "p", 0}).dump() << "\n";
    out << to_json(EventLogRecord{3, event("a", 2), "p", 0}).dump() << "\n";
  }
  CHECK_THROWS_AS(EventLog{bad}, std::runtime_error);
}

TEST_CASE("event log record JSON round trip") {
  EventLogRecord r{42, event("probe/p1/alert/x", 9, "flow=1.2.3.4/5.6.7.8"), "probe/p1", 123};
  CHECK(record_from_json(to_json(r)) == r);
  CHECK(to_json(r)["ts"] == "1700000000.000009");
}

TEST_CASE("config upload: versioning, validation and persistence") {
  testing::LiveController lc;
  auto r1 = lc.call("POST", "/api/configs", std::string(programs::synflood_dsl()), "application/xml");
  REQUIRE(r1.status == 201);
  CHECK(r1.body["program_id"] == "synflood");
  CHECK(r1.body["version"] == 1);
  auto r2 = lc.call("POST", "/api/configs", std::string(programs::synflood_dsl()), "application/xml");
  REQUIRE(r2.status == 201);
  CHECK(r2.body["version"] == 2);
  CHECK(r2.body["checksum"] == r1.body["checksum"]);

  auto bad = lc.call("POST", "/api/configs", "<program id=\"x\"><states initial=\"A\"/></program>", "application/xml");
  CHECK(bad.status == 422);
  REQUIRE(bad.body["errors"].is_array());
  CHECK_FALSE(bad.body["errors"].empty());
  CHECK(bad.body["errors"][0].contains("path"));

  auto unsafe = std::string(programs::synflood_dsl());
  unsafe.replace(unsafe.find("id=\"synflood\""), 13, "id=\"../evil\"");
  CHECK(lc.call("POST", "/api/configs", unsafe, "application/xml").status == 422);

  auto listed = lc.call("GET", "/api/configs").body;
  REQUIRE(listed.size() == 2);
  CHECK(!std::filesystem::exists(std::filesystem::path(lc.data_dir()) / "configs" / "x"));

  lc.restart();
  auto after = lc.call("GET", "/api/configs").body;
  CHECK(after == listed);
  auto r3 = lc.call("POST", "/api/configs", std::string(programs::portscan_dsl()), "application/xml");
  CHECK(r3.body["version"] == 1);
  CHECK(lc.call("POST", "/api/configs", std::string(programs::synflood_dsl()), "application/xml").body["version"] == 3);
}

TEST_CASE("HTTP API stops promptly even when stopped right after starting") {
  testing::TempDir dir;
  ControllerOptions o;
  o.data_dir = dir.file("data");
  o.bus_listen = {"127.0.0.1", 0};
  Controller ctl(o);
  ctl.start();
  for (int i = 0; i < 50; ++i) {
    HttpApi api(ctl);
    CHECK(api.start("127.0.0.1", 0) > 0);
    api.stop();
  }
  ctl.shutdown();
}

TEST_CASE("HTTP API errors") {
  testing::LiveController lc;
  CHECK(lc.call("GET", "/api/probes").body == json::array());
  CHECK(lc.call("GET", "/api/events?prefix=").body == json::array());
  auto health = lc.call("GET", "/api/health");
  CHECK(health.status == 200);
  CHECK(health.body["status"] == "ok");
  CHECK(health.body["http_port"] == lc.port());

  CHECK(lc.post("/api/probes/nope/start").status == 404);
  CHECK(lc.call("DELETE", "/api/probes/nope").status == 404);
  CHECK(lc.call("GET", "/api/probes/nope").status == 404);
  CHECK(lc.call("POST", "/api/probes", "{not json").status == 400);
  CHECK(lc.post("/api/probes", json::object()).status == 400);
  CHECK(lc.post("/api/probes", {{"probe_id", "a/b"}}).status == 400);
  CHECK(lc.post("/api/probes", {{"probe_id", "p1"}, {"host_label", "h"}}).status == 201);
  auto dup = lc.post("/api/probes", {{"probe_id", "p1"}});
  CHECK(dup.status == 409);

  auto early = lc.post("/api/probes/p1/start");
  CHECK(early.status == 409);
  CHECK(early.body["error"].get<std::string>().find("illegal transition") != std::string::npos);
  CHECK(early.body["current_state"] == "registered");
  CHECK(lc.call("GET", "/api/probes/p1").body["lifecycle"] == "registered");

  // Missing config and malformed attach are reported once the transition is legal.
  auto no_cfg = lc.post("/api/probes/p1/install",
                        {{"program_id", "ghost"}, {"version", 1}, {"attach", {{"mode", "direct"}, {"source", "/x"}}}});
  CHECK(no_cfg.status == 404);
  auto bad_attach =
      lc.post("/api/probes/p1/install", {{"program_id", "ghost"}, {"attach", {{"mode", "sideways"}, {"source", "x"}}}});
  CHECK(bad_attach.status == 400);
  lc.call("POST", "/api/configs", std::string(programs::synflood_dsl()), "application/xml");
  auto mirrored_file = lc.post("/api/probes/p1/install",
                               {{"program_id", "synflood"}, {"attach", {{"mode", "mirrored"}, {"source", "/x.pcap"}}}});
  CHECK(mirrored_file.status == 400);
  CHECK(lc.call("GET", "/api/probes/p1").body["lifecycle"] == "registered");

  CHECK(lc.call("GET", "/api/nothing").status == 404);
  CHECK(lc.call("GET", "/api/events?since=abc").status == 400);

  httplib::Client c("127.0.0.1", lc.port());
  auto ui = c.Get("/ui/");
  REQUIRE(ui);
  CHECK(ui->status == 200);
  CHECK(ui->body.find("/api/events/stream") != std::string::npos);
}

TEST_CASE("probe lifecycle happy path runs the probe and logs its events") {
  testing::LiveController lc;
  auto trace = synflood_trace(lc.scratch(), 6);
  REQUIRE(lc.call("POST", "/api/configs", std::string(programs::synflood_dsl()), "application/xml").status == 201);
  std::vector<std::string> seen;
  auto step = [&](const testing::LiveController::Reply& r) {
    REQUIRE(r.status < 300);
    seen.push_back(r.body["lifecycle"].get<std::string>());
  };
  step(lc.post("/api/probes", {{"probe_id", "p1"}, {"host_label", "edge-1"}}));
  step(lc.post("/api/probes/p1/install",
               {{"program_id", "synflood"}, {"version", 1}, {"attach", {{"mode", "direct"}, {"source", trace}}}}));
  auto dir = std::filesystem::path(lc.data_dir()) / "probes" / "p1";
  CHECK(std::filesystem::exists(dir / "artifact.dsmc"));
  CHECK(std::filesystem::exists(dir / "probe.conf"));
  step(lc.post("/api/probes/p1/start"));
  CHECK(await_settled(lc, "p1") == "stopped");
  seen.push_back("stopped");
  step(lc.call("DELETE", "/api/probes/p1"));
  CHECK(seen == std::vector<std::string>{"registered", "installed", "running", "stopped", "removed"});
  CHECK_FALSE(std::filesystem::exists(dir));

  auto events = lc.call("GET", "/api/events?prefix=probe/p1/").body;
  REQUIRE(events.size() == 2);
  CHECK(events[0]["topic"] == "probe/p1/alert/synflood");
  CHECK(events[0]["payload"].get<std::string>().rfind("flow=10.0.0.66/10.0.0.1 syn_count=5", 0) == 0);
  CHECK(events[1]["topic"] == "probe/p1/log/eof");
  CHECK(events[1]["payload"] == "packets_processed=6 events_published=1 packets_skipped=0");
  auto last = lc.call("GET", "/api/probes/p1").body;
  CHECK(last["lifecycle"] == "removed");
  CHECK(lc.post("/api/probes", {{"probe_id", "p1"}}).status == 409);
}

TEST_CASE("exhaustive (state, command) driver matches the declared edges") {
  testing::LiveController lc;
  testing::LifecycleDriver driver(lc);
  for (const std::string state : testing::kStateNames) {
    for (const std::string cmd : testing::kCommandNames) {
      CAPTURE(state);
      CAPTURE(cmd);
      auto id = state + "-" + cmd;
      REQUIRE(driver.reach(id, state));
      REQUIRE(driver.lifecycle(id) == state);
      auto r = driver.command(id, cmd);
      if (auto target = testing::expected_target(state, cmd)) {
        CHECK(r.status == 200);
        CHECK(r.body["lifecycle"] == target);
        CHECK(driver.lifecycle(id) == target);
      } else {
        CHECK(r.status == 409);
        CHECK(r.body["current_state"] == state);
        CHECK(r.body["error"].get<std::string>().find("illegal transition") != std::string::npos);
        CHECK(driver.lifecycle(id) == state);
      }
    }
  }
}

TEST_CASE("random command sequences never leave the declared edge set") {
  testing::LiveController lc;
  testing::LifecycleDriver driver(lc);
  std::mt19937_64 rng(7);
  const std::vector<std::string> ids = {"a", "b", "c"};
  for (const auto& id : ids) REQUIRE(driver.reach(id, "registered"));
  std::map<std::string, std::string> state;
  for (const auto& id : ids) state[id] = "registered";
  for (int step = 0; step < 60; ++step) {
    const auto& id = ids[rng() % ids.size()];
    std::string before = driver.lifecycle(id);
    CHECK(testing::allowed_edge(state[id], before));  // observed drift (exit/kill)
    if (rng() % 8 == 0 && before == "running") {
      REQUIRE(driver.kill_and_await(id));
    } else {
      driver.command(id, testing::kCommandNames[rng() % 4]);
    }
    std::string after = driver.lifecycle(id);
    CAPTURE(before);
    CAPTURE(after);
    CHECK(testing::allowed_edge(before, after));
    state[id] = after;
  }
}

TEST_CASE("a probe killed externally is marked failed by the next poll") {
  testing::LiveController lc;
  testing::LifecycleDriver driver(lc);
  REQUIRE(driver.reach("k", "running"));
  REQUIRE(driver.kill_and_await("k"));
  auto d = lc.call("GET", "/api/probes/k").body;
  CHECK(d["pid"].is_null());
  CHECK(d["reason"].get<std::string>().find("signal 9") != std::string::npos);
  CHECK(lc.post("/api/probes/k/start").status == 409);
  CHECK(lc.call("DELETE", "/api/probes/k").status == 200);
}

TEST_CASE("stop halts a running probe cleanly and reports its final status") {
  testing::LiveController lc;
  testing::LifecycleDriver driver(lc);
  REQUIRE(driver.reach("s", "running"));
  auto t0 = std::chrono::steady_clock::now();
  auto r = lc.post("/api/probes/s/stop");
  CHECK(std::chrono::steady_clock::now() - t0 < 5s);
  CHECK(r.status == 200);
  CHECK(r.body["lifecycle"] == "stopped");
  CHECK(r.body["pid"].is_null());
  CHECK(r.body["last_status"]["state"] == "stopped");
  // Restartable: a fresh process starts from scratch.
  auto again = lc.post("/api/probes/s/start");
  CHECK(again.status == 200);
  CHECK(again.body["pid"].is_number());
  CHECK(lc.post("/api/probes/s/stop").body["lifecycle"] == "stopped");
}

TEST_CASE("controller restart preserves registry and log; running probes become failed") {
  testing::LiveController lc;
  auto trace = synflood_trace(lc.scratch(), 6);
  {
    testing::LifecycleDriver driver(lc);
    REQUIRE(driver.reach("reg", "registered"));
    REQUIRE(driver.reach("inst", "installed"));
    REQUIRE(driver.reach("stp", "stopped"));
    REQUIRE(driver.reach("gone", "removed"));
    REQUIRE(lc.post("/api/probes", {{"probe_id", "ran"}}).status == 201);
    REQUIRE(lc.post("/api/probes/ran/install", {{"program_id", "synflood"},
                                                {"attach", {{"mode", "direct"}, {"source", trace}}}})
                .status == 200);
    REQUIRE(lc.post("/api/probes/ran/start").status == 200);
    REQUIRE(await_settled(lc, "ran") == "stopped");
    REQUIRE(driver.reach("live", "running"));

    auto before = lc.call("GET", "/api/probes").body;
    auto events_before = lc.call("GET", "/api/events").body;
    REQUIRE(events_before.size() == 2);

    // Load a copy of the on-disk state while a probe still runs: exactly
    // what a crashed controller leaves behind.
    namespace fs = std::filesystem;
    fs::path copy = lc.data_dir() + "-copy";
    fs::create_directories(copy);
    fs::copy_file(fs::path(lc.data_dir()) / "registry.json", copy / "registry.json");
    fs::copy_file(fs::path(lc.data_dir()) / "events.log", copy / "events.log");
    testing::LiveController reloaded(copy.string());
    auto after = reloaded.call("GET", "/api/probes").body;
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
      CAPTURE(before[i]["probe_id"]);
      CHECK(after[i]["probe_id"] == before[i]["probe_id"]);
      CHECK(after[i]["artifact"] == before[i]["artifact"]);
      CHECK(after[i]["attach"] == before[i]["attach"]);
      if (before[i]["lifecycle"] == "running") {
        CHECK(after[i]["lifecycle"] == "failed");
        CHECK(after[i]["pid"].is_null());
      } else {
        CHECK(after[i]["lifecycle"] == before[i]["lifecycle"]);
      }
    }
    CHECK(reloaded.call("GET", "/api/events").body == events_before);
    reloaded.halt();
    fs::remove_all(copy);
  }
}

TEST_CASE("event stream: backlog after since, then live records, prefix filtered") {
  testing::LiveController lc;
  auto& ctl = lc.ctl();
  auto client = bus::Client::connect({"127.0.0.1", ctl.bus_port()}, bus::Role::Publisher, "probe/t");
  client->publish("probe/t/info/a", packet::CaptureTime{1}, "one");
  client->publish("probe/u/info/a", packet::CaptureTime{2}, "skip");
  client->publish("probe/t/alert/b", packet::CaptureTime{3}, "two");
  REQUIRE(client->sync());

  auto replay = ctl.stream_events("probe/t/", 1);
  auto live = ctl.stream_events("probe/t/");
  client->publish("probe/t/log/c", packet::CaptureTime{4}, "three");
  REQUIRE(client->sync());

  auto r1 = replay->next(2s);
  REQUIRE(r1);
  CHECK(r1->event.payload == "two");
  auto r2 = replay->next(2s);
  REQUIRE(r2);
  CHECK(r2->event.payload == "three");
  CHECK(r2->offset == 4);
  CHECK_FALSE(replay->next(50ms));

  auto l1 = live->next(2s);
  REQUIRE(l1);
  CHECK(l1->event.payload == "three");
  CHECK_FALSE(live->next(50ms));
  ctl.close_stream(replay);
  ctl.close_stream(live);
  CHECK(live->closed());

  // Over HTTP: NDJSON, one record per line.
  httplib::Client c("127.0.0.1", lc.port());
  std::string got;
  auto res = c.Get("/api/events/stream?prefix=probe/t/&since=0", [&](const char* d, std::size_t n) {
    got.append(d, n);
    return std::count(got.begin(), got.end(), '\n') < 3;
  });
  std::istringstream lines(got);
  std::vector<std::string> payloads;
  for (std::string line; std::getline(lines, line);) payloads.push_back(json::parse(line)["payload"]);
  CHECK(payloads == std::vector<std::string>{"one", "two", "three"});
}
