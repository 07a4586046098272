#include <doctest.h>

#include <thread>

#include "dstreamon/bus/broker.hpp"
#include "dstreamon/bus/client.hpp"
#include "dstreamon/compiler/artifact.hpp"
#include "dstreamon/compiler/dsl.hpp"
#include "dstreamon/compiler/programs.hpp"
#include "dstreamon/packet/synth.hpp"
#include "dstreamon/probe/runtime.hpp"
#include "support/temp_dir.hpp"

using namespace dstreamon;
using namespace dstreamon::probe;
using namespace std::chrono_literals;

namespace {

struct Harness {
  Harness() {
    bus::BrokerOptions o;
    o.listen = {"127.0.0.1", 0};
    broker = std::make_unique<bus::Broker>(o);
    port = broker->start();
    sub = bus::Client::connect(ep(), bus::Role::Subscriber, "test");
    sub->subscribe("");
    REQUIRE(sub->sync());
    program = *compiler::parse_dsl(programs::synflood_dsl()).program;
    auto a = compiler::compile_ir(program);
    write_file_atomic(dir.file("synflood.dsmc"), a.bytes);
  }
  net::Endpoint ep() const { return {"127.0.0.1", port}; }

  ProbeConfig config(const std::string& id, const std::string& source) const {
    ProbeConfig c;
    c.probe_id = id;
    c.source = source;
    c.bus_address = ep();
    c.artifact_path = dir.file("synflood.dsmc");
    return c;
  }

  std::string trace(const std::string& name, std::uint32_t syns) const {
    auto t = packet::synthesize({packet::SynFlood{packet::Ipv4{0x0A000042}, packet::Ipv4{0x0A000001}, 80, syns, 1000}, 3});
    packet::write_pcap(dir.file(name), t);
    return dir.file(name);
  }

  std::vector<bus::MonitoringEvent> received() {
    std::vector<bus::MonitoringEvent> out;
    REQUIRE(sub->sync());
    while (auto e = sub->next(0ms)) out.push_back(*e);
    return out;
  }

  testing::TempDir dir;
  std::unique_ptr<bus::Broker> broker;
  std::uint16_t port = 0;
  std::unique_ptr<bus::Client> sub;
  xfsm::XfsmProgram program;
};

std::vector<std::string> topics(const std::vector<bus::MonitoringEvent>& evs) {
  std::vector<std::string> t;
  for (auto& e : evs) t.push_back(e.topic);
  return t;
}

}  // namespace

TEST_CASE("probe config parsing") {
  auto c = parse_probe_config(
      "# probe\nprobe_id=p1\nattach=mirrored\nsource=tcp://127.0.0.1:9000\nbus_address=127.0.0.1:7500\n"
      "artifact_path=/tmp/a.dsmc\nreplay_pacing=honor_timestamps\n");
  CHECK(c.probe_id == "p1");
  CHECK(c.attach == AttachMode::Mirrored);
  CHECK(c.bus_address.port == 7500);
  CHECK(c.replay_pacing == Pacing::HonorTimestamps);
  CHECK(parse_probe_config(to_text(c)).source == c.source);
  CHECK_THROWS_AS(parse_probe_config("probe_id=p\n"), ConfigError);
  CHECK_THROWS_AS(parse_probe_config(to_text(c) + "colour=red\n"), ConfigError);
  auto m = c;
  m.source = "/tmp/x.pcap";
  CHECK_THROWS_AS(parse_probe_config(to_text(m)), ConfigError);
}

TEST_CASE("empty trace: zero packets and an immediate eof event") {
  Harness h;
  packet::write_pcap(h.dir.file("none.pcap"), std::vector<packet::PacketRecord>{});
  ProbeRuntime empty(h.config("p1", h.dir.file("none.pcap")));
  CHECK(empty.run() == exit_code::kClean);
  CHECK(empty.status().packets_processed == 0);
  CHECK(empty.status().state == ProbeState::Stopped);
  auto got = h.received();
  REQUIRE(got.size() == 1);
  CHECK(got[0].topic == "probe/p1/log/eof");
  CHECK(got[0].payload == "packets_processed=0 events_published=0 packets_skipped=0");
}

TEST_CASE("SYN flood artifact publishes exactly one alert, then eof") {
  Harness h;
  ProbeRuntime rt(h.config("p1", h.trace("flood.pcap", 6)));
  CHECK(rt.run() == exit_code::kClean);
  auto got = h.received();
  CHECK(topics(got) == std::vector<std::string>{"probe/p1/alert/synflood", "probe/p1/log/eof"});
  CHECK(got[0].seq == 1);
  CHECK(got[1].seq == 2);
  auto st = rt.status();
  CHECK(st.packets_processed == 6);
  CHECK(st.events_published == 1);
  CHECK(st.started_at_us.has_value());
}

TEST_CASE("published events equal the engine's output one to one") {
  Harness h;
  auto path = h.trace("flood.pcap", 40);
  ProbeRuntime rt(h.config("pX", path));
  CHECK(rt.run() == exit_code::kClean);
  auto got = h.received();
  auto want = probe_events(h.program, "pX", packet::read_pcap(path).packets);
  REQUIRE(got.size() == want.size() + 1);
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(got[i].topic == want[i].topic);
    CHECK(got[i].payload == want[i].payload);
    CHECK(got[i].ts == want[i].ts);
  }
}

TEST_CASE("direct and mirrored attach publish identical event sequences") {
  // One broker per probe, so each stream is observed in isolation with the
  // same probe id and compared byte for byte (topics, payloads, seq, order).
  Harness direct_h, tap0_h, tap1_h;
  auto path = direct_h.trace("flood.pcap", 25);
  auto packets = packet::read_pcap(path).packets;

  ProbeRuntime direct(direct_h.config("p1", path));
  CHECK(direct.run() == exit_code::kClean);
  auto direct_events = direct_h.received();
  REQUIRE(direct_events.size() >= 2);

  packet::TapServer taps(packets, 2, {"127.0.0.1", 0}, 4);
  std::string uri = "tcp://127.0.0.1:" + std::to_string(taps.start());
  std::vector<int> codes(2, -1);
  {
    std::vector<std::jthread> probes;
    Harness* hs[2] = {&tap0_h, &tap1_h};
    for (int i = 0; i < 2; ++i)
      probes.emplace_back([&, i] {
        auto c = hs[i]->config("p1", uri);
        c.attach = AttachMode::Mirrored;
        ProbeRuntime rt(c);
        codes[i] = rt.run();
      });
  }
  taps.wait();
  CHECK(codes == std::vector<int>{0, 0});
  CHECK(tap0_h.received() == direct_events);
  CHECK(tap1_h.received() == direct_events);
}

TEST_CASE("corrupt artifacts and unreachable buses fail with distinct exit codes") {
  Harness h;
  auto path = h.trace("flood.pcap", 6);
  auto bytes = read_file(h.dir.file("synflood.dsmc"));
  bytes[10] ^= 0xFF;
  write_file_atomic(h.dir.file("bad.dsmc"), bytes);
  auto c = h.config("p1", path);
  c.artifact_path = h.dir.file("bad.dsmc");
  ProbeRuntime bad(c);
  CHECK(bad.run() == exit_code::kArtifact);
  CHECK(bad.status().state == ProbeState::Failed);
  CHECK(bad.status().reason.find("checksum") != std::string::npos);

  auto nb = h.config("p1", path);
  nb.bus_address = {"127.0.0.1", 1};
  RuntimeOptions o;
  o.publisher.retry_window = 300ms;
  ProbeRuntime nobus(nb, o);
  CHECK(nobus.run() == exit_code::kBus);
  CHECK(nobus.status().state == ProbeState::Failed);

  auto ns = h.config("p1", h.dir.file("missing.pcap"));
  ProbeRuntime nosrc(ns);
  CHECK(nosrc.run() == exit_code::kConfig);
}

TEST_CASE("publisher buffers across bus loss, then fails instead of dropping") {
  Harness h;
  PublisherOptions o;
  o.max_buffer = 5;
  o.retry_window = 200ms;
  BusPublisher pub(h.ep(), "p", o);
  REQUIRE(pub.connect());
  REQUIRE(pub.enqueue("probe/p/info/a", {}, "1"));
  REQUIRE(pub.flush(5s));
  h.sub.reset();
  h.broker->stop();
  bool accepted_all = true;
  for (int i = 0; i < 50 && accepted_all; ++i) {
    accepted_all = pub.enqueue("probe/p/info/a", {}, "x");
    std::this_thread::sleep_for(10ms);
  }
  CHECK_FALSE(accepted_all);
  CHECK(pub.failed());
  CHECK_FALSE(pub.flush(1s));
}

TEST_CASE("control channel: status, stop, idempotent stop, unknown command") {
  Harness h;
  // Slow replay so the probe is still running when commands arrive.
  auto t = packet::synthesize({packet::SynFlood{packet::Ipv4{1}, packet::Ipv4{2}, 80, 2000, 1000}, 1});
  packet::write_pcap(h.dir.file("slow.pcap"), t);
  auto c = h.config("p1", h.dir.file("slow.pcap"));
  c.replay_pacing = Pacing::HonorTimestamps;
  ProbeRuntime rt(c);
  int code = -1;
  std::jthread runner([&] { code = rt.run(); });
  while (rt.status().packets_processed == 0) std::this_thread::sleep_for(5ms);
  auto st = nlohmann::json::parse(rt.handle_command("STATUS").substr(3));
  CHECK(st["state"] == "running");
  CHECK(st["packets_processed"].get<int>() > 0);
  CHECK(rt.handle_command("RESTART").rfind("ERR", 0) == 0);
  CHECK(rt.status().state == ProbeState::Running);

  auto stopped = rt.handle_command("STOP");
  REQUIRE(stopped.rfind("OK ", 0) == 0);
  auto sj = nlohmann::json::parse(stopped.substr(3));
  CHECK(sj["state"] == "stopped");
  runner.join();
  CHECK(code == exit_code::kClean);
  auto frozen = rt.status();
  std::this_thread::sleep_for(50ms);
  CHECK(rt.status() == frozen);
  CHECK(frozen.packets_processed < 2000);
  CHECK(rt.handle_command("STOP").rfind("OK ", 0) == 0);
  CHECK(nlohmann::json::parse(rt.handle_command("STATUS").substr(3))["state"] == "stopped");
  // Every alert generated before the stop reached the bus; no eof on stop.
  for (auto& e : h.received()) CHECK(e.topic != "probe/p1/log/eof");
}
