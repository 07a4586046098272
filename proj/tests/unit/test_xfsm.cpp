#include <doctest.h>

#include <map>
#include <random>

#include "dstreamon/compiler/dsl.hpp"
#include "dstreamon/compiler/programs.hpp"
#include "dstreamon/packet/synth.hpp"
#include "dstreamon/xfsm/engine.hpp"
#include "support/random_program.hpp"
#include "support/reference_interpreter.hpp"

using namespace dstreamon;
using namespace dstreamon::xfsm;
using packet::CaptureTime;
using packet::Ipv4;

namespace {

XfsmProgram must_parse(std::string_view xml) {
  auto r = compiler::parse_dsl(xml);
  INFO(r.report.to_string());
  REQUIRE(r.program.has_value());
  return *r.program;
}

PacketRecord tcp(std::uint8_t flags, std::uint64_t t_us = 1'000'000, std::uint32_t src = 0x0A000042,
                 std::uint16_t dport = 80) {
  PacketRecord p;
  p.ts = CaptureTime{t_us};
  p.src_ip = Ipv4{src};
  p.dst_ip = Ipv4{0x0A000001};
  p.ip_proto = packet::proto::kTcp;
  p.src_port = 40000;
  p.dst_port = dport;
  p.tcp_flags = flags;
  p.wire_len = 60;
  return p;
}

PacketRecord udp(std::uint64_t t_us = 1'000'000) {
  PacketRecord p = tcp(0, t_us);
  p.ip_proto = packet::proto::kUdp;
  return p;
}

std::vector<packet::PacketRecord> flood(std::uint32_t count) {
  packet::TraceSpec spec{packet::SynFlood{Ipv4{0x0A000042}, Ipv4{0x0A000001}, 80, count, 1000}, 1};
  return packet::synthesize(spec);
}

struct Run {
  std::vector<std::pair<std::size_t, EmittedEvent>> events;  // 1-based packet index
  Engine engine;
};

Run run(const XfsmProgram& p, const std::vector<PacketRecord>& trace) {
  Run r{{}, Engine(std::make_shared<XfsmProgram>(p))};
  for (std::size_t i = 0; i < trace.size(); ++i)
    for (auto& e : r.engine.step(trace[i])) r.events.emplace_back(i + 1, e);
  return r;
}

constexpr const char* kTwoEvents = R"(
<program id="ev" version="1">
  <flowkey fields="src_ip"/>
  <events>
    <event name="any_tcp" match="proto=tcp"/>
    <event name="tcp_syn" match="proto=tcp and syn"/>
  </events>
  <states initial="S"><state name="S"/></states>
  <transitions><t from="S" on="any_tcp" cond="true" to="S"/></transitions>
</program>)";

}  // namespace

TEST_CASE("derive_event picks the first matching definition") {
  auto syn_only = must_parse(programs::synflood_dsl());
  CHECK(derive_event(syn_only, tcp(packet::tcp_flag::kSyn)) == 0u);
  CHECK_FALSE(derive_event(syn_only, udp()).has_value());
  CHECK_FALSE(derive_event(syn_only, tcp(packet::tcp_flag::kSyn | packet::tcp_flag::kAck)).has_value());

  auto two = must_parse(kTwoEvents);
  CHECK(derive_event(two, tcp(packet::tcp_flag::kSyn)) == 0u);
}

TEST_CASE("SYN flood program alerts exactly once, on the sixth SYN") {
  auto prog = must_parse(programs::synflood_dsl());
  auto trace = flood(6);

  // Oracle first: the naive interpreter fixes the expected trigger index.
  testing::ReferenceInterpreter ref(prog);
  std::vector<std::size_t> ref_hits;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (!ref.feed(trace[i]).empty()) ref_hits.push_back(i + 1);
  REQUIRE(ref_hits == std::vector<std::size_t>{6});

  auto r = run(prog, trace);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].first == 6);
  CHECK(r.events[0].second.severity == Severity::Alert);
  CHECK(r.events[0].second.label == "synflood");
  CHECK(r.events[0].second.payload ==
        "flow=10.0.0.66/10.0.0.1 syn_count=5 ts=" + trace[5].ts.to_string());
  CHECK(r.engine.state_of(trace[0]) == "ALARM");
}

TEST_CASE("four SYNs stay below the threshold") {
  auto prog = must_parse(programs::synflood_dsl());
  auto trace = flood(4);
  testing::ReferenceInterpreter ref(prog);
  std::size_t ref_events = 0;
  for (const auto& p : trace) ref_events += ref.feed(p).size();
  CHECK(ref_events == 0);
  auto r = run(prog, trace);
  CHECK(r.events.empty());
  CHECK(r.engine.state_of(trace[0]) == "SAFE");
}

TEST_CASE("port scan program alerts at the tenth distinct port") {
  auto prog = must_parse(programs::portscan_dsl());
  packet::TraceSpec spec{packet::PortScan{Ipv4{0x0A000042}, Ipv4{0x0A000001}, 80, 99, 1000}, 1};
  auto trace = packet::synthesize(spec);
  auto r = run(prog, trace);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].first == 10);
  CHECK(r.events[0].second.label == "portscan");

  // Repeated SYNs to one port never count twice.
  std::vector<PacketRecord> same_port;
  for (int i = 0; i < 50; ++i) same_port.push_back(tcp(packet::tcp_flag::kSyn, 1'000'000 + i));
  CHECK(run(prog, same_port).events.empty());
}

TEST_CASE("unmatched packets are total no-ops") {
  auto prog = must_parse(programs::synflood_dsl());
  FlowTable flows;
  MetricStore metrics(prog);
  for (int i = 0; i < 3; ++i) step(prog, flows, metrics, tcp(packet::tcp_flag::kSyn, 1'000'000 + i));
  FlowTable flows_before = flows;
  MetricStore metrics_before = metrics;
  CHECK(step(prog, flows, metrics, udp()).empty());
  CHECK(step(prog, flows, metrics, tcp(packet::tcp_flag::kAck)).empty());
  CHECK(flows == flows_before);
  CHECK(metrics == metrics_before);
}

TEST_CASE("no transition fires: state and metrics unchanged") {
  auto prog = must_parse(R"(
<program id="nt" version="1">
  <flowkey fields="src_ip"/>
  <events><event name="udp_pkt" match="proto=udp"/><event name="tcp_syn" match="proto=tcp and syn"/></events>
  <metrics><metric name="m" kind="exact_counter"/></metrics>
  <states initial="SAFE"><state name="SAFE"/></states>
  <transitions><t from="SAFE" on="tcp_syn" cond="true" to="SAFE"><action kind="increment" metric="m"/></t></transitions>
</program>)");
  FlowTable flows;
  MetricStore metrics(prog);
  CHECK(step(prog, flows, metrics, udp()).empty());
  CHECK(flows.empty());
  CHECK(metrics == MetricStore(prog));
}

TEST_CASE("first matching transition wins; disjoint guards commute") {
  const char* overlapping = R"(
<program id="fm" version="1">
  <flowkey fields="src_ip"/>
  <events><event name="syn" match="proto=tcp and syn"/></events>
  <states initial="A"><state name="A"/><state name="B"/><state name="C"/></states>
  <transitions>
    <t from="A" on="syn" cond="true" to="B"/>
    <t from="A" on="syn" cond="true" to="C"/>
  </transitions>
</program>)";
  auto p = must_parse(overlapping);
  auto swapped = p;
  std::swap(swapped.transitions[0], swapped.transitions[1]);
  auto pkt = tcp(packet::tcp_flag::kSyn);
  CHECK(run(p, {pkt}).engine.state_of(pkt) == "B");
  CHECK(run(swapped, {pkt}).engine.state_of(pkt) == "C");

  const char* disjoint = R"(
<program id="dj" version="1">
  <flowkey fields="src_ip"/>
  <events><event name="syn" match="proto=tcp and syn"/></events>
  <metrics><metric name="m" kind="exact_counter"/></metrics>
  <features><feature name="f" expr="m"/></features>
  <states initial="A"><state name="A"/></states>
  <transitions>
    <t from="A" on="syn" cond="f &lt; 3" to="A">
      <action kind="increment" metric="m"/>
      <action kind="publish" severity="info" label="low" payload="{f}"/>
    </t>
    <t from="A" on="syn" cond="f >= 3" to="A">
      <action kind="publish" severity="warning" label="high" payload="{f}"/>
    </t>
  </transitions>
</program>)";
  auto d = must_parse(disjoint);
  auto d2 = d;
  std::swap(d2.transitions[0], d2.transitions[1]);
  std::vector<PacketRecord> trace;
  for (int i = 0; i < 6; ++i) trace.push_back(tcp(packet::tcp_flag::kSyn, 1'000'000 + i));
  auto a = run(d, trace), b = run(d2, trace);
  CHECK(a.events == b.events);
  CHECK(a.events.size() == 6);
}

TEST_CASE("later actions observe earlier actions of the same transition") {
  auto p = must_parse(R"(
<program id="ao" version="1">
  <flowkey fields="src_ip"/>
  <events><event name="syn" match="proto=tcp and syn"/></events>
  <metrics><metric name="m" kind="exact_counter"/></metrics>
  <features><feature name="f" expr="m"/></features>
  <states initial="A"><state name="A"/></states>
  <transitions>
    <t from="A" on="syn" cond="true" to="A">
      <action kind="publish" severity="log" label="before" payload="{f}"/>
      <action kind="increment" metric="m" amount="2"/>
      <action kind="publish" severity="log" label="mid" payload="{f}"/>
      <action kind="reset" metric="m"/>
      <action kind="publish" severity="log" label="after" payload="{f}"/>
    </t>
  </transitions>
</program>)");
  auto r = run(p, {tcp(packet::tcp_flag::kSyn)});
  REQUIRE(r.events.size() == 3);
  CHECK(r.events[0].second.payload == "0");
  CHECK(r.events[1].second.payload == "2");
  CHECK(r.events[2].second.payload == "0");
}

TEST_CASE("feature scaling floors toward negative infinity") {
  auto p = must_parse(R"(
<program id="sc" version="1">
  <flowkey fields="src_ip"/>
  <events><event name="syn" match="proto=tcp and syn"/></events>
  <metrics><metric name="m" kind="exact_counter"/></metrics>
  <features>
    <feature name="half" expr="m - 3" scale="1/2"/>
    <feature name="x15" expr="m" scale="1.5"/>
  </features>
  <states initial="A"><state name="A"/></states>
  <transitions>
    <t from="A" on="syn" cond="true" to="A">
      <action kind="publish" severity="log" label="v" payload="{half} {x15}"/>
      <action kind="increment" metric="m"/>
    </t>
  </transitions>
</program>)");
  std::vector<PacketRecord> trace;
  for (int i = 0; i < 4; ++i) trace.push_back(tcp(packet::tcp_flag::kSyn, 1'000'000 + i));
  auto r = run(p, trace);
  REQUIRE(r.events.size() == 4);
  // m = 0..3: (m-3)/2 -> -2,-1,-1,0 ; 1.5*m -> 0,1,3,4
  CHECK(r.events[0].second.payload == "-2 0");
  CHECK(r.events[1].second.payload == "-1 1");
  CHECK(r.events[2].second.payload == "-1 3");
  CHECK(r.events[3].second.payload == "0 4");
}

TEST_CASE("windowed counters only see increments from the current epoch") {
  auto p = must_parse(R"(
<program id="win" version="1">
  <flowkey fields="src_ip"/>
  <events><event name="syn" match="proto=tcp and syn"/></events>
  <metrics><metric name="m" kind="exact_counter" window="2"/></metrics>
  <features><feature name="f" expr="m"/></features>
  <states initial="A"><state name="A"/></states>
  <transitions>
    <t from="A" on="syn" cond="true" to="A">
      <action kind="increment" metric="m"/>
      <action kind="publish" severity="log" label="v" payload="{f}"/>
    </t>
  </transitions>
</program>)");
  // Epochs of 2 s: t=0.5,1.9 -> epoch 0; 2.0,3.5 -> 1; 6.1 -> 3
  std::vector<PacketRecord> trace = {tcp(2, 500'000), tcp(2, 1'900'000), tcp(2, 2'000'000),
                                     tcp(2, 3'500'000), tcp(2, 6'100'000)};
  auto r = run(p, trace);
  std::vector<std::string> got;
  for (auto& [i, e] : r.events) got.push_back(e.payload);
  CHECK(got == std::vector<std::string>{"1", "2", "1", "2", "1"});
}

TEST_CASE("metric store semantics") {
  XfsmProgram p = must_parse(programs::synflood_dsl());
  p.metrics.push_back({"cms", MetricKind::CountMinSketch, 1024, 4, std::nullopt, {}});
  MetricStore s(p);
  CHECK(s.query(0, "k") == 0);
  for (int i = 0; i < 3; ++i) s.add(0, "k", 1);
  CHECK(s.query(0, "k") == 3);
  s.add(0, "other", 5);
  s.reset(0, "k");
  CHECK(s.query(0, "k") == 0);
  CHECK(s.query(0, "other") == 5);
  s.add(1, "a", 4);
  s.add(1, "b", 2);
  CHECK(s.query(1, "a") >= 4);
  s.reset(1, "a");
  CHECK(s.query(1, "b") == 0);
  CHECK_THROWS_AS(s.add(9, "k", 1), ProgramIntegrityFault);
  CHECK_THROWS_AS((void)s.query(9, "k"), ProgramIntegrityFault);
}

TEST_CASE("count-min sketch never underestimates against an exact oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CountMinSketch cms(1024, 4, seed);
    std::map<std::string, std::uint64_t> exact;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 100; ++i) {
      std::string k = "key" + std::to_string(i);
      cms.add(k);
      exact[k] += 1;
    }
    std::uint64_t over = 0;
    for (auto& [k, v] : exact) {
      CHECK(cms.estimate(k) >= v);
      over += cms.estimate(k) - v;
    }
    CHECK(static_cast<double>(over) / exact.size() < 0.5);
  }
  CHECK_THROWS_AS(CountMinSketch(1, 4, 0), std::invalid_argument);
}

TEST_CASE("engine is deterministic across runs") {
  testing::ProgramGen gen(1234);
  for (int i = 0; i < 20; ++i) {
    auto p = gen.program({5, 8, true});
    auto trace = gen.trace(400);
    auto a = run(p, trace), b = run(p, trace);
    CHECK(a.events == b.events);
    CHECK(a.engine.flows() == b.engine.flows());
    CHECK(a.engine.metrics() == b.engine.metrics());
  }
}

TEST_CASE("generated programs satisfy invariants and match the reference interpreter") {
  testing::ProgramGen gen(42);
  for (int i = 0; i < 100; ++i) {
    auto p = gen.program();
    REQUIRE(check_invariants(p).empty());
    auto trace = gen.trace(300);
    testing::ReferenceInterpreter ref(p);
    Engine eng(std::make_shared<XfsmProgram>(p));
    for (const auto& pkt : trace) {
      auto got = eng.step(pkt);
      auto want = ref.feed(pkt);
      REQUIRE(got.size() == want.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(to_string(got[k].severity) == want[k].severity);
        CHECK(got[k].label == want[k].label);
        CHECK(got[k].ts.micros == want[k].ts_micros);
        CHECK(got[k].payload == want[k].payload);
      }
    }
    std::map<std::string, std::string> states;
    for (auto& [k, s] : eng.flows()) states[k] = p.states[s];
    CHECK(states == ref.states());
  }
}

TEST_CASE("invariant checker reports dangling references") {
  auto p = must_parse(programs::synflood_dsl());
  p.transitions[0].to = 7;
  auto issues = check_invariants(p);
  REQUIRE_FALSE(issues.empty());
  CHECK(issues[0].path == "program/transitions/t[1]/@to");
  p = must_parse(programs::synflood_dsl());
  p.flow_key.clear();
  CHECK_FALSE(check_invariants(p).empty());
}

TEST_CASE("flow keys are big-endian fixed width in spec order") {
  auto pkt = tcp(2);
  pkt.src_port = 0x1234;
  auto k = encode_key({FlowField::SrcPort, FlowField::SrcIp, FlowField::IpProto}, pkt);
  CHECK(k == std::string("\x12\x34\x0A\x00\x00\x42\x06", 7));
  CHECK(render_key({FlowField::SrcPort, FlowField::SrcIp, FlowField::IpProto}, k) == "4660/10.0.0.66/6");
}
