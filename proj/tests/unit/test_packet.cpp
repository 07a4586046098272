#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <set>
#include <thread>

#include "dstreamon/packet/mirror.hpp"
#include "dstreamon/packet/pcap.hpp"
#include "dstreamon/packet/synth.hpp"
#include "support/random_program.hpp"

using namespace dstreamon;
using namespace dstreamon::packet;

namespace {

// Little-endian microsecond global header, snaplen 65535, Ethernet.
Bytes global_header() {
  return {0xD4, 0xC3, 0xB2, 0xA1, 0x02, 0x00, 0x04, 0x00, 0, 0, 0, 0, 0, 0, 0, 0,
          0xFF, 0xFF, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00};
}

void append(Bytes& out, std::initializer_list<std::uint8_t> bytes) {
  out.insert(out.end(), bytes.begin(), bytes.end());
}

void record_header(Bytes& out, std::uint32_t sec, std::uint32_t usec, std::uint32_t len) {
  LeWriter w;
  w.u32(sec);
  w.u32(usec);
  w.u32(len);
  w.u32(len);
  auto b = std::move(w).take();
  out.insert(out.end(), b.begin(), b.end());
}

// Ethernet + IPv4 + TCP SYN 10.0.0.66:40000 -> 10.0.0.1:80, built by hand.
void syn_frame(Bytes& out) {
  append(out, {0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xAA, 0xBB, 0x08, 0x00});
  append(out, {0x45, 0x00, 0x00, 0x28, 0x12, 0x34, 0x40, 0x00, 0x40, 0x06, 0x00, 0x00,
               10, 0, 0, 66, 10, 0, 0, 1});
  append(out, {0x9C, 0x40, 0x00, 0x50, 0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x02, 0xFF, 0xFF,
               0x00, 0x00, 0x00, 0x00});
}

void arp_frame(Bytes& out) {
  append(out, {0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0x66, 0x77, 0x88, 0x99, 0xAA, 0xBB, 0x08, 0x06});
  append(out, {0x00, 0x01, 0x08, 0x00, 0x06, 0x04, 0x00, 0x01, 0x66, 0x77, 0x88, 0x99, 0xAA, 0xBB,
               10, 0, 0, 66, 0, 0, 0, 0, 0, 0, 10, 0, 0, 1});
}

}  // namespace

TEST_CASE("empty capture yields no packets") {
  auto cap = read_pcap(global_header());
  CHECK(cap.packets.empty());
  CHECK(cap.skipped == 0);
}

TEST_CASE("hand-built TCP SYN is decoded field by field") {
  Bytes b = global_header();
  record_header(b, 1700000000, 250, 54);
  syn_frame(b);
  auto cap = read_pcap(b);
  REQUIRE(cap.packets.size() == 1);
  const auto& p = cap.packets[0];
  CHECK(p.ts == CaptureTime::from_parts(1700000000, 250));
  CHECK(p.src_ip.to_string() == "10.0.0.66");
  CHECK(p.dst_ip.to_string() == "10.0.0.1");
  CHECK(p.ip_proto == proto::kTcp);
  CHECK(p.src_port == 40000);
  CHECK(p.dst_port == 80);
  CHECK((p.tcp_flags & tcp_flag::kSyn) != 0);
  CHECK((p.tcp_flags & tcp_flag::kAck) == 0);
  CHECK(p.wire_len == 54);
}

TEST_CASE("ARP frames are skipped and counted") {
  Bytes b = global_header();
  record_header(b, 1, 0, 54);
  syn_frame(b);
  record_header(b, 2, 0, 42);
  arp_frame(b);
  auto cap = read_pcap(b);
  CHECK(cap.packets.size() == 1);
  CHECK(cap.skipped == 1);
}

TEST_CASE("big-endian nanosecond captures are accepted") {
  Bytes b = {0xA1, 0xB2, 0x3C, 0x4D, 0x00, 0x02, 0x00, 0x04, 0, 0, 0, 0, 0, 0, 0, 0,
             0x00, 0x00, 0xFF, 0xFF, 0x00, 0x00, 0x00, 0x01};
  BeWriter w;
  w.u32(5);
  w.u32(123456789);
  w.u32(54);
  w.u32(54);
  auto h = std::move(w).take();
  b.insert(b.end(), h.begin(), h.end());
  syn_frame(b);
  auto cap = read_pcap(b);
  REQUIRE(cap.packets.size() == 1);
  CHECK(cap.packets[0].ts == CaptureTime::from_parts(5, 123456));
}

TEST_CASE("unreadable captures are rejected") {
  Bytes bad = global_header();
  bad[0] = 0x00;
  CHECK_THROWS_AS(read_pcap(bad), PcapError);
  Bytes short_header = global_header();
  short_header.resize(10);
  CHECK_THROWS_AS(read_pcap(short_header), PcapError);
}

TEST_CASE("truncated trailing record is skipped, not fatal") {
  Bytes b = global_header();
  record_header(b, 1, 0, 54);
  syn_frame(b);
  record_header(b, 2, 0, 54);
  b.push_back(0x00);  // record promises 54 bytes, holds 1
  auto cap = read_pcap(b);
  CHECK(cap.packets.size() == 1);
  CHECK(cap.skipped == 1);
}

TEST_CASE("write_pcap then read_pcap reproduces records exactly") {
  testing::ProgramGen gen(99);
  for (int round = 0; round < 20; ++round) {
    auto trace = gen.trace(300);
    auto back = read_pcap(encode_pcap(trace));
    CHECK(back.skipped == 0);
    CHECK(back.packets == trace);
  }
}

TEST_CASE("writer rejects malformed records") {
  PacketRecord udp_with_flags;
  udp_with_flags.ip_proto = proto::kUdp;
  udp_with_flags.tcp_flags = tcp_flag::kSyn;
  udp_with_flags.wire_len = 60;
  std::vector<PacketRecord> v{udp_with_flags};
  CHECK_THROWS_AS(encode_pcap(v), std::invalid_argument);
  PacketRecord tiny;
  tiny.ip_proto = proto::kTcp;
  tiny.wire_len = 20;
  v = {tiny};
  CHECK_THROWS_AS(encode_pcap(v), std::invalid_argument);
}

TEST_CASE("syn_flood synthesizes count SYNs on one 4-tuple modulo source port") {
  TraceSpec spec{SynFlood{*Ipv4::parse("10.0.0.66"), *Ipv4::parse("10.0.0.1"), 80, 10, 1000}, 7};
  auto t = synthesize(spec);
  REQUIRE(t.size() == 10);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i].tcp_flags == tcp_flag::kSyn);
    CHECK(t[i].src_ip.to_string() == "10.0.0.66");
    CHECK(t[i].dst_ip.to_string() == "10.0.0.1");
    CHECK(t[i].dst_port == 80);
    if (i) CHECK(t[i].ts.micros == t[i - 1].ts.micros + 1000);
  }
}

TEST_CASE("port_scan emits one ascending SYN per port") {
  TraceSpec spec{PortScan{*Ipv4::parse("10.0.0.66"), *Ipv4::parse("10.0.0.1"), 80, 89, 500}, 1};
  auto t = synthesize(spec);
  REQUIRE(t.size() == 10);
  std::set<std::uint16_t> ports;
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i].dst_port == 80 + i);
    CHECK(t[i].tcp_flags == tcp_flag::kSyn);
    ports.insert(t[i].dst_port);
  }
  CHECK(ports.size() == 10);
}

TEST_CASE("benign traces are well formed and timestamps strictly increase") {
  TraceSpec spec{Benign{20, 4, 700}, 3};
  auto t = synthesize(spec);
  CHECK(t.size() == 20 * (3 + 4 + 2));
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t[i].well_formed());
    if (i) CHECK(t[i].ts.micros == t[i - 1].ts.micros + 700);
  }
}

TEST_CASE("synthesis is a pure function of spec and seed") {
  TraceSpec a = parse_trace_spec("benign flows=15 packets=3 seed=11");
  CHECK(encode_pcap(synthesize(a)) == encode_pcap(synthesize(a)));
  TraceSpec b = parse_trace_spec("benign flows=15 packets=3 seed=12");
  CHECK(encode_pcap(synthesize(a)) != encode_pcap(synthesize(b)));
  TraceSpec f = parse_trace_spec("syn_flood attacker=10.0.0.66 victim=10.0.0.1 count=6 seed=4");
  CHECK(encode_pcap(synthesize(f)) == encode_pcap(synthesize(f)));
}

TEST_CASE("invalid trace specs are rejected") {
  CHECK_THROWS_AS(validate(TraceSpec{SynFlood{{}, {}, 80, 0, 1000}}), std::invalid_argument);
  CHECK_THROWS_AS(validate(TraceSpec{PortScan{{}, {}, 90, 80, 1000}}), std::invalid_argument);
  CHECK_THROWS_AS(validate(TraceSpec{Benign{1, 1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_trace_spec("flood count=1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_trace_spec("port_scan ports=99-80"), std::invalid_argument);
}

TEST_CASE("mirror delivers the full stream to every tap") {
  testing::ProgramGen gen(5);
  auto trace = gen.trace(100);
  auto one = mirror(trace, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == trace);
  auto three = mirror(trace, 3, 4);
  REQUIRE(three.size() == 3);
  for (const auto& tap : three) CHECK(tap == trace);
}

TEST_CASE("a disconnected tap does not stall the others") {
  std::vector<PacketRecord> trace(200);
  for (std::size_t i = 0; i < trace.size(); ++i) trace[i].ts.micros = i;
  Mirror m(2, 4);
  std::vector<PacketRecord> got;
  std::jthread consumer([&] {
    while (auto p = m.tap(0).next()) got.push_back(*p);
  });
  m.tap(1).disconnect();
  for (const auto& p : trace) m.push(p);
  m.close();
  consumer.join();
  CHECK(got == trace);
  CHECK_FALSE(m.tap(1).connected());
  CHECK_FALSE(m.tap(1).next().has_value());
}
