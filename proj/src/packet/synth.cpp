#include "dstreamon/packet/synth.hpp"

#include <charconv>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dstreamon::packet {
namespace {

constexpr std::uint32_t kMinFrame = 60;

// std::uniform_int_distribution is implementation-defined; traces must be
// byte-identical across standard libraries, so draw with plain modulo.
std::uint32_t draw(std::mt19937_64& rng, std::uint32_t lo, std::uint32_t hi) {
  return lo + static_cast<std::uint32_t>(rng() % (std::uint64_t(hi) - lo + 1));
}

std::uint16_t ephemeral_port(std::mt19937_64& rng) {
  return static_cast<std::uint16_t>(draw(rng, 49152, 65535));
}

class Clock {
 public:
  Clock(CaptureTime start, std::uint64_t gap) : now_(start), gap_(gap) {}
  CaptureTime tick() {
    CaptureTime t = now_;
    now_.micros += gap_;
    return t;
  }

 private:
  CaptureTime now_;
  std::uint64_t gap_;
};

PacketRecord tcp(CaptureTime ts, Ipv4 src, std::uint16_t sport, Ipv4 dst, std::uint16_t dport,
                 std::uint8_t flags, std::uint32_t wire_len = kMinFrame) {
  PacketRecord p;
  p.ts = ts;
  p.src_ip = src;
  p.dst_ip = dst;
  p.ip_proto = proto::kTcp;
  p.src_port = sport;
  p.dst_port = dport;
  p.tcp_flags = flags;
  p.wire_len = wire_len;
  return p;
}

std::vector<PacketRecord> gen(const SynFlood& s, std::mt19937_64& rng, CaptureTime start) {
  std::vector<PacketRecord> out;
  out.reserve(s.count);
  Clock clock(start, s.inter_arrival_us);
  for (std::uint32_t i = 0; i < s.count; ++i)
    out.push_back(tcp(clock.tick(), s.attacker_ip, ephemeral_port(rng), s.victim_ip, s.victim_port,
                      tcp_flag::kSyn));
  return out;
}

std::vector<PacketRecord> gen(const PortScan& s, std::mt19937_64& rng, CaptureTime start) {
  std::vector<PacketRecord> out;
  Clock clock(start, s.inter_arrival_us);
  std::uint16_t sport = ephemeral_port(rng);
  for (std::uint32_t port = s.first_port; port <= s.last_port; ++port)
    out.push_back(tcp(clock.tick(), s.scanner_ip, sport, s.victim_ip,
                      static_cast<std::uint16_t>(port), tcp_flag::kSyn));
  return out;
}

std::vector<PacketRecord> gen(const Benign& s, std::mt19937_64& rng, CaptureTime start) {
  static constexpr std::uint16_t kServices[] = {80, 443, 22, 25, 8080, 993};
  using namespace tcp_flag;
  std::vector<PacketRecord> out;
  Clock clock(start, s.inter_arrival_us);
  for (std::uint32_t f = 0; f < s.flow_count; ++f) {
    Ipv4 client{(10u << 24) | draw(rng, 0, 0xFFFF) << 8 | draw(rng, 1, 254)};
    Ipv4 server{(192u << 24) | (168u << 16) | draw(rng, 0, 255) << 8 | draw(rng, 1, 254)};
    std::uint16_t cport = ephemeral_port(rng);
    std::uint16_t sport = kServices[draw(rng, 0, std::size(kServices) - 1)];

    out.push_back(tcp(clock.tick(), client, cport, server, sport, kSyn));
    out.push_back(tcp(clock.tick(), server, sport, client, cport, kSyn | kAck));
    out.push_back(tcp(clock.tick(), client, cport, server, sport, kAck));
    for (std::uint32_t i = 0; i < s.packets_per_flow; ++i) {
      std::uint32_t len = kMinFrame + draw(rng, 0, 1400);
      if (i % 2 == 0)
        out.push_back(tcp(clock.tick(), client, cport, server, sport, kAck | kPsh, len));
      else
        out.push_back(tcp(clock.tick(), server, sport, client, cport, kAck | kPsh, len));
    }
    out.push_back(tcp(clock.tick(), client, cport, server, sport, kFin | kAck));
    out.push_back(tcp(clock.tick(), server, sport, client, cport, kFin | kAck));
  }
  return out;
}

template <typename T>
T number(const std::string& key, const std::string& text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw std::invalid_argument("bad numeric value for '" + key + "': " + text);
  return v;
}

Ipv4 address(const std::string& key, const std::string& text) {
  auto ip = Ipv4::parse(text);
  if (!ip) throw std::invalid_argument("bad IPv4 address for '" + key + "': " + text);
  return *ip;
}

}  // namespace

void validate(const TraceSpec& spec) {
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if (s.inter_arrival_us == 0) throw std::invalid_argument("inter_arrival must be > 0");
        if constexpr (std::is_same_v<S, SynFlood>) {
          if (s.count < 1) throw std::invalid_argument("syn_flood count must be >= 1");
        } else if constexpr (std::is_same_v<S, PortScan>) {
          if (s.first_port > s.last_port) throw std::invalid_argument("port_scan range is empty");
        } else {
          if (s.flow_count < 1) throw std::invalid_argument("benign flow_count must be >= 1");
        }
      },
      spec.scenario);
}

std::vector<PacketRecord> synthesize(const TraceSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  return std::visit([&](const auto& s) { return gen(s, rng, spec.start); }, spec.scenario);
}

TraceSpec parse_trace_spec(const std::string& stanza) {
  std::istringstream in(stanza);
  std::string kind;
  in >> kind;
  std::unordered_map<std::string, std::string> kv;
  for (std::string tok; in >> tok;) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  TraceSpec spec;
  if (auto s = take("seed")) spec.seed = number<std::uint64_t>("seed", *s);
  if (auto s = take("start")) spec.start = CaptureTime::from_parts(number<std::uint64_t>("start", *s), 0);
  std::uint64_t gap = 1000;
  if (auto s = take("gap_us")) gap = number<std::uint64_t>("gap_us", *s);

  if (kind == "syn_flood" || kind == "synflood") {
    SynFlood s;
    s.attacker_ip = address("attacker", take("attacker").value_or("10.0.0.66"));
    s.victim_ip = address("victim", take("victim").value_or("10.0.0.1"));
    if (auto v = take("port")) s.victim_port = number<std::uint16_t>("port", *v);
    if (auto v = take("count")) s.count = number<std::uint32_t>("count", *v);
    s.inter_arrival_us = gap;
    spec.scenario = s;
  } else if (kind == "port_scan" || kind == "portscan") {
    PortScan s;
    s.scanner_ip = address("scanner", take("scanner").value_or("10.0.0.66"));
    s.victim_ip = address("victim", take("victim").value_or("10.0.0.1"));
    if (auto v = take("ports")) {
      auto dash = v->find('-');
      if (dash == std::string::npos) {
        s.first_port = s.last_port = number<std::uint16_t>("ports", *v);
      } else {
        s.first_port = number<std::uint16_t>("ports", v->substr(0, dash));
        s.last_port = number<std::uint16_t>("ports", v->substr(dash + 1));
      }
    }
    s.inter_arrival_us = gap;
    spec.scenario = s;
  } else if (kind == "benign") {
    Benign s;
    if (auto v = take("flows")) s.flow_count = number<std::uint32_t>("flows", *v);
    if (auto v = take("packets")) s.packets_per_flow = number<std::uint32_t>("packets", *v);
    s.inter_arrival_us = gap;
    spec.scenario = s;
  } else {
    throw std::invalid_argument("unknown scenario '" + kind + "'");
  }
  if (!kv.empty()) throw std::invalid_argument("unknown trace parameter '" + kv.begin()->first + "'");
  validate(spec);
  return spec;
}

}  // namespace dstreamon::packet
