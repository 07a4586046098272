#pragma once

// Naive XFSM interpreter used as a test oracle. It shares only the program
// data model with the engine: event matching, key encoding, metric storage
// (append-only increment history), condition evaluation (recursive over the
// postfix form) and payload rendering are written out again here.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dstreamon/packet/packet.hpp"
#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::testing {

struct RefEvent {
  std::string severity;
  std::string label;
  std::uint64_t ts_micros = 0;
  std::string payload;
  bool operator==(const RefEvent&) const = default;
};

class ReferenceInterpreter {
 public:
  explicit ReferenceInterpreter(const xfsm::XfsmProgram& p) : p_(p), windows_(p.metrics.size()) {}

  std::vector<RefEvent> feed(const packet::PacketRecord& pkt) {
    std::vector<RefEvent> out;
    const xfsm::EventDef* ev = nullptr;
    for (const auto& e : p_.events) {
      if (all_hold(e, pkt)) {
        ev = &e;
        break;
      }
    }
    if (!ev) return out;

    // Window bookkeeping happens for every packet that derived an event.
    for (std::size_t m = 0; m < p_.metrics.size(); ++m) {
      const auto& w = p_.metrics[m].window_seconds;
      if (!w) continue;
      unsigned __int128 num = static_cast<unsigned __int128>(pkt.ts.micros) * w->den;
      unsigned __int128 den = static_cast<unsigned __int128>(w->num) * 1000000u;
      std::uint64_t epoch = static_cast<std::uint64_t>(num / den);
      auto& win = windows_[m];
      if (!win.seen || win.epoch != epoch) {
        if (win.seen) ++win.generation;
        win.seen = true;
        win.epoch = epoch;
      }
    }

    std::string fkey = key_of(p_.flow_key, pkt);
    std::string state = states_.count(fkey) ? states_[fkey] : p_.states[p_.initial_state];
    for (const auto& t : p_.transitions) {
      if (p_.states[t.from] != state) continue;
      if (p_.events[t.event].name != ev->name) continue;
      if (!eval(t.cond, pkt, fkey)) continue;
      for (const auto& a : t.actions) {
        using K = xfsm::Action::Kind;
        if (a.kind == K::Increment) {
          history_.push_back({a.metric, metric_key(a.metric, pkt, fkey), a.amount,
                              windows_[a.metric].generation, false});
        } else if (a.kind == K::Reset) {
          history_.push_back({a.metric, metric_key(a.metric, pkt, fkey), 0, 0, true});
        } else {
          out.push_back({std::string(xfsm::to_string(a.severity)), a.label, pkt.ts.micros,
                         render(a.payload_template, pkt, fkey)});
        }
      }
      states_[fkey] = p_.states[t.to];
      break;
    }
    return out;
  }

  /// encoded flow key -> state name
  const std::map<std::string, std::string>& states() const { return states_; }

 private:
  struct Increment {
    std::uint32_t metric;
    std::string key;
    std::uint64_t amount;
    std::uint64_t generation;
    bool reset;
  };
  struct Window {
    bool seen = false;
    std::uint64_t epoch = 0;
    std::uint64_t generation = 0;
  };

  static bool all_hold(const xfsm::EventDef& e, const packet::PacketRecord& pkt) {
    if (e.match.empty()) return false;
    for (const auto& pr : e.match) {
      bool is_tcp = pkt.ip_proto == 6;
      bool ported = pkt.ip_proto == 6 || pkt.ip_proto == 17;
      bool ok = false;
      switch (pr.kind) {
        case xfsm::Predicate::Kind::ProtoIs: ok = pkt.ip_proto == pr.lo; break;
        case xfsm::Predicate::Kind::FlagSet: ok = is_tcp && (pkt.tcp_flags & pr.lo) == pr.lo; break;
        case xfsm::Predicate::Kind::FlagClear: ok = is_tcp && (pkt.tcp_flags & pr.lo) == 0; break;
        case xfsm::Predicate::Kind::SrcPortIn: ok = ported && pr.lo <= pkt.src_port && pkt.src_port <= pr.hi; break;
        case xfsm::Predicate::Kind::DstPortIn: ok = ported && pr.lo <= pkt.dst_port && pkt.dst_port <= pr.hi; break;
      }
      if (!ok) return false;
    }
    return true;
  }

  static std::string key_of(const xfsm::KeySpec& spec, const packet::PacketRecord& pkt) {
    std::string k;
    auto be = [&k](std::uint64_t v, int bytes) {
      for (int shift = 8 * (bytes - 1); shift >= 0; shift -= 8) k += static_cast<char>((v >> shift) & 0xFF);
    };
    for (auto f : spec) {
      if (f == xfsm::FlowField::SrcIp) be(pkt.src_ip.value, 4);
      if (f == xfsm::FlowField::DstIp) be(pkt.dst_ip.value, 4);
      if (f == xfsm::FlowField::SrcPort) be(pkt.src_port, 2);
      if (f == xfsm::FlowField::DstPort) be(pkt.dst_port, 2);
      if (f == xfsm::FlowField::IpProto) be(pkt.ip_proto, 1);
    }
    return k;
  }

  std::string metric_key(std::uint32_t m, const packet::PacketRecord& pkt, const std::string& fkey) const {
    return p_.metrics[m].key.empty() ? fkey : key_of(p_.metrics[m].key, pkt);
  }

  std::uint64_t query(std::uint32_t m, const std::string& key) const {
    std::uint64_t sum = 0;
    for (const auto& h : history_) {
      if (h.metric != m || h.key != key) continue;
      if (h.reset) {
        sum = 0;
        continue;
      }
      if (p_.metrics[m].window_seconds && h.generation != windows_[m].generation) continue;
      sum = (sum + h.amount < sum) ? UINT64_MAX : sum + h.amount;
    }
    return sum;
  }

  std::int64_t feature(std::uint32_t f, const packet::PacketRecord& pkt, const std::string& fkey) const {
    const auto& def = p_.features[f];
    __int128 n = (static_cast<__int128>(query(def.metric, metric_key(def.metric, pkt, fkey))) + def.offset) *
                 static_cast<__int128>(def.scale.num);
    __int128 d = def.scale.den;
    __int128 r = ((n % d) + d) % d;
    __int128 q = (n - r) / d;
    if (q > INT64_MAX) return INT64_MAX;
    if (q < INT64_MIN) return INT64_MIN;
    return static_cast<std::int64_t>(q);
  }

  std::int64_t operand(const xfsm::Operand& o, const packet::PacketRecord& pkt, const std::string& fkey) const {
    return o.kind == xfsm::Operand::Kind::Constant ? o.value
                                                   : feature(static_cast<std::uint32_t>(o.value), pkt, fkey);
  }

  // Evaluates the subexpression ending at `end` (exclusive); returns the
  // value and sets `start` to where that subexpression begins.
  bool eval_at(const xfsm::Condition& c, std::size_t end, std::size_t& start,
               const packet::PacketRecord& pkt, const std::string& fkey) const {
    const auto& n = c[end - 1];
    using Op = xfsm::CondOp;
    switch (n.op) {
      case Op::True: start = end - 1; return true;
      case Op::Lt: start = end - 1; return operand(n.lhs, pkt, fkey) < operand(n.rhs, pkt, fkey);
      case Op::Le: start = end - 1; return operand(n.lhs, pkt, fkey) <= operand(n.rhs, pkt, fkey);
      case Op::Eq: start = end - 1; return operand(n.lhs, pkt, fkey) == operand(n.rhs, pkt, fkey);
      case Op::Ge: start = end - 1; return operand(n.lhs, pkt, fkey) >= operand(n.rhs, pkt, fkey);
      case Op::Gt: start = end - 1; return operand(n.lhs, pkt, fkey) > operand(n.rhs, pkt, fkey);
      case Op::Not: return !eval_at(c, end - 1, start, pkt, fkey);
      case Op::And:
      case Op::Or: {
        std::size_t mid = 0;
        bool rhs = eval_at(c, end - 1, mid, pkt, fkey);
        bool lhs = eval_at(c, mid, start, pkt, fkey);
        return n.op == Op::And ? (lhs && rhs) : (lhs || rhs);
      }
    }
    return false;
  }

  bool eval(const xfsm::Condition& c, const packet::PacketRecord& pkt, const std::string& fkey) const {
    std::size_t start = 0;
    return eval_at(c, c.size(), start, pkt, fkey);
  }

  std::string pretty_key(const std::string& enc) const {
    std::string out;
    std::size_t pos = 0;
    for (auto f : p_.flow_key) {
      int w = (f == xfsm::FlowField::SrcIp || f == xfsm::FlowField::DstIp) ? 4
              : (f == xfsm::FlowField::IpProto)                            ? 1
                                                                           : 2;
      std::uint32_t v = 0;
      for (int i = 0; i < w; ++i) v = v * 256 + static_cast<unsigned char>(enc[pos++]);
      if (!out.empty()) out += "/";
      if (w == 4)
        out += std::to_string(v >> 24) + "." + std::to_string((v >> 16) & 255) + "." +
               std::to_string((v >> 8) & 255) + "." + std::to_string(v & 255);
      else
        out += std::to_string(v);
    }
    return out;
  }

  std::string render(const std::string& tmpl, const packet::PacketRecord& pkt, const std::string& fkey) const {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
      if (tmpl.compare(i, 2, "{{") == 0 || tmpl.compare(i, 2, "}}") == 0) {
        out += tmpl[i];
        ++i;
        continue;
      }
      if (tmpl[i] != '{') {
        out += tmpl[i];
        continue;
      }
      std::size_t close = tmpl.find('}', i);
      std::string name = tmpl.substr(i + 1, close - i - 1);
      i = close;
      if (name == "flow_key") {
        out += pretty_key(fkey);
      } else if (name == "ts") {
        std::string frac = std::to_string(pkt.ts.micros % 1000000);
        out += std::to_string(pkt.ts.micros / 1000000) + "." + std::string(6 - frac.size(), '0') + frac;
      } else {
        for (std::uint32_t f = 0; f < p_.features.size(); ++f)
          if (p_.features[f].name == name) out += std::to_string(feature(f, pkt, fkey));
      }
    }
    return out;
  }

  const xfsm::XfsmProgram& p_;
  std::vector<Window> windows_;
  std::vector<Increment> history_;
  std::map<std::string, std::string> states_;
};

}  // namespace dstreamon::testing
