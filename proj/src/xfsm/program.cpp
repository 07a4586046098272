#include "dstreamon/xfsm/program.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace dstreamon::xfsm {
namespace {

std::size_t field_width(FlowField f) {
  switch (f) {
    case FlowField::SrcIp:
    case FlowField::DstIp:
      return 4;
    case FlowField::SrcPort:
    case FlowField::DstPort:
      return 2;
    case FlowField::IpProto:
      return 1;
  }
  return 0;
}

bool known_field(FlowField f) { return field_width(f) != 0; }

std::string idx(std::string_view base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i + 1) + "]";
}

void check_key_spec(const KeySpec& spec, const std::string& path, std::vector<Issue>& out) {
  std::set<FlowField> seen;
  for (auto f : spec) {
    if (!known_field(f)) {
      out.push_back({path, "unknown key field code " + std::to_string(int(f))});
    } else if (!seen.insert(f).second) {
      out.push_back({path, "duplicate key field '" + std::string(to_string(f)) + "'"});
    }
  }
}

bool label_ok(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return c > 0x20 && c < 0x7F && c != '/';
  });
}

}  // namespace

std::string_view to_string(FlowField f) {
  switch (f) {
    case FlowField::SrcIp: return "src_ip";
    case FlowField::DstIp: return "dst_ip";
    case FlowField::SrcPort: return "src_port";
    case FlowField::DstPort: return "dst_port";
    case FlowField::IpProto: return "ip_proto";
  }
  return "?";
}

std::optional<FlowField> parse_flow_field(std::string_view s) {
  for (auto f : {FlowField::SrcIp, FlowField::DstIp, FlowField::SrcPort, FlowField::DstPort,
                 FlowField::IpProto})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

std::string encode_key(const KeySpec& spec, const PacketRecord& pkt) {
  std::string out;
  out.reserve(13);
  auto put = [&out](std::uint32_t v, std::size_t width) {
    for (std::size_t i = width; i-- > 0;) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  for (auto f : spec) {
    switch (f) {
      case FlowField::SrcIp: put(pkt.src_ip.value, 4); break;
      case FlowField::DstIp: put(pkt.dst_ip.value, 4); break;
      case FlowField::SrcPort: put(pkt.src_port, 2); break;
      case FlowField::DstPort: put(pkt.dst_port, 2); break;
      case FlowField::IpProto: put(pkt.ip_proto, 1); break;
    }
  }
  return out;
}

std::string render_key(const KeySpec& spec, std::string_view encoded) {
  std::string out;
  std::size_t pos = 0;
  for (auto f : spec) {
    std::size_t w = field_width(f);
    if (pos + w > encoded.size()) break;
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < w; ++i) v = (v << 8) | static_cast<std::uint8_t>(encoded[pos + i]);
    pos += w;
    if (!out.empty()) out.push_back('/');
    if (f == FlowField::SrcIp || f == FlowField::DstIp)
      out += packet::Ipv4{v}.to_string();
    else
      out += std::to_string(v);
  }
  return out;
}

bool Predicate::matches(const PacketRecord& pkt) const {
  switch (kind) {
    case Kind::ProtoIs: return pkt.ip_proto == lo;
    case Kind::FlagSet: return pkt.ip_proto == packet::proto::kTcp && (pkt.tcp_flags & lo) != 0;
    case Kind::FlagClear: return pkt.ip_proto == packet::proto::kTcp && (pkt.tcp_flags & lo) == 0;
    case Kind::SrcPortIn: return pkt.has_ports() && pkt.src_port >= lo && pkt.src_port <= hi;
    case Kind::DstPortIn: return pkt.has_ports() && pkt.dst_port >= lo && pkt.dst_port <= hi;
  }
  return false;
}

std::string_view to_string(MetricKind k) {
  return k == MetricKind::CountMinSketch ? "count_min_sketch" : "exact_counter";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Alert: return "alert";
    case Severity::Warning: return "warning";
    case Severity::Log: return "log";
  }
  return "?";
}

std::optional<Severity> parse_severity(std::string_view s) {
  for (auto v : {Severity::Info, Severity::Alert, Severity::Warning, Severity::Log})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

bool valid_identifier(std::string_view s) {
  if (s.empty() || s.size() > 64) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(s[0])) return false;
  return std::all_of(s.begin(), s.end(), [&](char c) { return alpha(c) || digit(c); });
}

std::vector<TemplatePart> parse_template(std::string_view tmpl,
                                         const std::vector<FeatureDef>& features) {
  std::vector<TemplatePart> parts;
  std::string lit;
  auto flush = [&] {
    if (!lit.empty()) parts.push_back({TemplatePart::Kind::Literal, std::move(lit), 0});
    lit.clear();
  };
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    char c = tmpl[i];
    if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      lit.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
      lit.push_back('}');
      ++i;
    } else if (c == '}') {
      throw std::invalid_argument("unbalanced '}' in payload template");
    } else if (c == '{') {
      auto close = tmpl.find('}', i);
      if (close == std::string_view::npos)
        throw std::invalid_argument("unterminated placeholder in payload template");
      std::string name(tmpl.substr(i + 1, close - i - 1));
      flush();
      if (name == "flow_key") {
        parts.push_back({TemplatePart::Kind::FlowKey, name, 0});
      } else if (name == "ts") {
        parts.push_back({TemplatePart::Kind::Timestamp, name, 0});
      } else {
        auto it = std::find_if(features.begin(), features.end(),
                               [&](const FeatureDef& f) { return f.name == name; });
        if (it == features.end())
          throw std::invalid_argument("unknown placeholder '{" + name + "}' in payload template");
        parts.push_back({TemplatePart::Kind::Feature, name,
                         static_cast<std::uint32_t>(it - features.begin())});
      }
      i = close;
    } else {
      lit.push_back(c);
    }
  }
  flush();
  return parts;
}

std::vector<Issue> check_invariants(const XfsmProgram& p) {
  std::vector<Issue> out;
  auto unique_names = [&out](const auto& items, std::string_view base, auto name_of) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const std::string& n = name_of(items[i]);
      if (!valid_identifier(n))
        out.push_back({idx(base, i), "invalid name '" + n + "'"});
      else if (!seen.insert(n).second)
        out.push_back({idx(base, i), "duplicate name '" + n + "'"});
    }
  };

  if (p.program_id.empty() || !label_ok(p.program_id))
    out.push_back({"program/@id", "program id must be non-empty printable text without '/'"});

  if (p.flow_key.empty()) out.push_back({"program/flowkey", "flow key must select at least one field"});
  check_key_spec(p.flow_key, "program/flowkey", out);

  unique_names(p.events, "program/events/event", [](const EventDef& e) -> const std::string& { return e.name; });
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    const auto& e = p.events[i];
    std::string path = idx("program/events/event", i);
    if (e.match.empty()) out.push_back({path, "event must contain at least one predicate"});
    for (const auto& pr : e.match) {
      using K = Predicate::Kind;
      switch (pr.kind) {
        case K::ProtoIs:
          if (pr.lo > 255) out.push_back({path, "protocol number out of range"});
          break;
        case K::FlagSet:
        case K::FlagClear:
          if (pr.lo != packet::tcp_flag::kSyn && pr.lo != packet::tcp_flag::kAck &&
              pr.lo != packet::tcp_flag::kFin && pr.lo != packet::tcp_flag::kRst)
            out.push_back({path, "unsupported tcp flag"});
          break;
        case K::SrcPortIn:
        case K::DstPortIn:
          if (pr.lo > pr.hi) out.push_back({path, "empty port range"});
          break;
        default:
          out.push_back({path, "unknown predicate kind"});
      }
    }
  }

  unique_names(p.metrics, "program/metrics/metric", [](const MetricDef& m) -> const std::string& { return m.name; });
  for (std::size_t i = 0; i < p.metrics.size(); ++i) {
    const auto& m = p.metrics[i];
    std::string path = idx("program/metrics/metric", i);
    if (m.kind == MetricKind::CountMinSketch) {
      if (m.width < 2) out.push_back({path, "count_min_sketch width must be >= 2"});
      if (m.depth < 1) out.push_back({path, "count_min_sketch depth must be >= 1"});
      if (m.depth > 64) out.push_back({path, "count_min_sketch depth must be <= 64"});
      if (m.width > (1u << 24)) out.push_back({path, "count_min_sketch width must be <= 2^24"});
    } else if (m.kind != MetricKind::ExactCounter) {
      out.push_back({path, "unknown metric kind"});
    }
    if (m.window_seconds && (m.window_seconds->num == 0 || m.window_seconds->den == 0))
      out.push_back({path, "window must be a positive rational"});
    check_key_spec(m.key, path + "/@key", out);
  }

  unique_names(p.features, "program/features/feature", [](const FeatureDef& f) -> const std::string& { return f.name; });
  for (std::size_t i = 0; i < p.features.size(); ++i) {
    const auto& f = p.features[i];
    std::string path = idx("program/features/feature", i);
    if (f.metric >= p.metrics.size()) out.push_back({path, "unknown metric reference"});
    if (f.scale.num == 0 || f.scale.den == 0) out.push_back({path, "scale must be a positive rational"});
  }

  if (p.states.empty()) out.push_back({"program/states", "at least one state is required"});
  unique_names(p.states, "program/states/state", [](const std::string& s) -> const std::string& { return s; });
  if (!p.states.empty() && p.initial_state >= p.states.size())
    out.push_back({"program/states/@initial", "initial state out of range"});

  for (std::size_t i = 0; i < p.transitions.size(); ++i) {
    const auto& t = p.transitions[i];
    std::string path = idx("program/transitions/t", i);
    if (t.from >= p.states.size()) out.push_back({path + "/@from", "unknown source state"});
    if (t.to >= p.states.size()) out.push_back({path + "/@to", "unknown target state"});
    if (t.event >= p.events.size()) out.push_back({path + "/@on", "unknown event"});

    int depth = 0;
    bool typed = true;
    auto operand_ok = [&](const Operand& o) {
      if (o.kind == Operand::Kind::Feature)
        return o.value >= 0 && static_cast<std::size_t>(o.value) < p.features.size();
      return o.kind == Operand::Kind::Constant;
    };
    for (const auto& n : t.cond) {
      switch (n.op) {
        case CondOp::True: ++depth; break;
        case CondOp::Lt:
        case CondOp::Le:
        case CondOp::Eq:
        case CondOp::Ge:
        case CondOp::Gt:
          if (!operand_ok(n.lhs) || !operand_ok(n.rhs))
            out.push_back({path + "/@cond", "comparison references an unknown feature"});
          ++depth;
          break;
        case CondOp::Not:
          if (depth < 1) typed = false;
          break;
        case CondOp::And:
        case CondOp::Or:
          if (depth < 2) typed = false;
          --depth;
          break;
        default:
          typed = false;
      }
    }
    if (!typed || depth != 1) out.push_back({path + "/@cond", "condition is not a well-typed boolean expression"});

    for (std::size_t a = 0; a < t.actions.size(); ++a) {
      const auto& act = t.actions[a];
      std::string apath = idx(path + "/action", a);
      switch (act.kind) {
        case Action::Kind::Increment:
          if (act.amount == 0) out.push_back({apath, "increment amount must be positive"});
          [[fallthrough]];
        case Action::Kind::Reset:
          if (act.metric >= p.metrics.size()) out.push_back({apath, "unknown metric reference"});
          break;
        case Action::Kind::Publish:
          if (!parse_severity(to_string(act.severity)))
            out.push_back({apath, "severity must be one of info, alert, warning, log"});
          if (!label_ok(act.label)) out.push_back({apath, "label must be non-empty printable text without '/'"});
          try {
            parse_template(act.payload_template, p.features);
          } catch (const std::invalid_argument& e) {
            out.push_back({apath, e.what()});
          }
          break;
        default:
          out.push_back({apath, "unknown action kind"});
      }
    }
  }
  return out;
}

}  // namespace dstreamon::xfsm
