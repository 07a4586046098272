#include "dstreamon/xfsm/engine.hpp"

#include <limits>
#include <stdexcept>

namespace dstreamon::xfsm {
namespace {

std::string metric_key(const XfsmProgram& p, std::uint32_t metric, const PacketRecord& pkt,
                        const std::string& flow_key) {
  if (metric >= p.metrics.size())
    throw ProgramIntegrityFault("metric index " + std::to_string(metric) + " not declared");
  const auto& spec = p.metrics[metric].key;
  return spec.empty() ? flow_key : encode_key(spec, pkt);
}

class Guard {
 public:
  Guard(const XfsmProgram& p, const MetricStore& m, const PacketRecord& pkt)
      : program_(p), metrics_(m), pkt_(pkt) {}

  bool eval(const Condition& cond) {
    stack_.clear();
    for (const auto& n : cond) {
      switch (n.op) {
        case CondOp::True: stack_.push_back(true); break;
        case CondOp::Lt: stack_.push_back(value(n.lhs) < value(n.rhs)); break;
        case CondOp::Le: stack_.push_back(value(n.lhs) <= value(n.rhs)); break;
        case CondOp::Eq: stack_.push_back(value(n.lhs) == value(n.rhs)); break;
        case CondOp::Ge: stack_.push_back(value(n.lhs) >= value(n.rhs)); break;
        case CondOp::Gt: stack_.push_back(value(n.lhs) > value(n.rhs)); break;
        case CondOp::Not: stack_.back() = !stack_.back(); break;
        case CondOp::And:
        case CondOp::Or: {
          bool rhs = stack_.back();
          stack_.pop_back();
          stack_.back() = n.op == CondOp::And ? (stack_.back() && rhs) : (stack_.back() || rhs);
          break;
        }
      }
    }
    if (stack_.size() != 1) throw ProgramIntegrityFault("ill-typed condition reached the engine");
    return stack_.back();
  }

 private:
  std::int64_t value(const Operand& o) {
    if (o.kind == Operand::Kind::Constant) return o.value;
    return feature_value(program_, metrics_, static_cast<std::uint32_t>(o.value), pkt_);
  }

  const XfsmProgram& program_;
  const MetricStore& metrics_;
  const PacketRecord& pkt_;
  std::vector<bool> stack_;
};

std::string render(const XfsmProgram& p, const MetricStore& metrics, const Action& act,
                   const PacketRecord& pkt, const std::string& flow_key) {
  std::string out;
  for (const auto& part : parse_template(act.payload_template, p.features)) {
    switch (part.kind) {
      case TemplatePart::Kind::Literal: out += part.text; break;
      case TemplatePart::Kind::FlowKey: out += render_key(p.flow_key, flow_key); break;
      case TemplatePart::Kind::Timestamp: out += pkt.ts.to_string(); break;
      case TemplatePart::Kind::Feature:
        out += std::to_string(feature_value(p, metrics, part.feature, pkt));
        break;
    }
  }
  return out;
}

}  // namespace

std::optional<std::uint32_t> derive_event(const XfsmProgram& program, const PacketRecord& pkt) {
  for (std::uint32_t i = 0; i < program.events.size(); ++i) {
    const auto& preds = program.events[i].match;
    bool all = !preds.empty();
    for (const auto& pr : preds) {
      if (!pr.matches(pkt)) {
        all = false;
        break;
      }
    }
    if (all) return i;
  }
  return std::nullopt;
}

std::int64_t feature_value(const XfsmProgram& program, const MetricStore& metrics,
                           std::uint32_t feature, const PacketRecord& pkt) {
  if (feature >= program.features.size())
    throw ProgramIntegrityFault("feature index " + std::to_string(feature) + " not declared");
  const FeatureDef& f = program.features[feature];
  std::string key = metric_key(program, f.metric, pkt, encode_key(program.flow_key, pkt));
  __int128 base = static_cast<__int128>(metrics.query(f.metric, key)) + f.offset;
  __int128 num = base * static_cast<__int128>(f.scale.num);
  __int128 den = static_cast<__int128>(f.scale.den);
  __int128 q = num / den;
  if ((num % den != 0) && (num < 0)) --q;  // floor toward -inf
  constexpr auto lo = std::numeric_limits<std::int64_t>::min();
  constexpr auto hi = std::numeric_limits<std::int64_t>::max();
  if (q < lo) return lo;
  if (q > hi) return hi;
  return static_cast<std::int64_t>(q);
}

std::vector<EmittedEvent> step(const XfsmProgram& program, FlowTable& flows, MetricStore& metrics,
                               const PacketRecord& pkt) {
  std::vector<EmittedEvent> out;
  auto event = derive_event(program, pkt);
  if (!event) return out;

  std::string flow_key = encode_key(program.flow_key, pkt);
  auto it = flows.find(flow_key);
  std::uint32_t current = it == flows.end() ? program.initial_state : it->second;

  metrics.roll_windows(pkt.ts);

  Guard guard(program, metrics, pkt);
  for (const auto& t : program.transitions) {
    if (t.from != current || t.event != *event) continue;
    if (!guard.eval(t.cond)) continue;

    for (const auto& act : t.actions) {
      switch (act.kind) {
        case Action::Kind::Increment:
          metrics.add(act.metric, metric_key(program, act.metric, pkt, flow_key), act.amount);
          break;
        case Action::Kind::Reset:
          metrics.reset(act.metric, metric_key(program, act.metric, pkt, flow_key));
          break;
        case Action::Kind::Publish:
          out.push_back({act.severity, act.label, pkt.ts, render(program, metrics, act, pkt, flow_key)});
          break;
      }
    }
    if (it == flows.end())
      flows.emplace(flow_key, t.to);
    else
      it->second = t.to;
    break;
  }
  return out;
}

namespace {
const XfsmProgram& non_null(const std::shared_ptr<const XfsmProgram>& p) {
  if (!p) throw std::invalid_argument("engine needs a program");
  return *p;
}
}  // namespace

Engine::Engine(std::shared_ptr<const XfsmProgram> program)
    : program_(std::move(program)), metrics_(non_null(program_)) {}

const std::string& Engine::state_of(const PacketRecord& pkt) const {
  auto it = flows_.find(encode_key(program_->flow_key, pkt));
  return program_->states[it == flows_.end() ? program_->initial_state : it->second];
}

}  // namespace dstreamon::xfsm
