#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dstreamon/packet/packet.hpp"

namespace dstreamon::xfsm {

using packet::PacketRecord;

enum class FlowField : std::uint8_t { SrcIp = 1, DstIp = 2, SrcPort = 3, DstPort = 4, IpProto = 5 };

std::string_view to_string(FlowField f);
std::optional<FlowField> parse_flow_field(std::string_view s);

/// Ordered field selection. Encodes to the concatenation of the selected
/// fields, each big-endian and fixed width (IPv4 4, port 2, proto 1).
using KeySpec = std::vector<FlowField>;

std::string encode_key(const KeySpec& spec, const PacketRecord& pkt);
/// Human-readable form of an encoded key: field values joined with '/'.
std::string render_key(const KeySpec& spec, std::string_view encoded);

struct Predicate {
  enum class Kind : std::uint8_t {
    ProtoIs = 1,    // lo = protocol number
    FlagSet = 2,    // lo = flag bit
    FlagClear = 3,  // lo = flag bit
    SrcPortIn = 4,  // lo..hi inclusive
    DstPortIn = 5,
  };
  Kind kind = Kind::ProtoIs;
  std::uint16_t lo = 0;
  std::uint16_t hi = 0;

  bool matches(const PacketRecord& pkt) const;
  bool operator==(const Predicate&) const = default;
};

struct EventDef {
  std::string name;
  std::vector<Predicate> match;  // conjunction
  bool operator==(const EventDef&) const = default;
};

enum class MetricKind : std::uint8_t { ExactCounter = 1, CountMinSketch = 2 };

std::string_view to_string(MetricKind k);

struct Rational {
  std::uint64_t num = 1;
  std::uint64_t den = 1;
  bool operator==(const Rational&) const = default;
};

struct MetricDef {
  std::string name;
  MetricKind kind = MetricKind::ExactCounter;
  std::uint32_t width = 0;  // count-min only
  std::uint32_t depth = 0;  // count-min only
  std::optional<Rational> window_seconds;
  /// Fields the metric is keyed by; empty means the program's flow key.
  KeySpec key;
  bool operator==(const MetricDef&) const = default;
};

/// value = floor(scale * (metric@key + offset))
struct FeatureDef {
  std::string name;
  std::uint32_t metric = 0;
  std::int64_t offset = 0;
  Rational scale;
  bool operator==(const FeatureDef&) const = default;
};

struct Operand {
  enum class Kind : std::uint8_t { Feature = 1, Constant = 2 };
  Kind kind = Kind::Constant;
  std::int64_t value = 0;  // feature index or constant
  bool operator==(const Operand&) const = default;
};

enum class CondOp : std::uint8_t { True = 1, Lt, Le, Eq, Ge, Gt, Not, And, Or };

struct CondNode {
  CondOp op = CondOp::True;
  Operand lhs;  // comparisons only
  Operand rhs;
  bool operator==(const CondNode&) const = default;
};

/// Guard in postfix order; evaluating it leaves exactly one boolean.
using Condition = std::vector<CondNode>;

enum class Severity : std::uint8_t { Info = 1, Alert = 2, Warning = 3, Log = 4 };

std::string_view to_string(Severity s);
std::optional<Severity> parse_severity(std::string_view s);

struct Action {
  enum class Kind : std::uint8_t { Increment = 1, Reset = 2, Publish = 3 };
  Kind kind = Kind::Increment;
  std::uint32_t metric = 0;    // Increment, Reset
  std::uint64_t amount = 1;    // Increment
  Severity severity = Severity::Info;  // Publish
  std::string label;                   // Publish
  /// Publish payload. Placeholders: {flow_key}, {ts}, {<feature name>};
  /// "{{" and "}}" are literal braces.
  std::string payload_template;
  bool operator==(const Action&) const = default;
};

struct Transition {
  std::uint32_t from = 0;
  std::uint32_t event = 0;
  Condition cond{CondNode{}};
  std::vector<Action> actions;
  std::uint32_t to = 0;
  bool operator==(const Transition&) const = default;
};

/// A monitoring program with all identifier references resolved to indices.
/// Immutable once built; share freely between engines.
struct XfsmProgram {
  std::string program_id;
  std::uint32_t version = 1;
  std::uint64_t hash_seed = 0;
  KeySpec flow_key;
  std::vector<EventDef> events;
  std::vector<MetricDef> metrics;
  std::vector<FeatureDef> features;
  std::vector<std::string> states;
  std::uint32_t initial_state = 0;
  std::vector<Transition> transitions;

  bool operator==(const XfsmProgram&) const = default;
};

struct Issue {
  std::string path;
  std::string message;
  bool operator==(const Issue&) const = default;
};

/// Every structural invariant violated by `p`, in a stable order. Empty
/// means the program may be compiled and executed.
std::vector<Issue> check_invariants(const XfsmProgram& p);

struct TemplatePart {
  enum class Kind : std::uint8_t { Literal, FlowKey, Timestamp, Feature };
  Kind kind = Kind::Literal;
  std::string text;           // literal text or placeholder name
  std::uint32_t feature = 0;  // Feature only
};

/// Splits a payload template; throws std::invalid_argument on an unbalanced
/// brace or an unknown placeholder.
std::vector<TemplatePart> parse_template(std::string_view tmpl,
                                         const std::vector<FeatureDef>& features);

bool valid_identifier(std::string_view s);

}  // namespace dstreamon::xfsm
