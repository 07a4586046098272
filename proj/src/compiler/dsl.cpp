#include "dstreamon/compiler/dsl.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace dstreamon::compiler {

namespace pt = boost::property_tree;
using namespace xfsm;

namespace {

constexpr std::string_view kAttrs = "<xmlattr>";
constexpr std::string_view kComment = "<xmlcomment>";

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t' || c == '\n') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

template <typename T>
std::optional<T> to_int(std::string_view s) {
  T v{};
  if (s.empty()) return std::nullopt;
  const char* b = s.data();
  if constexpr (std::is_unsigned_v<T>) {
    if (*b == '+') ++b;
  }
  auto [p, ec] = std::from_chars(b, s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

Rational reduce(Rational r) {
  std::uint64_t g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

/// "3", "0.25", "1/4" -> reduced positive rational.
std::optional<Rational> to_rational(std::string_view s) {
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    auto n = to_int<std::uint64_t>(s.substr(0, slash));
    auto d = to_int<std::uint64_t>(s.substr(slash + 1));
    if (!n || !d || *n == 0 || *d == 0) return std::nullopt;
    return reduce({*n, *d});
  }
  auto dot = s.find('.');
  if (dot == std::string_view::npos) {
    auto n = to_int<std::uint64_t>(s);
    if (!n || *n == 0) return std::nullopt;
    return Rational{*n, 1};
  }
  auto frac = s.substr(dot + 1);
  if (frac.empty() || frac.size() > 9) return std::nullopt;
  auto whole = dot == 0 ? std::optional<std::uint64_t>(0) : to_int<std::uint64_t>(s.substr(0, dot));
  auto part = to_int<std::uint64_t>(frac);
  if (!whole || !part) return std::nullopt;
  std::uint64_t den = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
  if (*whole > (UINT64_MAX - *part) / den) return std::nullopt;
  std::uint64_t num = *whole * den + *part;
  if (num == 0) return std::nullopt;
  return reduce({num, den});
}

std::string rational_text(const Rational& r) {
  if (r.den == 1) return std::to_string(r.num);
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

std::optional<std::string> attr(const pt::ptree& node, const std::string& name) {
  auto attrs = node.get_child_optional(std::string(kAttrs));
  if (!attrs) return std::nullopt;
  auto v = attrs->get_optional<std::string>(name);
  return v ? std::optional<std::string>(*v) : std::nullopt;
}

std::string indexed(const std::string& base, const std::string& tag, std::size_t i) {
  return base + "/" + tag + "[" + std::to_string(i) + "]";
}

// ---------------------------------------------------------------------------
// Condition grammar (lowest to highest precedence): or, and, not, comparison.

class ConditionParser {
 public:
  ConditionParser(std::string_view text, const std::map<std::string, std::uint32_t>& features)
      : features_(features) {
    lex(text);
  }

  Condition parse() {
    Condition out;
    parse_or(out);
    if (pos_ != toks_.size()) fail("unexpected '" + toks_[pos_] + "'");
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

  void lex(std::string_view s) {
    std::size_t i = 0;
    auto ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    while (i < s.size()) {
      char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '(' || c == ')') {
        toks_.emplace_back(1, c);
        ++i;
      } else if (c == '<' || c == '>' || c == '=') {
        if (i + 1 < s.size() && s[i + 1] == '=') {
          toks_.emplace_back(s.substr(i, 2));
          i += 2;
        } else {
          toks_.emplace_back(1, c);
          ++i;
        }
      } else if (c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
        std::size_t j = i + 1;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        toks_.emplace_back(s.substr(i, j - i));
        i = j;
      } else if (ident(c)) {
        std::size_t j = i;
        while (j < s.size() && ident(s[j])) ++j;
        toks_.emplace_back(s.substr(i, j - i));
        i = j;
      } else {
        fail(std::string("unexpected character '") + c + "'");
      }
    }
    if (toks_.empty()) fail("empty condition");
  }

  const std::string* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }
  bool accept(std::string_view t) {
    if (peek() && *peek() == t) {
      ++pos_;
      return true;
    }
    return false;
  }

  void parse_or(Condition& out) {
    parse_and(out);
    while (accept("or")) {
      parse_and(out);
      out.push_back({CondOp::Or, {}, {}});
    }
  }

  void parse_and(Condition& out) {
    parse_not(out);
    while (accept("and")) {
      parse_not(out);
      out.push_back({CondOp::And, {}, {}});
    }
  }

  void parse_not(Condition& out) {
    if (accept("not")) {
      parse_not(out);
      out.push_back({CondOp::Not, {}, {}});
      return;
    }
    parse_primary(out);
  }

  void parse_primary(Condition& out) {
    if (!peek()) fail("unexpected end of condition");
    if (accept("true")) {
      out.push_back({CondOp::True, {}, {}});
      return;
    }
    if (accept("(")) {
      parse_or(out);
      if (!accept(")")) fail("missing ')'");
      return;
    }
    Operand lhs = operand();
    if (!peek()) fail("expected comparison operator");
    std::string op = toks_[pos_++];
    CondOp cop;
    if (op == "<") cop = CondOp::Lt;
    else if (op == "<=") cop = CondOp::Le;
    else if (op == "=" || op == "==") cop = CondOp::Eq;
    else if (op == ">=") cop = CondOp::Ge;
    else if (op == ">") cop = CondOp::Gt;
    else fail("expected comparison operator, got '" + op + "'");
    Operand rhs = operand();
    out.push_back({cop, lhs, rhs});
  }

  Operand operand() {
    if (!peek()) fail("expected a feature or integer");
    const std::string& t = toks_[pos_++];
    if (auto v = to_int<std::int64_t>(t)) return {Operand::Kind::Constant, *v};
    static const std::set<std::string> reserved{"and", "or", "not", "true", "(", ")"};
    if (reserved.count(t) || !valid_identifier(t)) fail("expected a feature or integer, got '" + t + "'");
    auto it = features_.find(t);
    if (it == features_.end()) fail("unknown feature '" + t + "'");
    return {Operand::Kind::Feature, static_cast<std::int64_t>(it->second)};
  }

  const std::map<std::string, std::uint32_t>& features_;
  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------

class DslParser {
 public:
  ParseResult run(std::string_view xml) {
    pt::ptree doc;
    try {
      std::istringstream in{std::string(xml)};
      pt::read_xml(in, doc, pt::xml_parser::trim_whitespace);
    } catch (const pt::xml_parser_error& e) {
      error("document", "XML syntax error at line " + std::to_string(e.line()) + ": " + e.message());
      return finish();
    }

    const pt::ptree* root = nullptr;
    for (const auto& [tag, child] : doc) {
      if (tag == kComment) continue;
      if (tag != "program" || root) {
        error("document", "expected a single <program> root element, found <" + tag + ">");
        continue;
      }
      root = &child;
    }
    if (!root) {
      if (report_.errors.empty()) error("document", "missing <program> root element");
      return finish();
    }
    parse_program(*root);
    return finish();
  }

 private:
  void error(std::string path, std::string msg) { report_.errors.push_back({std::move(path), std::move(msg)}); }
  void warn(std::string path, std::string msg) { report_.warnings.push_back({std::move(path), std::move(msg)}); }

  void check_attrs(const pt::ptree& node, const std::string& path, std::initializer_list<std::string_view> allowed) {
    auto attrs = node.get_child_optional(std::string(kAttrs));
    if (!attrs) return;
    for (const auto& [name, _] : *attrs)
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
        warn(path + "/@" + name, "unknown attribute ignored");
  }

  std::optional<std::string> required(const pt::ptree& node, const std::string& path, const std::string& name) {
    auto v = attr(node, name);
    if (!v) error(path, "missing required attribute '" + name + "'");
    return v;
  }

  template <typename Fn>
  void for_children(const pt::ptree& node, const std::string& path, std::string_view expected, Fn fn) {
    std::size_t n = 0;
    for (const auto& [tag, child] : node) {
      if (tag == kAttrs || tag == kComment) continue;
      if (tag != expected) {
        error(path + "/" + tag, "unexpected element <" + tag + ">, expected <" + std::string(expected) + ">");
        continue;
      }
      ++n;
      fn(child, indexed(path, tag, n));
    }
  }

  void declare(std::map<std::string, std::uint32_t>& table, std::vector<std::string>& order,
               const std::optional<std::string>& name) {
    if (!name || !valid_identifier(*name) || table.count(*name)) {
      order.push_back({});
      return;
    }
    table.emplace(*name, static_cast<std::uint32_t>(order.size()));
    order.push_back(*name);
  }

  /// Collects declared names so references resolve regardless of section order.
  void declare_all(const pt::ptree& root) {
    for (const auto& [tag, sec] : root) {
      auto each = [&](std::string_view child_tag, auto& table, auto& order) {
        for (const auto& [ct, child] : sec)
          if (ct == child_tag) declare(table, order, attr(child, "name"));
      };
      if (tag == "events") each("event", event_ix_, event_names_);
      if (tag == "metrics") each("metric", metric_ix_, metric_names_);
      if (tag == "features") each("feature", feature_ix_, feature_names_);
      if (tag == "states") each("state", state_ix_, state_names_);
    }
  }

  void check_name(const std::optional<std::string>& name, const std::string& path,
                  std::set<std::string>& seen, std::string_view what) {
    if (!name) return;
    static const std::set<std::string> reserved{"and", "or", "not", "true", "ts", "flow_key"};
    if (!valid_identifier(*name) || reserved.count(*name))
      error(path + "/@name", "invalid " + std::string(what) + " name '" + *name + "'");
    else if (!seen.insert(*name).second)
      error(path + "/@name", "duplicate " + std::string(what) + " name '" + *name + "'");
  }

  void parse_program(const pt::ptree& root) {
    const std::string base = "program";
    check_attrs(root, base, {"id", "version", "seed"});
    if (auto id = required(root, base, "id")) prog_.program_id = *id;
    if (auto v = attr(root, "version")) {
      auto n = to_int<std::uint32_t>(*v);
      if (!n) error(base + "/@version", "version must be an unsigned 32-bit integer");
      else prog_.version = *n;
    } else {
      warn(base + "/@version", "no version given, defaulting to 1");
    }
    if (auto s = attr(root, "seed")) {
      auto n = to_int<std::uint64_t>(*s);
      if (!n) error(base + "/@seed", "seed must be an unsigned 64-bit integer");
      else prog_.hash_seed = *n;
    } else {
      prog_.hash_seed = default_seed(prog_.program_id);
    }

    declare_all(root);

    std::set<std::string> seen_sections;
    for (const auto& [tag, sec] : root) {
      if (tag == kAttrs || tag == kComment) continue;
      std::string path = base + "/" + tag;
      if (!seen_sections.insert(tag).second) {
        error(path, "section <" + tag + "> appears more than once");
        continue;
      }
      if (tag == "flowkey") parse_flowkey(sec, path);
      else if (tag == "events") parse_events(sec, path);
      else if (tag == "metrics") parse_metrics(sec, path);
      else if (tag == "features") parse_features(sec, path);
      else if (tag == "states") parse_states(sec, path);
      else if (tag == "transitions") parse_transitions(sec, path);
      else error(path, "unknown section <" + tag + ">");
    }
    if (!seen_sections.count("flowkey")) error(base + "/flowkey", "missing <flowkey> section");
    if (!seen_sections.count("states")) error(base + "/states", "missing <states> section");

    if (report_.ok()) lint();
  }

  void parse_flowkey(const pt::ptree& sec, const std::string& path) {
    check_attrs(sec, path, {"fields"});
    auto fields = required(sec, path, "fields");
    if (!fields) return;
    std::set<FlowField> seen;
    for (const auto& f : split_list(*fields)) {
      auto ff = parse_flow_field(f);
      if (!ff) error(path + "/@fields", "unknown flow field '" + f + "'");
      else if (!seen.insert(*ff).second) error(path + "/@fields", "duplicate flow field '" + f + "'");
      else prog_.flow_key.push_back(*ff);
    }
    if (prog_.flow_key.empty() && seen.empty()) error(path + "/@fields", "flow key must select at least one field");
  }

  std::optional<Predicate> predicate(const std::string& tok, bool negated, std::string& why) {
    static const std::map<std::string, std::uint8_t> flags{
        {"syn", packet::tcp_flag::kSyn}, {"ack", packet::tcp_flag::kAck},
        {"fin", packet::tcp_flag::kFin}, {"rst", packet::tcp_flag::kRst}};
    if (auto f = flags.find(tok); f != flags.end())
      return Predicate{negated ? Predicate::Kind::FlagClear : Predicate::Kind::FlagSet, f->second, f->second};
    if (negated) {
      why = "'not' applies to tcp flags only";
      return std::nullopt;
    }
    auto eq = tok.find('=');
    if (eq == std::string::npos) {
      why = "unknown predicate '" + tok + "'";
      return std::nullopt;
    }
    std::string key = tok.substr(0, eq);
    std::string val = tok.substr(eq + 1);
    if (key == "proto" || key == "ip_proto") {
      static const std::map<std::string, std::uint16_t> names{
          {"tcp", packet::proto::kTcp}, {"udp", packet::proto::kUdp}, {"icmp", packet::proto::kIcmp}};
      if (auto n = names.find(val); n != names.end()) return Predicate{Predicate::Kind::ProtoIs, n->second, n->second};
      auto n = to_int<std::uint8_t>(val);
      if (!n) {
        why = "bad protocol '" + val + "'";
        return std::nullopt;
      }
      return Predicate{Predicate::Kind::ProtoIs, *n, *n};
    }
    if (key == "src_port" || key == "dst_port") {
      auto kind = key == "src_port" ? Predicate::Kind::SrcPortIn : Predicate::Kind::DstPortIn;
      auto dash = val.find('-');
      auto lo = to_int<std::uint16_t>(dash == std::string::npos ? val : val.substr(0, dash));
      auto hi = dash == std::string::npos ? lo : to_int<std::uint16_t>(val.substr(dash + 1));
      if (!lo || !hi || *lo > *hi) {
        why = "bad port range '" + val + "'";
        return std::nullopt;
      }
      return Predicate{kind, *lo, *hi};
    }
    why = "unknown predicate '" + key + "'";
    return std::nullopt;
  }

  void parse_events(const pt::ptree& sec, const std::string& path) {
    std::set<std::string> seen;
    for_children(sec, path, "event", [&](const pt::ptree& ev, const std::string& p) {
      check_attrs(ev, p, {"name", "match"});
      auto name = required(ev, p, "name");
      check_name(name, p, seen, "event");
      auto match = required(ev, p, "match");
      EventDef def;
      if (name) def.name = *name;
      if (match) {
        std::vector<std::string> toks;
        std::istringstream in(*match);
        for (std::string t; in >> t;) toks.push_back(t);
        bool expect_pred = true;
        bool negated = false;
        for (const auto& t : toks) {
          if (expect_pred) {
            if (t == "not" || t == "!") {
              if (negated) error(p + "/@match", "double negation");
              negated = true;
              continue;
            }
            std::string tok = t;
            if (!tok.empty() && tok[0] == '!') {
              negated = true;
              tok = tok.substr(1);
            }
            std::string why;
            if (auto pr = predicate(tok, negated, why)) def.match.push_back(*pr);
            else error(p + "/@match", why);
            negated = false;
            expect_pred = false;
          } else if (t == "and") {
            expect_pred = true;
          } else {
            error(p + "/@match", "expected 'and' between predicates, got '" + t + "'");
            break;
          }
        }
        if (toks.empty()) error(p + "/@match", "event must contain at least one predicate");
        else if (expect_pred) error(p + "/@match", "dangling 'and' or 'not'");
      }
      prog_.events.push_back(std::move(def));
    });
  }

  void parse_metrics(const pt::ptree& sec, const std::string& path) {
    std::set<std::string> seen;
    for_children(sec, path, "metric", [&](const pt::ptree& m, const std::string& p) {
      check_attrs(m, p, {"name", "kind", "width", "depth", "window", "key"});
      auto name = required(m, p, "name");
      check_name(name, p, seen, "metric");
      MetricDef def;
      if (name) def.name = *name;
      auto kind = required(m, p, "kind");
      auto width = attr(m, "width");
      auto depth = attr(m, "depth");
      if (kind && *kind == "count_min_sketch") {
        def.kind = MetricKind::CountMinSketch;
        std::uint32_t w = width ? to_int<std::uint32_t>(*width).value_or(0) : 0;
        std::uint32_t d = depth ? to_int<std::uint32_t>(*depth).value_or(0) : 0;
        if (w < 2 || w > (1u << 24)) error(p + "/@width", "count_min_sketch needs width in [2, 2^24]");
        else def.width = w;
        if (d < 1 || d > 64) error(p + "/@depth", "count_min_sketch needs depth in [1, 64]");
        else def.depth = d;
      } else if (kind && *kind == "exact_counter") {
        def.kind = MetricKind::ExactCounter;
        if (width || depth) warn(p, "exact_counter ignores width/depth");
      } else if (kind) {
        error(p + "/@kind", "unknown metric kind '" + *kind + "'");
      }
      if (auto w = attr(m, "window")) {
        auto r = to_rational(trim(*w));
        if (!r) error(p + "/@window", "window must be a positive number of seconds");
        else def.window_seconds = *r;
      }
      if (auto k = attr(m, "key")) {
        std::set<FlowField> fs;
        for (const auto& f : split_list(*k)) {
          auto ff = parse_flow_field(f);
          if (!ff) error(p + "/@key", "unknown key field '" + f + "'");
          else if (!fs.insert(*ff).second) error(p + "/@key", "duplicate key field '" + f + "'");
          else def.key.push_back(*ff);
        }
        if (fs.empty()) error(p + "/@key", "metric key must select at least one field");
      }
      prog_.metrics.push_back(std::move(def));
    });
  }

  void parse_features(const pt::ptree& sec, const std::string& path) {
    std::set<std::string> seen;
    for_children(sec, path, "feature", [&](const pt::ptree& f, const std::string& p) {
      check_attrs(f, p, {"name", "expr", "scale"});
      auto name = required(f, p, "name");
      check_name(name, p, seen, "feature");
      FeatureDef def;
      if (name) def.name = *name;
      if (auto expr = required(f, p, "expr")) parse_feature_expr(*expr, p + "/@expr", def);
      if (auto s = attr(f, "scale")) {
        auto r = to_rational(trim(*s));
        if (!r) error(p + "/@scale", "scale must be a positive rational");
        else def.scale = *r;
      }
      prog_.features.push_back(std::move(def));
    });
  }

  void parse_feature_expr(const std::string& expr, const std::string& path, FeatureDef& def) {
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < expr.size();) {
      char c = expr[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '+' || c == '-') {
        toks.emplace_back(1, c);
        ++i;
      } else {
        std::size_t j = i;
        while (j < expr.size() && !std::isspace(static_cast<unsigned char>(expr[j])) && expr[j] != '+' &&
               expr[j] != '-')
          ++j;
        toks.push_back(expr.substr(i, j - i));
        i = j;
      }
    }
    if (toks.empty()) {
      error(path, "empty feature expression");
      return;
    }
    auto m = metric_ix_.find(toks[0]);
    if (m == metric_ix_.end()) {
      error(path, "unknown metric '" + toks[0] + "'");
      return;
    }
    def.metric = m->second;
    std::int64_t offset = 0;
    for (std::size_t i = 1; i < toks.size(); i += 2) {
      if ((toks[i] != "+" && toks[i] != "-") || i + 1 >= toks.size()) {
        error(path, "expected '<metric> [+|- <integer>]...'");
        return;
      }
      auto v = to_int<std::int64_t>(toks[i + 1]);
      if (!v) {
        if (metric_ix_.count(toks[i + 1]))
          error(path, "a feature references exactly one metric");
        else
          error(path, "expected an integer constant, got '" + toks[i + 1] + "'");
        return;
      }
      if (__builtin_add_overflow(offset, toks[i] == "+" ? *v : -*v, &offset)) {
        error(path, "offset overflows 64 bits");
        return;
      }
    }
    def.offset = offset;
  }

  void parse_states(const pt::ptree& sec, const std::string& path) {
    check_attrs(sec, path, {"initial"});
    std::set<std::string> seen;
    for_children(sec, path, "state", [&](const pt::ptree& s, const std::string& p) {
      check_attrs(s, p, {"name"});
      auto name = required(s, p, "name");
      check_name(name, p, seen, "state");
      prog_.states.push_back(name.value_or(""));
    });
    if (prog_.states.empty()) error(path, "at least one <state> is required");
    auto init = attr(sec, "initial");
    if (!init) {
      error(path, "missing initial state");
    } else if (auto it = state_ix_.find(*init); it == state_ix_.end()) {
      error(path + "/@initial", "unknown initial state '" + *init + "'");
    } else {
      prog_.initial_state = it->second;
    }
  }

  void parse_transitions(const pt::ptree& sec, const std::string& path) {
    for_children(sec, path, "t", [&](const pt::ptree& t, const std::string& p) {
      check_attrs(t, p, {"from", "on", "cond", "to"});
      Transition tr;
      auto resolve = [&](const char* a, const std::map<std::string, std::uint32_t>& table,
                         std::string_view what, std::uint32_t& out) {
        auto v = required(t, p, a);
        if (!v) return;
        auto it = table.find(*v);
        if (it == table.end()) error(p + "/@" + a, "unknown " + std::string(what) + " '" + *v + "'");
        else out = it->second;
      };
      resolve("from", state_ix_, "state", tr.from);
      resolve("on", event_ix_, "event", tr.event);
      resolve("to", state_ix_, "state", tr.to);
      std::string cond = attr(t, "cond").value_or("true");
      try {
        tr.cond = ConditionParser(cond, feature_ix_).parse();
      } catch (const std::invalid_argument& e) {
        error(p + "/@cond", e.what());
      }
      for_children(t, p, "action", [&](const pt::ptree& a, const std::string& ap) {
        tr.actions.push_back(parse_action(a, ap));
      });
      prog_.transitions.push_back(std::move(tr));
    });
  }

  Action parse_action(const pt::ptree& a, const std::string& p) {
    Action act;
    auto kind = required(a, p, "kind");
    auto metric_ref = [&] {
      if (auto m = required(a, p, "metric")) {
        auto it = metric_ix_.find(*m);
        if (it == metric_ix_.end()) error(p + "/@metric", "unknown metric '" + *m + "'");
        else act.metric = it->second;
      }
    };
    if (!kind) return act;
    if (*kind == "increment") {
      check_attrs(a, p, {"kind", "metric", "amount"});
      act.kind = Action::Kind::Increment;
      metric_ref();
      if (auto amt = attr(a, "amount")) {
        auto v = to_int<std::uint64_t>(*amt);
        if (!v || *v == 0) error(p + "/@amount", "amount must be a positive integer");
        else act.amount = *v;
      }
    } else if (*kind == "reset") {
      check_attrs(a, p, {"kind", "metric"});
      act.kind = Action::Kind::Reset;
      act.amount = 1;
      metric_ref();
    } else if (*kind == "publish") {
      check_attrs(a, p, {"kind", "severity", "label", "payload"});
      act.kind = Action::Kind::Publish;
      act.amount = 1;
      if (auto sev = required(a, p, "severity")) {
        if (auto s = parse_severity(*sev)) act.severity = *s;
        else error(p + "/@severity", "severity must be one of info, alert, warning, log");
      }
      if (auto label = required(a, p, "label")) {
        act.label = *label;
        bool ok = !label->empty() && std::all_of(label->begin(), label->end(), [](char c) {
          return c > 0x20 && c < 0x7F && c != '/';
        });
        if (!ok) error(p + "/@label", "label must be non-empty printable text without '/'");
      }
      act.payload_template = attr(a, "payload").value_or("");
      // Feature names are fully declared by now; resolve placeholders.
      std::vector<FeatureDef> named;
      for (const auto& n : feature_names_) named.push_back(FeatureDef{n, 0, 0, {}});
      try {
        parse_template(act.payload_template, named);
      } catch (const std::invalid_argument& e) {
        error(p + "/@payload", e.what());
      }
    } else {
      error(p + "/@kind", "unknown action kind '" + *kind + "'");
    }
    return act;
  }

  void lint() {
    std::vector<bool> reachable(prog_.states.size(), false);
    if (!prog_.states.empty()) reachable[prog_.initial_state] = true;
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& t : prog_.transitions)
        if (reachable[t.from] && !reachable[t.to]) reachable[t.to] = changed = true;
    }
    for (std::size_t i = 0; i < prog_.states.size(); ++i)
      if (!reachable[i])
        warn(indexed("program/states", "state", i + 1), "state '" + prog_.states[i] + "' is unreachable");

    std::vector<bool> metric_used(prog_.metrics.size()), feature_used(prog_.features.size()),
        event_used(prog_.events.size());
    for (const auto& f : prog_.features) metric_used[f.metric] = true;
    for (const auto& t : prog_.transitions) {
      event_used[t.event] = true;
      for (const auto& n : t.cond) {
        if (n.lhs.kind == Operand::Kind::Feature && n.op >= CondOp::Lt && n.op <= CondOp::Gt) feature_used[n.lhs.value] = true;
        if (n.rhs.kind == Operand::Kind::Feature && n.op >= CondOp::Lt && n.op <= CondOp::Gt) feature_used[n.rhs.value] = true;
      }
      for (const auto& a : t.actions) {
        if (a.kind != Action::Kind::Publish) metric_used[a.metric] = true;
        else
          for (const auto& part : parse_template(a.payload_template, prog_.features))
            if (part.kind == TemplatePart::Kind::Feature) feature_used[part.feature] = true;
      }
    }
    for (std::size_t i = 0; i < prog_.events.size(); ++i)
      if (!event_used[i]) warn(indexed("program/events", "event", i + 1), "event '" + prog_.events[i].name + "' triggers no transition");
    for (std::size_t i = 0; i < prog_.metrics.size(); ++i)
      if (!metric_used[i]) warn(indexed("program/metrics", "metric", i + 1), "metric '" + prog_.metrics[i].name + "' is never used");
    for (std::size_t i = 0; i < prog_.features.size(); ++i)
      if (!feature_used[i]) warn(indexed("program/features", "feature", i + 1), "feature '" + prog_.features[i].name + "' is never used");
  }

  ParseResult finish() {
    ParseResult r;
    if (report_.ok()) {
      // Anything the element pass missed is still caught here.
      for (auto& issue : check_invariants(prog_)) report_.errors.push_back(std::move(issue));
    }
    if (report_.ok()) r.program = std::move(prog_);
    r.report = std::move(report_);
    return r;
  }

  XfsmProgram prog_;
  ValidationReport report_;
  std::map<std::string, std::uint32_t> event_ix_, metric_ix_, feature_ix_, state_ix_;
  std::vector<std::string> event_names_, metric_names_, feature_names_, state_names_;
};

// ---------------------------------------------------------------------------

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#10;"; break;
      case '\t': out += "&#9;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string key_text(const KeySpec& spec) {
  std::string out;
  for (auto f : spec) {
    if (!out.empty()) out += ",";
    out += to_string(f);
  }
  return out;
}

std::string predicate_text(const Predicate& p) {
  auto flag = [](std::uint16_t f) -> std::string {
    switch (f) {
      case packet::tcp_flag::kSyn: return "syn";
      case packet::tcp_flag::kAck: return "ack";
      case packet::tcp_flag::kFin: return "fin";
      case packet::tcp_flag::kRst: return "rst";
    }
    return "?";
  };
  auto range = [](std::uint16_t lo, std::uint16_t hi) {
    return lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
  };
  switch (p.kind) {
    case Predicate::Kind::ProtoIs: return "proto=" + std::to_string(p.lo);
    case Predicate::Kind::FlagSet: return flag(p.lo);
    case Predicate::Kind::FlagClear: return "not " + flag(p.lo);
    case Predicate::Kind::SrcPortIn: return "src_port=" + range(p.lo, p.hi);
    case Predicate::Kind::DstPortIn: return "dst_port=" + range(p.lo, p.hi);
  }
  return "?";
}

}  // namespace

std::string ValidationReport::to_string() const {
  std::string out;
  for (const auto& e : errors) out += "error " + e.path + ": " + e.message + "\n";
  for (const auto& w : warnings) out += "warning " + w.path + ": " + w.message + "\n";
  return out;
}

std::uint64_t default_seed(std::string_view program_id) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : program_id) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

ParseResult parse_dsl(std::string_view xml) { return DslParser{}.run(xml); }

std::string condition_to_string(const XfsmProgram& program, const Condition& cond) {
  // Precedence: 0 or, 1 and, 2 not, 3 atom.
  struct Item {
    std::string text;
    int prec;
  };
  std::vector<Item> st;
  auto operand = [&](const Operand& o) {
    if (o.kind == Operand::Kind::Constant) return std::to_string(o.value);
    auto i = static_cast<std::size_t>(o.value);
    return i < program.features.size() ? program.features[i].name : std::string("?");
  };
  auto wrap = [](const Item& it, int min_prec) {
    return it.prec < min_prec ? "(" + it.text + ")" : it.text;
  };
  for (const auto& n : cond) {
    switch (n.op) {
      case CondOp::True: st.push_back({"true", 3}); break;
      case CondOp::Lt: st.push_back({operand(n.lhs) + " < " + operand(n.rhs), 3}); break;
      case CondOp::Le: st.push_back({operand(n.lhs) + " <= " + operand(n.rhs), 3}); break;
      case CondOp::Eq: st.push_back({operand(n.lhs) + " = " + operand(n.rhs), 3}); break;
      case CondOp::Ge: st.push_back({operand(n.lhs) + " >= " + operand(n.rhs), 3}); break;
      case CondOp::Gt: st.push_back({operand(n.lhs) + " > " + operand(n.rhs), 3}); break;
      case CondOp::Not:
        if (st.empty()) return "?";
        st.back() = {"not " + wrap(st.back(), 2), 2};
        break;
      case CondOp::And:
      case CondOp::Or: {
        if (st.size() < 2) return "?";
        Item rhs = st.back();
        st.pop_back();
        Item lhs = st.back();
        int prec = n.op == CondOp::And ? 1 : 0;
        // Left-associative: a right operand of equal precedence needs parens.
        st.back() = {wrap(lhs, prec) + (prec ? " and " : " or ") + wrap(rhs, prec + 1), prec};
        break;
      }
    }
  }
  return st.size() == 1 ? st.back().text : "?";
}

std::string to_dsl(const XfsmProgram& p) {
  std::ostringstream o;
  o << "<program id=\"" << xml_escape(p.program_id) << "\" version=\"" << p.version << "\" seed=\""
    << p.hash_seed << "\">\n";
  o << "  <flowkey fields=\"" << key_text(p.flow_key) << "\"/>\n";
  o << "  <events>\n";
  for (const auto& e : p.events) {
    std::string match;
    for (const auto& pr : e.match) {
      if (!match.empty()) match += " and ";
      match += predicate_text(pr);
    }
    o << "    <event name=\"" << e.name << "\" match=\"" << match << "\"/>\n";
  }
  o << "  </events>\n  <metrics>\n";
  for (const auto& m : p.metrics) {
    o << "    <metric name=\"" << m.name << "\" kind=\"" << to_string(m.kind) << "\"";
    if (m.kind == MetricKind::CountMinSketch) o << " width=\"" << m.width << "\" depth=\"" << m.depth << "\"";
    if (m.window_seconds) o << " window=\"" << rational_text(*m.window_seconds) << "\"";
    if (!m.key.empty()) o << " key=\"" << key_text(m.key) << "\"";
    o << "/>\n";
  }
  o << "  </metrics>\n  <features>\n";
  for (const auto& f : p.features) {
    o << "    <feature name=\"" << f.name << "\" expr=\""
      << (f.metric < p.metrics.size() ? p.metrics[f.metric].name : std::string("?"));
    if (f.offset > 0) o << " + " << f.offset;
    if (f.offset < 0) o << " - " << (f.offset == INT64_MIN ? std::string("9223372036854775808") : std::to_string(-f.offset));
    o << "\"";
    if (!(f.scale == Rational{})) o << " scale=\"" << rational_text(f.scale) << "\"";
    o << "/>\n";
  }
  o << "  </features>\n  <states initial=\""
    << (p.initial_state < p.states.size() ? p.states[p.initial_state] : std::string("?")) << "\">\n";
  for (const auto& s : p.states) o << "    <state name=\"" << s << "\"/>\n";
  o << "  </states>\n  <transitions>\n";
  auto state = [&](std::uint32_t i) { return i < p.states.size() ? p.states[i] : std::string("?"); };
  for (const auto& t : p.transitions) {
    o << "    <t from=\"" << state(t.from) << "\" on=\""
      << (t.event < p.events.size() ? p.events[t.event].name : std::string("?")) << "\" cond=\""
      << xml_escape(condition_to_string(p, t.cond)) << "\" to=\"" << state(t.to) << "\"";
    if (t.actions.empty()) {
      o << "/>\n";
      continue;
    }
    o << ">\n";
    for (const auto& a : t.actions) {
      auto metric = [&] { return a.metric < p.metrics.size() ? p.metrics[a.metric].name : std::string("?"); };
      switch (a.kind) {
        case Action::Kind::Increment:
          o << "      <action kind=\"increment\" metric=\"" << metric() << "\" amount=\"" << a.amount << "\"/>\n";
          break;
        case Action::Kind::Reset:
          o << "      <action kind=\"reset\" metric=\"" << metric() << "\"/>\n";
          break;
        case Action::Kind::Publish:
          o << "      <action kind=\"publish\" severity=\"" << to_string(a.severity) << "\" label=\""
            << xml_escape(a.label) << "\" payload=\"" << xml_escape(a.payload_template) << "\"/>\n";
          break;
      }
    }
    o << "    </t>\n";
  }
  o << "  </transitions>\n</program>\n";
  return o.str();
}

}  // namespace dstreamon::compiler
