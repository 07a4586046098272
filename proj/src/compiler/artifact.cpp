#include "dstreamon/compiler/artifact.hpp"

#include <cstring>

namespace dstreamon::compiler {

using namespace xfsm;

namespace {

constexpr std::string_view kMagic = "DSMC";
constexpr int kSections = 5;

std::uint16_t count16(std::size_t n, const char* what) {
  if (n > 0xFFFF) throw std::invalid_argument(std::string("too many ") + what + " for the artifact format");
  return static_cast<std::uint16_t>(n);
}

void put_key(LeWriter& w, const KeySpec& k) {
  if (k.size() > 0xFF) throw std::invalid_argument("key spec too long");
  w.u8(static_cast<std::uint8_t>(k.size()));
  for (auto f : k) w.u8(static_cast<std::uint8_t>(f));
}

KeySpec get_key(LeReader& r) {
  KeySpec k(r.u8());
  for (auto& f : k) f = static_cast<FlowField>(r.u8());
  return k;
}

void put_operand(LeWriter& w, const Operand& o) {
  w.u8(static_cast<std::uint8_t>(o.kind));
  w.i64(o.value);
}

Operand get_operand(LeReader& r) {
  Operand o;
  auto kind = r.u8();
  if (kind != 1 && kind != 2) throw ArtifactError(ArtifactErrorKind::Invalid, "bad operand kind");
  o.kind = static_cast<Operand::Kind>(kind);
  o.value = r.i64();
  return o;
}

bool is_comparison(CondOp op) { return op >= CondOp::Lt && op <= CondOp::Gt; }

template <typename Fn>
void section(LeWriter& out, Fn body) {
  LeWriter s;
  body(s);
  out.u32(static_cast<std::uint32_t>(s.size()));
  out.raw(s.bytes());
}

Bytes encode_body(const XfsmProgram& p) {
  LeWriter w;
  w.u16(kArtifactFormat);
  w.str16(p.program_id);
  w.u32(p.version);
  w.u64(p.hash_seed);
  put_key(w, p.flow_key);

  section(w, [&](LeWriter& s) {
    s.u16(count16(p.events.size(), "events"));
    for (const auto& e : p.events) {
      s.str16(e.name);
      if (e.match.size() > 0xFF) throw std::invalid_argument("too many predicates");
      s.u8(static_cast<std::uint8_t>(e.match.size()));
      for (const auto& pr : e.match) {
        s.u8(static_cast<std::uint8_t>(pr.kind));
        s.u16(pr.lo);
        s.u16(pr.hi);
      }
    }
  });
  section(w, [&](LeWriter& s) {
    s.u16(count16(p.metrics.size(), "metrics"));
    for (const auto& m : p.metrics) {
      s.str16(m.name);
      s.u8(static_cast<std::uint8_t>(m.kind));
      s.u32(m.width);
      s.u32(m.depth);
      s.u8(m.window_seconds ? 1 : 0);
      if (m.window_seconds) {
        s.u64(m.window_seconds->num);
        s.u64(m.window_seconds->den);
      }
      put_key(s, m.key);
    }
  });
  section(w, [&](LeWriter& s) {
    s.u16(count16(p.features.size(), "features"));
    for (const auto& f : p.features) {
      s.str16(f.name);
      s.u16(count16(f.metric, "metrics"));
      s.i64(f.offset);
      s.u64(f.scale.num);
      s.u64(f.scale.den);
    }
  });
  section(w, [&](LeWriter& s) {
    s.u16(count16(p.initial_state, "states"));
    s.u16(count16(p.states.size(), "states"));
    for (const auto& st : p.states) s.str16(st);
  });
  section(w, [&](LeWriter& s) {
    s.u16(count16(p.transitions.size(), "transitions"));
    for (const auto& t : p.transitions) {
      s.u16(count16(t.from, "states"));
      s.u16(count16(t.event, "events"));
      s.u16(count16(t.to, "states"));
      s.u16(count16(t.cond.size(), "condition nodes"));
      for (const auto& n : t.cond) {
        s.u8(static_cast<std::uint8_t>(n.op));
        if (is_comparison(n.op)) {
          put_operand(s, n.lhs);
          put_operand(s, n.rhs);
        }
      }
      s.u16(count16(t.actions.size(), "actions"));
      for (const auto& a : t.actions) {
        s.u8(static_cast<std::uint8_t>(a.kind));
        switch (a.kind) {
          case Action::Kind::Increment:
            s.u16(count16(a.metric, "metrics"));
            s.u64(a.amount);
            break;
          case Action::Kind::Reset:
            s.u16(count16(a.metric, "metrics"));
            break;
          case Action::Kind::Publish:
            s.u8(static_cast<std::uint8_t>(a.severity));
            s.str16(a.label);
            s.str16(a.payload_template);
            break;
        }
      }
    }
  });
  return std::move(w).take();
}

/// Walks the version-independent framing. Returns false if the buffer ends
/// before the framing does.
bool framing_complete(std::span<const std::uint8_t> body) {
  try {
    LeReader r(body);
    r.u16();
    r.str16();
    r.u32();
    r.u64();
    r.take(r.u8());
    for (int i = 0; i < kSections; ++i) r.take(r.u32());
    r.u32();
    return true;
  } catch (const TruncatedInput&) {
    return false;
  }
}

template <typename Fn>
void read_section(LeReader& r, const char* name, Fn fn) {
  auto bytes = r.take(r.u32());
  LeReader s(bytes);
  try {
    fn(s);
  } catch (const TruncatedInput&) {
    throw ArtifactError(ArtifactErrorKind::Invalid, std::string(name) + " section shorter than its contents");
  }
  if (!s.done())
    throw ArtifactError(ArtifactErrorKind::Invalid, std::string(name) + " section has trailing bytes");
}

XfsmProgram decode_body(LeReader& r) {
  XfsmProgram p;
  r.u16();  // format, already checked
  p.program_id = r.str16();
  p.version = r.u32();
  p.hash_seed = r.u64();
  p.flow_key = get_key(r);

  read_section(r, "events", [&](LeReader& s) {
    p.events.resize(s.u16());
    for (auto& e : p.events) {
      e.name = s.str16();
      e.match.resize(s.u8());
      for (auto& pr : e.match) {
        auto kind = s.u8();
        if (kind < 1 || kind > 5) throw ArtifactError(ArtifactErrorKind::Invalid, "bad predicate kind");
        pr.kind = static_cast<Predicate::Kind>(kind);
        pr.lo = s.u16();
        pr.hi = s.u16();
      }
    }
  });
  read_section(r, "metrics", [&](LeReader& s) {
    p.metrics.resize(s.u16());
    for (auto& m : p.metrics) {
      m.name = s.str16();
      auto kind = s.u8();
      if (kind != 1 && kind != 2) throw ArtifactError(ArtifactErrorKind::Invalid, "bad metric kind");
      m.kind = static_cast<MetricKind>(kind);
      m.width = s.u32();
      m.depth = s.u32();
      auto has_window = s.u8();
      if (has_window > 1) throw ArtifactError(ArtifactErrorKind::Invalid, "bad window flag");
      if (has_window) {
        Rational w;
        w.num = s.u64();
        w.den = s.u64();
        m.window_seconds = w;
      }
      m.key = get_key(s);
    }
  });
  read_section(r, "features", [&](LeReader& s) {
    p.features.resize(s.u16());
    for (auto& f : p.features) {
      f.name = s.str16();
      f.metric = s.u16();
      f.offset = s.i64();
      f.scale.num = s.u64();
      f.scale.den = s.u64();
    }
  });
  read_section(r, "states", [&](LeReader& s) {
    p.initial_state = s.u16();
    p.states.resize(s.u16());
    for (auto& st : p.states) st = s.str16();
  });
  read_section(r, "transitions", [&](LeReader& s) {
    p.transitions.resize(s.u16());
    for (auto& t : p.transitions) {
      t.from = s.u16();
      t.event = s.u16();
      t.to = s.u16();
      t.cond.resize(s.u16());
      for (auto& n : t.cond) {
        auto op = s.u8();
        if (op < 1 || op > 9) throw ArtifactError(ArtifactErrorKind::Invalid, "bad condition opcode");
        n.op = static_cast<CondOp>(op);
        if (is_comparison(n.op)) {
          n.lhs = get_operand(s);
          n.rhs = get_operand(s);
        }
      }
      t.actions.resize(s.u16());
      for (auto& a : t.actions) {
        auto kind = s.u8();
        switch (kind) {
          case 1:
            a.kind = Action::Kind::Increment;
            a.metric = s.u16();
            a.amount = s.u64();
            break;
          case 2:
            a.kind = Action::Kind::Reset;
            a.metric = s.u16();
            break;
          case 3: {
            a.kind = Action::Kind::Publish;
            auto sev = s.u8();
            if (sev < 1 || sev > 4) throw ArtifactError(ArtifactErrorKind::Invalid, "bad severity");
            a.severity = static_cast<Severity>(sev);
            a.label = s.str16();
            a.payload_template = s.str16();
            break;
          }
          default:
            throw ArtifactError(ArtifactErrorKind::Invalid, "bad action kind");
        }
      }
    }
  });
  return p;
}

}  // namespace

std::string_view to_string(ArtifactErrorKind k) {
  switch (k) {
    case ArtifactErrorKind::BadMagic: return "bad magic";
    case ArtifactErrorKind::UnsupportedFormat: return "unsupported format version";
    case ArtifactErrorKind::ChecksumMismatch: return "checksum mismatch";
    case ArtifactErrorKind::Truncated: return "truncated section";
    case ArtifactErrorKind::Invalid: return "invalid program";
  }
  return "?";
}

CompiledArtifact compile_ir(const XfsmProgram& program) {
  if (auto issues = check_invariants(program); !issues.empty())
    throw std::invalid_argument("cannot compile an invalid program: " + issues.front().path + ": " +
                                issues.front().message);
  Bytes body = encode_body(program);
  std::uint32_t crc = dstreamon::crc32(body);

  LeWriter w;
  w.raw(kMagic);
  w.raw(body);
  w.u32(crc);
  return CompiledArtifact{std::move(w).take(), program.program_id, program.version, crc};
}

XfsmProgram decompile(std::span<const std::uint8_t> bytes) {
  using K = ArtifactErrorKind;
  if (bytes.size() < kMagic.size()) {
    bool prefix = std::memcmp(bytes.data(), kMagic.data(), bytes.size()) == 0;
    throw ArtifactError(prefix ? K::Truncated : K::BadMagic, "artifact shorter than its magic");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw ArtifactError(K::BadMagic, "expected \"DSMC\"");

  auto rest = bytes.subspan(kMagic.size());
  if (!framing_complete(rest)) {
    if (rest.size() >= 2 && (rest[0] | rest[1] << 8) != kArtifactFormat)
      throw ArtifactError(K::UnsupportedFormat, "format " + std::to_string(rest[0] | rest[1] << 8));
    throw ArtifactError(K::Truncated, "artifact ends inside a section");
  }

  auto body = rest.first(rest.size() - 4);
  LeReader trailer(rest.last(4));
  std::uint32_t stored = trailer.u32();
  std::uint32_t actual = dstreamon::crc32(body);
  if (stored != actual) throw ArtifactError(K::ChecksumMismatch, "CRC-32 does not match contents");

  std::uint16_t format = static_cast<std::uint16_t>(body[0] | body[1] << 8);
  if (format != kArtifactFormat)
    throw ArtifactError(K::UnsupportedFormat, "format " + std::to_string(format));

  LeReader r(body);
  XfsmProgram p;
  try {
    p = decode_body(r);
  } catch (const TruncatedInput&) {
    throw ArtifactError(K::Truncated, "artifact ends inside a section");
  }
  if (!r.done()) throw ArtifactError(K::Invalid, "trailing bytes after the last section");
  if (auto issues = check_invariants(p); !issues.empty())
    throw ArtifactError(K::Invalid, issues.front().path + ": " + issues.front().message);
  return p;
}

CompiledArtifact load_artifact(const std::string& path) {
  Bytes bytes = read_file(path);
  XfsmProgram p = decompile(bytes);
  LeReader trailer(std::span<const std::uint8_t>(bytes).last(4));
  std::uint32_t crc = trailer.u32();
  return CompiledArtifact{std::move(bytes), p.program_id, p.version, crc};
}

}  // namespace dstreamon::compiler
