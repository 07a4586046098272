#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "dstreamon/common/bytes.hpp"
#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::compiler {

/// Portable serialized program ("runnable") pushed from controller to probes.
///
/// Layout, all integers little-endian, strings u16-length-prefixed UTF-8:
///   "DSMC" | u16 format | str program_id | u32 version | u64 hash_seed
///   | u8 n, u8 field[n] (flow key)
///   | u32 len + events | u32 len + metrics | u32 len + features
///   | u32 len + states | u32 len + transitions
///   | u32 CRC-32 of every byte after the magic.
struct CompiledArtifact {
  Bytes bytes;
  std::string program_id;
  std::uint32_t version = 0;
  std::uint32_t checksum = 0;
};

inline constexpr std::uint16_t kArtifactFormat = 1;

enum class ArtifactErrorKind { BadMagic, UnsupportedFormat, ChecksumMismatch, Truncated, Invalid };

std::string_view to_string(ArtifactErrorKind k);

struct ArtifactError : std::runtime_error {
  ArtifactError(ArtifactErrorKind k, const std::string& what)
      : std::runtime_error(std::string(to_string(k)) + ": " + what), kind(k) {}
  ArtifactErrorKind kind;
};

/// Precondition: check_invariants(program) is empty (throws std::invalid_argument otherwise).
CompiledArtifact compile_ir(const xfsm::XfsmProgram& program);

/// Throws ArtifactError. Never returns a partially decoded program.
xfsm::XfsmProgram decompile(std::span<const std::uint8_t> bytes);
inline xfsm::XfsmProgram decompile(const CompiledArtifact& a) { return decompile(a.bytes); }

/// Reads and verifies an artifact file (decompile + header fields).
CompiledArtifact load_artifact(const std::string& path);

}  // namespace dstreamon::compiler
