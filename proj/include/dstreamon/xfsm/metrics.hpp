#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dstreamon/packet/packet.hpp"
#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::xfsm {

/// Count-min sketch over byte-string keys. Row i hashes with vector
/// multiply-shift: h_i(x) = ((b_i + sum_j a_ij * x_j) mod 2^64) >> 32, where
/// x_j are the key's little-endian 32-bit chunks. Estimates never undercount.
class CountMinSketch {
 public:
  static constexpr std::size_t kMaxKeyBytes = 64;

  CountMinSketch(std::uint32_t width, std::uint32_t depth, std::uint64_t seed);

  void add(std::string_view key, std::uint64_t amount = 1);
  std::uint64_t estimate(std::string_view key) const;
  void clear();

  std::uint32_t width() const { return width_; }
  std::uint32_t depth() const { return depth_; }
  /// Column that `key` maps to in `row`.
  std::uint32_t bucket(std::uint32_t row, std::string_view key) const;
  const std::vector<std::uint64_t>& cells() const { return cells_; }

 private:
  struct RowHash {
    std::array<std::uint64_t, kMaxKeyBytes / 4> a{};
    std::uint64_t b = 0;
  };

  std::uint32_t width_;
  std::uint32_t depth_;
  std::vector<RowHash> rows_;
  std::vector<std::uint64_t> cells_;
};

/// Seed for one metric's sketch, derived from the program-level seed.
std::uint64_t metric_seed(std::uint64_t program_seed, std::uint32_t metric_index);

/// Tumbling-window epoch of `t` for a window of `w` seconds: floor(t / w).
std::uint64_t window_epoch(packet::CaptureTime t, const Rational& w);

/// Storage for every metric a program declares.
class MetricStore {
 public:
  explicit MetricStore(const XfsmProgram& program);

  void add(std::uint32_t metric, std::string_view key, std::uint64_t amount);
  std::uint64_t query(std::uint32_t metric, std::string_view key) const;
  /// Exact counters reset the one key; sketches zero every counter.
  void reset(std::uint32_t metric, std::string_view key);
  /// Clears each windowed metric whose epoch differs from the one at `now`.
  void roll_windows(packet::CaptureTime now);

  bool operator==(const MetricStore& other) const;

 private:
  struct Slot {
    MetricKind kind;
    std::optional<Rational> window;
    std::optional<std::uint64_t> epoch;
    std::map<std::string, std::uint64_t> exact;
    std::optional<CountMinSketch> sketch;
  };

  Slot& slot(std::uint32_t metric);
  const Slot& slot(std::uint32_t metric) const;

  std::vector<Slot> slots_;
};

/// Thrown when the engine is handed a metric index the program never
/// declared: a compiler/engine mismatch, never a data-dependent condition.
struct ProgramIntegrityFault : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace dstreamon::xfsm
