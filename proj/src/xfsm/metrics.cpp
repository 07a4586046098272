#include "dstreamon/xfsm/metrics.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace dstreamon::xfsm {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a + b;
  return s < a ? std::numeric_limits<std::uint64_t>::max() : s;
}

}  // namespace

CountMinSketch::CountMinSketch(std::uint32_t width, std::uint32_t depth, std::uint64_t seed)
    : width_(width), depth_(depth) {
  if (width < 2) throw std::invalid_argument("count-min width must be >= 2");
  if (depth < 1) throw std::invalid_argument("count-min depth must be >= 1");
  rows_.resize(depth);
  for (std::uint32_t r = 0; r < depth; ++r) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(r + 1)));
    for (auto& a : rows_[r].a) a = rng();
    rows_[r].b = rng();
  }
  cells_.assign(std::size_t(width) * depth, 0);
}

std::uint32_t CountMinSketch::bucket(std::uint32_t row, std::string_view key) const {
  if (key.size() > kMaxKeyBytes) throw std::invalid_argument("count-min key longer than 64 bytes");
  const RowHash& h = rows_[row];
  std::uint64_t acc = h.b;
  for (std::size_t j = 0; j * 4 < key.size(); ++j) {
    std::uint32_t chunk = 0;
    for (std::size_t k = 0; k < 4 && j * 4 + k < key.size(); ++k)
      chunk |= std::uint32_t(static_cast<std::uint8_t>(key[j * 4 + k])) << (8 * k);
    acc += h.a[j] * chunk;
  }
  // Length participates so "" and "\0" land independently.
  acc += h.a[kMaxKeyBytes / 4 - 1] * (key.size() + 1);
  return static_cast<std::uint32_t>((acc >> 32) % width_);
}

void CountMinSketch::add(std::string_view key, std::uint64_t amount) {
  for (std::uint32_t r = 0; r < depth_; ++r) {
    auto& cell = cells_[std::size_t(r) * width_ + bucket(r, key)];
    cell = sat_add(cell, amount);
  }
}

std::uint64_t CountMinSketch::estimate(std::string_view key) const {
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  for (std::uint32_t r = 0; r < depth_; ++r)
    best = std::min(best, cells_[std::size_t(r) * width_ + bucket(r, key)]);
  return best;
}

void CountMinSketch::clear() { std::fill(cells_.begin(), cells_.end(), 0); }

std::uint64_t metric_seed(std::uint64_t program_seed, std::uint32_t metric_index) {
  return splitmix64(program_seed ^ splitmix64(0x5EED0000ULL + metric_index));
}

std::uint64_t window_epoch(packet::CaptureTime t, const Rational& w) {
  // floor((micros / 1e6) / (num / den)) = floor(micros * den / (num * 1e6))
  unsigned __int128 n = static_cast<unsigned __int128>(t.micros) * w.den;
  unsigned __int128 d = static_cast<unsigned __int128>(w.num) * 1'000'000ULL;
  unsigned __int128 q = n / d;
  return q > std::numeric_limits<std::uint64_t>::max() ? std::numeric_limits<std::uint64_t>::max()
                                                       : static_cast<std::uint64_t>(q);
}

MetricStore::MetricStore(const XfsmProgram& program) {
  slots_.reserve(program.metrics.size());
  for (std::uint32_t i = 0; i < program.metrics.size(); ++i) {
    const auto& m = program.metrics[i];
    Slot s{m.kind, m.window_seconds, std::nullopt, {}, std::nullopt};
    if (m.kind == MetricKind::CountMinSketch)
      s.sketch.emplace(m.width, m.depth, metric_seed(program.hash_seed, i));
    slots_.push_back(std::move(s));
  }
}

MetricStore::Slot& MetricStore::slot(std::uint32_t metric) {
  if (metric >= slots_.size())
    throw ProgramIntegrityFault("metric index " + std::to_string(metric) + " not declared");
  return slots_[metric];
}

const MetricStore::Slot& MetricStore::slot(std::uint32_t metric) const {
  if (metric >= slots_.size())
    throw ProgramIntegrityFault("metric index " + std::to_string(metric) + " not declared");
  return slots_[metric];
}

void MetricStore::add(std::uint32_t metric, std::string_view key, std::uint64_t amount) {
  Slot& s = slot(metric);
  if (s.sketch) {
    s.sketch->add(key, amount);
  } else {
    auto& v = s.exact[std::string(key)];
    v = sat_add(v, amount);
  }
}

std::uint64_t MetricStore::query(std::uint32_t metric, std::string_view key) const {
  const Slot& s = slot(metric);
  if (s.sketch) return s.sketch->estimate(key);
  auto it = s.exact.find(std::string(key));
  return it == s.exact.end() ? 0 : it->second;
}

void MetricStore::reset(std::uint32_t metric, std::string_view key) {
  Slot& s = slot(metric);
  if (s.sketch)
    s.sketch->clear();
  else
    s.exact.erase(std::string(key));
}

void MetricStore::roll_windows(packet::CaptureTime now) {
  for (auto& s : slots_) {
    if (!s.window) continue;
    std::uint64_t e = window_epoch(now, *s.window);
    if (s.epoch && *s.epoch == e) continue;
    if (s.epoch) {
      s.exact.clear();
      if (s.sketch) s.sketch->clear();
    }
    s.epoch = e;
  }
}

bool MetricStore::operator==(const MetricStore& other) const {
  if (slots_.size() != other.slots_.size()) return false;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const Slot& a = slots_[i];
    const Slot& b = other.slots_[i];
    if (a.epoch != b.epoch || a.exact != b.exact) return false;
    if (a.sketch.has_value() != b.sketch.has_value()) return false;
    if (a.sketch && a.sketch->cells() != b.sketch->cells()) return false;
  }
  return true;
}

}  // namespace dstreamon::xfsm
