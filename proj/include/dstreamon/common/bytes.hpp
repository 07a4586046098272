#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dstreamon {

using Bytes = std::vector<std::uint8_t>;

enum class Endian { Little, Big };

/// Append-only byte buffer with explicit byte order per writer.
template <Endian E>
class ByteWriter {
 public:
  ByteWriter() = default;

  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }

  /// u16 length prefix followed by the raw bytes.
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw std::length_error("string exceeds u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void raw(std::span<const std::uint8_t> s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      int shift = E == Endian::Little ? 8 * i : 8 * (3 - i);
      buf_.at(at + i) = static_cast<std::uint8_t>(v >> shift);
    }
  }

  std::size_t size() const { return buf_.size(); }
  const Bytes& bytes() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
      int shift = E == Endian::Little ? 8 * i : 8 * (n - 1 - i);
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
  }

  Bytes buf_;
};

/// Thrown by ByteReader when a read runs past the end of its input.
struct TruncatedInput : std::runtime_error {
  TruncatedInput() : std::runtime_error("unexpected end of input") {}
};

template <Endian E>
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }

  std::string str16() {
    std::size_t n = u16();
    return std::string(reinterpret_cast<const char*>(take(n).data()), n);
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) throw TruncatedInput{};
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::uint64_t get(int n) {
    auto s = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      int shift = E == Endian::Little ? 8 * i : 8 * (n - 1 - i);
      v |= static_cast<std::uint64_t>(s[i]) << shift;
    }
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

using LeWriter = ByteWriter<Endian::Little>;
using BeWriter = ByteWriter<Endian::Big>;
using LeReader = ByteReader<Endian::Little>;
using BeReader = ByteReader<Endian::Big>;

/// CRC-32 (IEEE 802.3, as used by zlib/PNG).
std::uint32_t crc32(std::span<const std::uint8_t> data);

Bytes read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::string& path, std::string_view text);

}  // namespace dstreamon
