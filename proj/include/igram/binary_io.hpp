#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "igram/types.hpp"

namespace igram {

// Writes `width` little-endian bytes of `value`.
void put_le_width(std::ostream& out, std::uint64_t value, std::size_t width);

// Little-endian scalar encoding, independent of host byte order.
template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  put_le_width(out, static_cast<std::uint64_t>(static_cast<std::make_unsigned_t<T>>(value)),
               sizeof(T));
}

inline void put_le_f32(std::ostream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  put_le(out, bits);
}

inline std::uint64_t get_le(const unsigned char* p, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline float get_le_f32(const unsigned char* p) {
  auto bits = static_cast<std::uint32_t>(get_le(p, 4));
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

// Bounds-checked reader over an immutable byte range. Every failure reports
// the offset at which the read was attempted.
class ByteCursor {
 public:
  explicit ByteCursor(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint64_t read(std::size_t width);
  float read_f32();
  void expect_magic(const char (&magic)[5]);
  std::span<const unsigned char> take(std::uint64_t n);
  void skip(std::size_t n) { (void)take(n); }

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::uint64_t pos_ = 0;
};

// Read-only memory map of a whole file.
class MappedFile {
 public:
  MappedFile() = default;
  explicit MappedFile(const std::filesystem::path& path);
  ~MappedFile();
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;
  MappedFile(MappedFile&& other) noexcept;
  MappedFile& operator=(MappedFile&& other) noexcept;

  std::span<const unsigned char> bytes() const { return {data_, size_}; }
  std::size_t size() const { return size_; }

 private:
  void release();

  const unsigned char* data_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace igram
