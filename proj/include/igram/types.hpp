#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace igram {

using TokenId = std::uint32_t;
using TokenSpan = std::span<const TokenId>;

// Raised when an input file does not follow its declared binary layout.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// A persisted index whose contents violate the suffix-array invariants.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wire-level failure talking to a remote provider or target.
class RemoteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kTauInfinity = std::numeric_limits<int>::max();

}  // namespace igram
