#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "igram/distribution.hpp"
#include "igram/tokenizer.hpp"
#include "igram/types.hpp"

namespace igram {

inline constexpr int kDefaultMaxExactLen = 500;

// Longest suffix of a query found in the corpus, with its half-open range of
// suffix-array rows. A zero-length match covers every row.
struct SuffixMatch {
  std::uint64_t match_len = 0;
  std::uint64_t occ_lo = 0;
  std::uint64_t occ_hi = 0;

  int effective_n() const { return static_cast<int>(match_len) + 1; }
  std::uint64_t count() const { return occ_hi - occ_lo; }
};

// Corpus tokens plus their suffix array. Immutable once built or opened;
// copies share the underlying storage, and all queries are safe to run
// concurrently. Opened indexes read the file through a memory map.
class SuffixIndex {
 public:
  SuffixIndex() = default;

  std::uint64_t size() const;
  std::uint32_t vocab_size() const;
  std::uint8_t token_width() const;
  std::uint8_t sa_width() const;

  TokenId token(std::uint64_t pos) const;
  std::uint64_t suffix_at(std::uint64_t row) const;
  std::vector<TokenId> tokens(std::uint64_t pos, std::uint64_t len) const;

  // Token counts over the whole corpus, sorted by token id. Computed on first use.
  const std::vector<std::pair<TokenId, std::uint64_t>>& unigram_counts() const;

  // Number of suffix searches served so far (instrumentation for tests).
  std::uint64_t query_count() const;

  explicit operator bool() const { return data_ != nullptr; }

  struct Data;

 private:
  explicit SuffixIndex(std::shared_ptr<Data> data) : data_(std::move(data)) {}

  std::shared_ptr<Data> data_;

  friend SuffixIndex build_index(const TokenSequence& corpus);
  friend SuffixIndex open_index(const std::filesystem::path& path, bool validate);
  friend const Data& index_data(const SuffixIndex& index);
};

SuffixIndex build_index(const TokenSequence& corpus);

// Plain suffix array of `corpus` (shorter suffixes sort first on ties).
std::vector<std::uint64_t> suffix_array(TokenSpan corpus);

SuffixMatch find_longest_suffix(const SuffixIndex& index, TokenSpan query,
                                int max_len = kDefaultMaxExactLen);

// Normalized follower counts of the longest matched suffix. Occurrences that
// end at the corpus boundary have no follower; when all do, the match backs
// off to the next shorter suffix. A zero-length match yields the corpus
// unigram distribution with effective n = 1.
NextTokenDistribution next_token_distribution(const SuffixIndex& index, TokenSpan query,
                                              int max_len = kDefaultMaxExactLen);

// IGRX index files (little-endian):
//   "IGRX" | u32 version=1 | u32 vocab_size | u8 token_width | u8 sa_width |
//   2 reserved | u64 N | N tokens | N suffix-array entries
void persist_index(const SuffixIndex& index, const std::filesystem::path& path);
SuffixIndex open_index(const std::filesystem::path& path, bool validate = false);

}  // namespace igram
