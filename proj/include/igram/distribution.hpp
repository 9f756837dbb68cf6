#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "igram/types.hpp"

namespace igram {

enum class Source { kReferenceExact, kContextExact, kContextFuzzy, kUnigramFallback };

const char* to_string(Source source);

// One matched span supporting a prediction. `position` indexes the sequence
// that was searched (the reference corpus or the context, depending on the
// distribution's source) and is the first token of the matched window.
struct MatchEvidence {
  std::uint64_t position = 0;
  std::uint32_t length = 0;
  TokenId following_token = 0;
  double weight = 1.0;  // 1 for exact matches, the similarity score for fuzzy ones

  friend bool operator==(const MatchEvidence&, const MatchEvidence&) = default;
};

// Sparse next-token distribution. Entries are sorted by token id, have
// positive probability, and sum to one.
class NextTokenDistribution {
 public:
  using Entry = std::pair<TokenId, double>;

  NextTokenDistribution() = default;

  // Normalizes nonnegative (token, mass) pairs. Duplicate tokens are merged
  // and zero masses dropped; the total must be positive.
  static NextTokenDistribution from_masses(std::vector<Entry> masses, int effective_n,
                                           Source source);

  const std::vector<Entry>& probs() const { return probs_; }
  double probability(TokenId token) const;
  double total() const;

  // Argmax with ties broken toward the smallest token id.
  TokenId top_token() const;
  // Up to `n` entries by decreasing probability (ties: smaller id first).
  std::vector<Entry> top(std::size_t n) const;

  int effective_n = 1;
  Source source = Source::kUnigramFallback;
  std::vector<MatchEvidence> evidence;

 private:
  std::vector<Entry> probs_;
};

}  // namespace igram
