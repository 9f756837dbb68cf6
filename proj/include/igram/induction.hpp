#pragma once

#include <map>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "igram/distribution.hpp"
#include "igram/embedding.hpp"
#include "igram/suffix_index.hpp"
#include "igram/types.hpp"

namespace igram {

// Exact in-context induction: the longest suffix of `context` that also
// occurs earlier with a follower inside the context, and the normalized
// followers of every such occurrence. The context's own terminus never
// counts. Without any repeat this is the context's unigram distribution.
NextTokenDistribution context_exact_distribution(TokenSpan context,
                                                 int max_len = kDefaultMaxExactLen);

// Fuzzy floating counts: every window of k' = min(k, |context| - 1) tokens
// that has a follower inside the context adds its similarity to the query
// window (the last k' tokens) to the count of that follower.
std::map<TokenId, double> fuzzy_counts(TokenSpan context, const EmbeddingProvider& provider);

// Normalized fuzzy counts. Contexts shorter than two tokens yield a uniform
// distribution over their tokens (source kUnigramFallback).
NextTokenDistribution fuzzy_distribution(TokenSpan context, const EmbeddingProvider& provider);

// Incremental fuzzy matcher for one decoding session. Window embeddings are
// computed once and kept while successive contexts share a prefix, so
// appending a token costs one new embedding. Not thread-safe.
class FuzzyMatcher {
 public:
  explicit FuzzyMatcher(std::shared_ptr<const EmbeddingProvider> provider);

  struct Scores {
    std::size_t window = 0;      // k'
    std::vector<double> log_weight;  // -(1 - cos) / T per candidate, by window start
    std::vector<double> weight;      // similarity in (0, 1]
  };

  // Similarity of every candidate window of `context` to its query window.
  // Requires |context| >= 2 and provider acceptance of k'.
  Scores score(TokenSpan context);

  std::map<TokenId, double> counts(TokenSpan context);
  NextTokenDistribution distribution(TokenSpan context, int effective_n);

  const EmbeddingProvider& provider() const { return *provider_; }
  // Number of window embeddings computed so far (cache instrumentation).
  std::uint64_t embeddings_computed() const { return computed_; }

 private:
  void sync(TokenSpan context, std::size_t window);

  std::shared_ptr<const EmbeddingProvider> provider_;
  std::vector<TokenId> tokens_;
  std::size_t window_ = 0;
  Eigen::MatrixXd unit_;  // dim x capacity, unit-norm window embeddings by end position
  Eigen::Index cols_ = 0;
  std::uint64_t computed_ = 0;
};

// Window length used for a context of `context_len` tokens.
inline std::size_t fuzzy_window(std::size_t provider_window, std::size_t context_len) {
  return std::min(provider_window, context_len - 1);
}

}  // namespace igram
