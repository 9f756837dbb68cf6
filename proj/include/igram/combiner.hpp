#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "igram/distribution.hpp"
#include "igram/embedding.hpp"
#include "igram/induction.hpp"
#include "igram/suffix_index.hpp"
#include "igram/tokenizer.hpp"

namespace igram {

inline constexpr int kDefaultTau = 8;

enum class Branch { kReferenceExact, kContextExact, kContextFuzzy };

const char* to_string(Branch branch);

// Hard routing between the reference corpus, exact in-context matching and
// fuzzy in-context matching. On equal effective n the context wins.
constexpr Branch route(int n_inf, int n_x, int tau) {
  if (n_inf > n_x && n_inf > tau) return Branch::kReferenceExact;
  if (n_x >= n_inf && n_x > tau) return Branch::kContextExact;
  return Branch::kContextFuzzy;
}

enum class Mode {
  kInductionGram,       // reference + exact context + fuzzy context
  kInfiniGram,          // reference only
  kInductionOnlyExact,  // exact context matching, no threshold
  kInductionOnlyFuzzy,  // exact context above tau, fuzzy below
  kPureFuzzy,           // fuzzy context matching only
};

const char* to_string(Mode mode);
std::optional<Mode> parse_mode(const std::string& name);

struct CombinerConfig {
  int tau = kDefaultTau;
  int max_exact_len = kDefaultMaxExactLen;
  std::optional<SuffixIndex> reference;
  std::shared_ptr<const EmbeddingProvider> provider;
  Mode mode = Mode::kInductionGram;

  // Fuzzy window size (the provider's window length).
  int k() const { return provider ? provider->window_len() : 0; }
  // Throws std::invalid_argument when a field violates its range or a mode
  // lacks what it needs (a reference for Infini-Gram, a provider for fuzzy).
  void validate() const;
};

struct Prediction {
  NextTokenDistribution distribution;
  Branch branch = Branch::kContextFuzzy;
  int n_inf = 0;  // 0 when no reference is consulted
  int n_x = 1;
  TokenId top_token = 0;
};

// Stateful predictor for one decoding session; keeps the fuzzy matcher's
// window embeddings across calls whose contexts share a prefix.
class Predictor {
 public:
  explicit Predictor(CombinerConfig config);

  Prediction predict(TokenSpan context);
  const CombinerConfig& config() const { return config_; }
  const FuzzyMatcher* fuzzy() const { return fuzzy_ ? &*fuzzy_ : nullptr; }

 private:
  NextTokenDistribution fuzzy_branch(TokenSpan context, int n_x);

  CombinerConfig config_;
  std::optional<FuzzyMatcher> fuzzy_;
};

// Effective n against the reference after boundary back-off; 0 without one.
int reference_effective_n(const CombinerConfig& config, TokenSpan context);

Prediction predict(TokenSpan context, const CombinerConfig& config);
// Same routing with the reference disabled (n_inf = 0).
Prediction predict_induction_only_fuzzy(TokenSpan context, const CombinerConfig& config);

struct ExplanationItem {
  std::uint64_t position = 0;
  std::uint32_t length = 0;
  std::string window_text;
  double weight = 0.0;
  TokenId follower = 0;
  std::string follower_text;
};

struct Explanation {
  Branch branch = Branch::kContextFuzzy;
  Source source = Source::kUnigramFallback;
  int n_inf = 0;
  int n_x = 1;
  int effective_n = 1;
  bool matched = false;
  std::string searched;  // "reference" or "context"
  std::vector<std::pair<TokenId, double>> top_tokens;
  std::vector<ExplanationItem> evidence;

  std::string render(const Vocabulary& vocab) const;
  nlohmann::json to_json(const Vocabulary& vocab) const;
};

// Renders the branch, effective n values and the top five evidence spans.
// Reference-branch spans are read from `reference`.
Explanation explain(const Prediction& prediction, TokenSpan context, const Vocabulary& vocab,
                    const SuffixIndex* reference = nullptr);

// Display text for a token run: decoded surfaces with control bytes escaped.
std::string render_tokens(TokenSpan tokens, const Vocabulary& vocab);

}  // namespace igram
