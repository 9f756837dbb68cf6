#include "igram/induction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace igram {
namespace {

// z[i] = length of the longest common prefix of s and s[i..]; z[0] = |s|.
std::vector<std::size_t> z_function(const std::vector<TokenId>& s) {
  const std::size_t n = s.size();
  std::vector<std::size_t> z(n, 0);
  if (n == 0) return z;
  z[0] = n;
  std::size_t l = 0, r = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (i < r) z[i] = std::min(r - i, z[i - l]);
    while (i + z[i] < n && s[z[i]] == s[i + z[i]]) ++z[i];
    if (i + z[i] > r) {
      l = i;
      r = i + z[i];
    }
  }
  return z;
}

NextTokenDistribution context_unigram(TokenSpan context, Source source, int effective_n) {
  std::vector<NextTokenDistribution::Entry> masses;
  masses.reserve(context.size());
  for (TokenId t : context) masses.emplace_back(t, 1.0);
  return NextTokenDistribution::from_masses(std::move(masses), effective_n, source);
}

}  // namespace

NextTokenDistribution context_exact_distribution(TokenSpan context, int max_len) {
  if (context.empty()) throw std::invalid_argument("context must not be empty");
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  const std::size_t n = context.size();
  const std::size_t cap = static_cast<std::size_t>(max_len);

  // Common suffix of context[0..j] and the whole context, via the Z-function
  // of the reversed context.
  std::vector<TokenId> rev(context.rbegin(), context.rend());
  const auto z = z_function(rev);
  auto common_suffix = [&](std::size_t j) { return std::min(z[n - 1 - j], cap); };

  std::size_t best = 0;
  for (std::size_t j = 0; j + 1 < n; ++j) best = std::max(best, common_suffix(j));
  if (best == 0) return context_unigram(context, Source::kUnigramFallback, 1);

  std::vector<MatchEvidence> evidence;
  std::vector<NextTokenDistribution::Entry> masses;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    if (common_suffix(j) == best) {
      evidence.push_back({j + 1 - best, static_cast<std::uint32_t>(best), context[j + 1], 1.0});
      masses.emplace_back(context[j + 1], 1.0);
    }
  }
  auto dist = NextTokenDistribution::from_masses(std::move(masses), static_cast<int>(best) + 1,
                                                 Source::kContextExact);
  dist.evidence = std::move(evidence);
  return dist;
}

FuzzyMatcher::FuzzyMatcher(std::shared_ptr<const EmbeddingProvider> provider)
    : provider_(std::move(provider)) {
  if (!provider_) throw std::invalid_argument("fuzzy matcher needs an embedding provider");
}

void FuzzyMatcher::sync(TokenSpan context, std::size_t window) {
  std::size_t common = 0;
  if (window == window_) {
    const auto limit = std::min(tokens_.size(), context.size());
    while (common < limit && tokens_[common] == context[common]) ++common;
  }
  // Column c holds the window ending at position c + window - 1.
  const auto keep = common >= window ? static_cast<Eigen::Index>(common - window + 1) : 0;
  cols_ = std::min(cols_, keep);
  window_ = window;
  tokens_.assign(context.begin(), context.end());

  const auto needed = static_cast<Eigen::Index>(context.size() - window + 1);
  const auto dim = provider_->dim();
  if (unit_.rows() != dim || unit_.cols() < needed) {
    Eigen::MatrixXd grown(dim, std::max<Eigen::Index>(needed, 2 * unit_.cols()));
    if (unit_.rows() == dim && cols_ > 0) grown.leftCols(cols_) = unit_.leftCols(cols_);
    else cols_ = 0;
    unit_ = std::move(grown);
  }
  for (; cols_ < needed; ++cols_) {
    auto v = provider_->embed(context.subspan(static_cast<std::size_t>(cols_), window)).cast<double>().eval();
    if (v.size() != dim || !v.allFinite()) throw std::runtime_error("provider returned an invalid embedding");
    const double norm = v.norm();
    if (!(norm > 0.0)) throw std::runtime_error("provider returned a zero embedding");
    unit_.col(cols_) = v / norm;
    ++computed_;
  }
}

FuzzyMatcher::Scores FuzzyMatcher::score(TokenSpan context) {
  if (context.size() < 2) throw std::invalid_argument("fuzzy matching needs at least two context tokens");
  const std::size_t window = fuzzy_window(static_cast<std::size_t>(provider_->window_len()), context.size());
  if (!provider_->accepts(window)) {
    throw std::invalid_argument("provider cannot embed windows of " + std::to_string(window) + " tokens");
  }
  sync(context, window);

  const auto candidates = static_cast<Eigen::Index>(context.size() - window);
  const auto query = unit_.col(candidates);
  const Eigen::VectorXd cosines = unit_.leftCols(candidates).transpose() * query;

  const double inv_t = 1.0 / provider_->temperature();
  Scores s;
  s.window = window;
  s.log_weight.resize(static_cast<std::size_t>(candidates));
  s.weight.resize(static_cast<std::size_t>(candidates));
  for (Eigen::Index c = 0; c < candidates; ++c) {
    double cos = std::clamp(cosines[c], -1.0, 1.0);
    if (cos > 1.0 - 1e-9 && unit_.col(c) == query) cos = 1.0;
    s.log_weight[c] = -(1.0 - cos) * inv_t;
    s.weight[c] = std::max(std::exp(s.log_weight[c]), std::numeric_limits<double>::min());
  }
  return s;
}

std::map<TokenId, double> FuzzyMatcher::counts(TokenSpan context) {
  const auto s = score(context);
  std::map<TokenId, double> out;
  for (std::size_t c = 0; c < s.weight.size(); ++c) out[context[c + s.window]] += s.weight[c];
  return out;
}

NextTokenDistribution FuzzyMatcher::distribution(TokenSpan context, int effective_n) {
  if (context.empty()) throw std::invalid_argument("context must not be empty");
  if (context.size() < 2) return context_unigram(context, Source::kUnigramFallback, effective_n);

  const auto s = score(context);
  // Normalize in the log domain so that vanishing similarities keep their ratios.
  const double top = *std::max_element(s.log_weight.begin(), s.log_weight.end());
  std::vector<NextTokenDistribution::Entry> masses;
  std::vector<MatchEvidence> evidence;
  masses.reserve(s.weight.size());
  evidence.reserve(s.weight.size());
  for (std::size_t c = 0; c < s.weight.size(); ++c) {
    const TokenId follower = context[c + s.window];
    masses.emplace_back(follower, std::exp(s.log_weight[c] - top));
    evidence.push_back({c, static_cast<std::uint32_t>(s.window), follower, s.weight[c]});
  }
  std::stable_sort(evidence.begin(), evidence.end(),
                   [](const MatchEvidence& a, const MatchEvidence& b) { return a.weight > b.weight; });
  auto dist = NextTokenDistribution::from_masses(std::move(masses), effective_n, Source::kContextFuzzy);
  dist.evidence = std::move(evidence);
  return dist;
}

std::map<TokenId, double> fuzzy_counts(TokenSpan context, const EmbeddingProvider& provider) {
  FuzzyMatcher m(std::shared_ptr<const EmbeddingProvider>(&provider, [](const EmbeddingProvider*) {}));
  return m.counts(context);
}

NextTokenDistribution fuzzy_distribution(TokenSpan context, const EmbeddingProvider& provider) {
  FuzzyMatcher m(std::shared_ptr<const EmbeddingProvider>(&provider, [](const EmbeddingProvider*) {}));
  const int n_x = context.empty() ? 1 : context_exact_distribution(context).effective_n;
  return m.distribution(context, n_x);
}

}  // namespace igram
