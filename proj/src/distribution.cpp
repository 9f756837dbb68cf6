#include "igram/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace igram {

const char* to_string(Source source) {
  switch (source) {
    case Source::kReferenceExact: return "reference_exact";
    case Source::kContextExact: return "context_exact";
    case Source::kContextFuzzy: return "context_fuzzy";
    case Source::kUnigramFallback: return "unigram_fallback";
  }
  return "?";
}

NextTokenDistribution NextTokenDistribution::from_masses(std::vector<Entry> masses,
                                                         int effective_n, Source source) {
  std::sort(masses.begin(), masses.end(),
            [](const Entry& a, const Entry& b) { return a.first < b.first; });
  std::vector<Entry> merged;
  for (const auto& [token, mass] : masses) {
    if (!(mass >= 0.0) || !std::isfinite(mass)) {
      throw std::invalid_argument("masses must be finite and nonnegative");
    }
    if (mass == 0.0) continue;
    if (!merged.empty() && merged.back().first == token) {
      merged.back().second += mass;
    } else {
      merged.emplace_back(token, mass);
    }
  }
  double sum = 0.0;
  for (const auto& e : merged) sum += e.second;
  if (merged.empty() || !(sum > 0.0)) {
    throw std::invalid_argument("distribution has no positive mass");
  }
  for (auto& e : merged) e.second /= sum;

  NextTokenDistribution d;
  d.probs_ = std::move(merged);
  d.effective_n = effective_n;
  d.source = source;
  return d;
}

double NextTokenDistribution::probability(TokenId token) const {
  auto it = std::lower_bound(probs_.begin(), probs_.end(), token,
                             [](const Entry& e, TokenId t) { return e.first < t; });
  return it != probs_.end() && it->first == token ? it->second : 0.0;
}

double NextTokenDistribution::total() const {
  double sum = 0.0;
  for (const auto& e : probs_) sum += e.second;
  return sum;
}

TokenId NextTokenDistribution::top_token() const {
  if (probs_.empty()) throw std::logic_error("empty distribution has no top token");
  // Entries are id-sorted, so the first strict maximum is the smallest id.
  const Entry* best = &probs_.front();
  for (const auto& e : probs_) {
    if (e.second > best->second) best = &e;
  }
  return best->first;
}

std::vector<NextTokenDistribution::Entry> NextTokenDistribution::top(std::size_t n) const {
  std::vector<Entry> out = probs_;
  std::stable_sort(out.begin(), out.end(),
                   [](const Entry& a, const Entry& b) { return a.second > b.second; });
  if (out.size() > n) out.resize(n);
  return out;
}

}  // namespace igram
