#pragma once

// Test providers and synthetic corpora shared by the unit and acceptance suites.

#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <vector>

#include "igram/embedding.hpp"
#include "igram/tokenizer.hpp"

namespace igram::testing {

// Every window maps to the same vector.
class ConstantProvider final : public EmbeddingProvider {
 public:
  explicit ConstantProvider(int k, int dim = 8) : k_(k), dim_(dim) {}
  int window_len() const override { return k_; }
  int dim() const override { return dim_; }
  bool accepts(std::size_t len) const override { return len >= 1; }
  Embedding<float> embed(TokenSpan) const override { return Embedding<float>::Ones(dim_); }

 private:
  int k_, dim_;
};

// One-hot vector per distinct window content: cosine is 1 for equal windows
// and 0 otherwise.
class IndicatorProvider final : public EmbeddingProvider {
 public:
  explicit IndicatorProvider(int k, int dim = 8192) : k_(k), dim_(dim) {}
  int window_len() const override { return k_; }
  int dim() const override { return dim_; }
  bool accepts(std::size_t len) const override { return len >= 1; }
  Embedding<float> embed(TokenSpan window) const override {
    std::lock_guard lock(mu_);
    auto [it, inserted] = ids_.try_emplace(std::vector<TokenId>(window.begin(), window.end()), ids_.size());
    if (it->second >= static_cast<std::size_t>(dim_)) throw std::runtime_error("indicator provider exhausted");
    Embedding<float> v = Embedding<float>::Zero(dim_);
    v[static_cast<Eigen::Index>(it->second)] = 1.0f;
    return v;
  }

 private:
  int k_, dim_;
  mutable std::mutex mu_;
  mutable std::map<std::vector<TokenId>, std::size_t> ids_;
};

// Multiplies another provider's vectors by a positive constant.
class ScaledProvider final : public EmbeddingProvider {
 public:
  ScaledProvider(const EmbeddingProvider& inner, float scale) : inner_(inner), scale_(scale) {}
  int window_len() const override { return inner_.window_len(); }
  int dim() const override { return inner_.dim(); }
  double temperature() const override { return inner_.temperature(); }
  bool accepts(std::size_t len) const override { return inner_.accepts(len); }
  Embedding<float> embed(TokenSpan w) const override { return inner_.embed(w) * scale_; }

 private:
  const EmbeddingProvider& inner_;
  float scale_;
};

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, std::uint32_t vocab) {
  std::vector<TokenId> out(n);
  for (auto& t : out) t = static_cast<TokenId>(rng() % vocab);
  return out;
}

inline std::vector<TokenId> repeat_block(const std::vector<TokenId>& block, std::size_t times) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < times; ++i) out.insert(out.end(), block.begin(), block.end());
  return out;
}

// A periodic stream of `block_len` random tokens where each position is
// independently replaced by a random token with probability `noise`.
inline std::vector<TokenId> noisy_repetition(std::uint64_t seed, std::size_t length, std::size_t block_len,
                                             std::uint32_t vocab, double noise) {
  std::mt19937_64 rng(seed);
  const auto block = random_tokens(rng, block_len, vocab);
  std::vector<TokenId> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    out[i] = u < noise ? static_cast<TokenId>(rng() % vocab) : block[i % block_len];
  }
  return out;
}

// Synthetic "genre": a sparse second-order Markov source over a Zipfian
// vocabulary, whose transition table is fixed by `genre_seed`. Documents
// also re-use phrases they produced earlier, the way names and topics recur
// within real text. Two genres share the vocabulary but not the transitions.
class Genre {
 public:
  Genre(std::uint64_t genre_seed, std::uint32_t vocab) : seed_(genre_seed), vocab_(vocab) {
    // Zipf-like sampling table for unseen contexts.
    double z = 0;
    for (std::uint32_t r = 1; r <= vocab_; ++r) z += 1.0 / r;
    double acc = 0;
    for (std::uint32_t r = 1; r <= vocab_; ++r) {
      acc += 1.0 / r / z;
      cdf_.push_back(acc);
    }
  }

  std::vector<TokenId> generate(std::uint64_t seed, std::size_t length, std::size_t doc_len = 2048,
                                double copy_rate = 0.03) const {
    std::mt19937_64 rng(seed);
    std::vector<TokenId> out;
    out.reserve(length);
    std::size_t doc_start = 0;
    while (out.size() < length) {
      if (out.size() - doc_start >= doc_len) doc_start = out.size();
      const std::size_t in_doc = out.size() - doc_start;
      if (in_doc > 64 && uniform(rng) < copy_rate) {
        // Re-use an earlier phrase of this document.
        const std::size_t len = 8 + rng() % 17;
        const std::size_t from = doc_start + rng() % (in_doc - 32);
        for (std::size_t i = 0; i < len && from + i < out.size() && out.size() < length; ++i) {
          out.push_back(out[from + i]);
        }
        continue;
      }
      const TokenId a = out.size() >= 1 ? out.back() : 0;
      const TokenId b = out.size() >= 2 ? out[out.size() - 2] : 0;
      out.push_back(next(rng, b, a));
    }
    return out;
  }

  std::uint32_t vocab() const { return vocab_; }

 private:
  static double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  TokenId zipf(std::mt19937_64& rng) const {
    const double u = uniform(rng);
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<TokenId>(std::min<std::size_t>(it - cdf_.begin(), vocab_ - 1));
  }

  // Each (b, a) context prefers three successors fixed by the genre.
  TokenId next(std::mt19937_64& rng, TokenId b, TokenId a) const {
    const double u = uniform(rng);
    const std::uint64_t h = mix(seed_ ^ mix((static_cast<std::uint64_t>(b) << 32) | a));
    if (u < 0.55) return static_cast<TokenId>(h % vocab_);
    if (u < 0.75) return static_cast<TokenId>(mix(h) % vocab_);
    if (u < 0.85) return static_cast<TokenId>(mix(h + 1) % vocab_);
    return zipf(rng);
  }

  std::uint64_t seed_;
  std::uint32_t vocab_;
  std::vector<double> cdf_;
};

}  // namespace igram::testing
