#include "igram/suffix_index.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>

#include "igram/binary_io.hpp"

namespace igram {

struct SuffixIndex::Data {
  std::vector<unsigned char> owned;
  MappedFile mapped;
  const unsigned char* tokens = nullptr;
  const unsigned char* sa = nullptr;
  std::uint64_t n = 0;
  std::uint32_t vocab_size = 0;
  std::uint8_t token_width = 0;
  std::uint8_t sa_width = 0;

  std::once_flag unigram_once;
  std::vector<std::pair<TokenId, std::uint64_t>> unigram;
  mutable std::atomic<std::uint64_t> queries{0};
};

const SuffixIndex::Data& index_data(const SuffixIndex& index) {
  if (!index.data_) throw std::logic_error("empty SuffixIndex");
  return *index.data_;
}

namespace {

constexpr std::uint32_t kIndexVersion = 1;
constexpr std::size_t kHeaderBytes = 24;

template <typename T>
T load(const unsigned char* base, std::uint64_t i) {
  if constexpr (std::endian::native == std::endian::little) {
    T v;
    std::memcpy(&v, base + i * sizeof(T), sizeof(T));
    return v;
  } else {
    return static_cast<T>(get_le(base + i * sizeof(T), sizeof(T)));
  }
}

std::uint64_t load_width(const unsigned char* base, std::uint64_t i, std::size_t width) {
  switch (width) {
    case 1: return base[i];
    case 2: return load<std::uint16_t>(base, i);
    case 4: return load<std::uint32_t>(base, i);
    default: return load<std::uint64_t>(base, i);
  }
}

// Typed view of an index used by the hot search loops.
template <typename Tok, typename Sa>
struct View {
  const unsigned char* tokens;
  const unsigned char* sa;
  std::uint64_t n;

  TokenId tok(std::uint64_t pos) const { return load<Tok>(tokens, pos); }
  std::uint64_t row(std::uint64_t r) const { return load<Sa>(sa, r); }

  // Three-way comparison of the suffix at `pos`, truncated to |pattern|, with
  // the pattern. A suffix that runs out first compares less.
  int compare(std::uint64_t pos, TokenSpan pattern) const {
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (pos + i >= n) return -1;
      const TokenId t = tok(pos + i);
      if (t != pattern[i]) return t < pattern[i] ? -1 : 1;
    }
    return 0;
  }

  std::pair<std::uint64_t, std::uint64_t> range(TokenSpan pattern, std::uint64_t lo,
                                                std::uint64_t hi) const {
    std::uint64_t a = lo, b = hi;
    while (a < b) {
      auto mid = a + (b - a) / 2;
      if (compare(row(mid), pattern) < 0) a = mid + 1; else b = mid;
    }
    std::uint64_t first = a;
    b = hi;
    while (a < b) {
      auto mid = a + (b - a) / 2;
      if (compare(row(mid), pattern) <= 0) a = mid + 1; else b = mid;
    }
    return {first, a};
  }

  // Longest suffix of `query` (already trimmed to max_len) present in the
  // corpus. Presence is monotone in the suffix length, so the length itself
  // is binary searched.
  SuffixMatch longest(TokenSpan query) const {
    SuffixMatch best{0, 0, n};
    std::uint64_t lo = 1, hi = query.size();
    while (lo <= hi) {
      const auto len = lo + (hi - lo) / 2;
      auto [a, b] = range(query.last(len), 0, n);
      if (a < b) {
        best = {len, a, b};
        lo = len + 1;
      } else {
        hi = len - 1;
      }
    }
    return best;
  }
};

template <typename F>
decltype(auto) dispatch(const SuffixIndex::Data& d, F&& f) {
  auto with_sa = [&](auto tok_tag) -> decltype(auto) {
    using Tok = decltype(tok_tag);
    if (d.sa_width == 4) return f(View<Tok, std::uint32_t>{d.tokens, d.sa, d.n});
    return f(View<Tok, std::uint64_t>{d.tokens, d.sa, d.n});
  };
  switch (d.token_width) {
    case 1: return with_sa(std::uint8_t{});
    case 2: return with_sa(std::uint16_t{});
    default: return with_sa(std::uint32_t{});
  }
}

// Prefix doubling with two-pass radix sort. Rank 0 is reserved for "past the
// end", which makes a proper prefix sort before its extensions.
template <typename Idx>
std::vector<Idx> prefix_doubling(TokenSpan corpus) {
  const std::size_t n = corpus.size();
  std::vector<Idx> sa(n), rank(n), tmp(n), next_rank(n);
  if (n == 0) return sa;

  std::vector<TokenId> alphabet(corpus.begin(), corpus.end());
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<Idx>(
        std::lower_bound(alphabet.begin(), alphabet.end(), corpus[i]) - alphabet.begin() + 1);
  }
  std::size_t max_rank = alphabet.size();
  std::iota(sa.begin(), sa.end(), Idx{0});
  if (max_rank == n) {
    std::sort(sa.begin(), sa.end(), [&](Idx a, Idx b) { return rank[a] < rank[b]; });
    return sa;
  }

  std::vector<std::size_t> bucket;
  for (std::size_t k = 1;; k <<= 1) {
    auto second = [&](Idx i) -> Idx { return i + k < n ? rank[i + k] : Idx{0}; };
    bucket.assign(max_rank + 2, 0);
    for (std::size_t i = 0; i < n; ++i) ++bucket[second(static_cast<Idx>(i)) + 1];
    for (std::size_t r = 1; r < bucket.size(); ++r) bucket[r] += bucket[r - 1];
    for (std::size_t i = 0; i < n; ++i) tmp[bucket[second(static_cast<Idx>(i))]++] = static_cast<Idx>(i);

    bucket.assign(max_rank + 2, 0);
    for (std::size_t i = 0; i < n; ++i) ++bucket[rank[i] + 1];
    for (std::size_t r = 1; r < bucket.size(); ++r) bucket[r] += bucket[r - 1];
    for (std::size_t j = 0; j < n; ++j) sa[bucket[rank[tmp[j]]]++] = tmp[j];

    next_rank[sa[0]] = 1;
    Idx r = 1;
    for (std::size_t j = 1; j < n; ++j) {
      if (rank[sa[j]] != rank[sa[j - 1]] || second(sa[j]) != second(sa[j - 1])) ++r;
      next_rank[sa[j]] = r;
    }
    rank.swap(next_rank);
    max_rank = r;
    if (max_rank == n) break;
  }
  return sa;
}

void append_width(std::vector<unsigned char>& out, std::uint64_t value, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) {
    out.push_back(static_cast<unsigned char>(value & 0xFFu));
    value >>= 8;
  }
}

}  // namespace

std::uint64_t SuffixIndex::size() const { return index_data(*this).n; }
std::uint32_t SuffixIndex::vocab_size() const { return index_data(*this).vocab_size; }
std::uint8_t SuffixIndex::token_width() const { return index_data(*this).token_width; }
std::uint8_t SuffixIndex::sa_width() const { return index_data(*this).sa_width; }

TokenId SuffixIndex::token(std::uint64_t pos) const {
  const auto& d = index_data(*this);
  if (pos >= d.n) throw std::out_of_range("corpus position out of range");
  return static_cast<TokenId>(load_width(d.tokens, pos, d.token_width));
}

std::uint64_t SuffixIndex::suffix_at(std::uint64_t row) const {
  const auto& d = index_data(*this);
  if (row >= d.n) throw std::out_of_range("suffix-array row out of range");
  return load_width(d.sa, row, d.sa_width);
}

std::vector<TokenId> SuffixIndex::tokens(std::uint64_t pos, std::uint64_t len) const {
  const auto& d = index_data(*this);
  if (pos > d.n || len > d.n - pos) throw std::out_of_range("corpus span out of range");
  std::vector<TokenId> out(len);
  for (std::uint64_t i = 0; i < len; ++i) {
    out[i] = static_cast<TokenId>(load_width(d.tokens, pos + i, d.token_width));
  }
  return out;
}

const std::vector<std::pair<TokenId, std::uint64_t>>& SuffixIndex::unigram_counts() const {
  auto& d = const_cast<Data&>(index_data(*this));
  std::call_once(d.unigram_once, [&] {
    // Rows of the suffix array are grouped by first token.
    dispatch(d, [&](const auto& v) {
      for (std::uint64_t r = 0; r < v.n; ++r) {
        const TokenId t = v.tok(v.row(r));
        if (!d.unigram.empty() && d.unigram.back().first == t) {
          ++d.unigram.back().second;
        } else {
          d.unigram.emplace_back(t, 1);
        }
      }
      return 0;
    });
  });
  return d.unigram;
}

std::uint64_t SuffixIndex::query_count() const {
  return index_data(*this).queries.load(std::memory_order_relaxed);
}

std::vector<std::uint64_t> suffix_array(TokenSpan corpus) {
  if (corpus.size() < (std::uint64_t{1} << 32) - 1) {
    auto sa = prefix_doubling<std::uint32_t>(corpus);
    return {sa.begin(), sa.end()};
  }
  return prefix_doubling<std::uint64_t>(corpus);
}

SuffixIndex build_index(const TokenSequence& corpus) {
  if (corpus.empty()) throw std::invalid_argument("cannot index an empty corpus");
  auto d = std::make_shared<SuffixIndex::Data>();
  d->n = corpus.size();
  d->vocab_size = corpus.vocab_size();
  d->token_width = token_width_for(corpus.vocab_size());
  d->sa_width = d->n >= (std::uint64_t{1} << 32) ? 8 : 4;

  const auto sa = suffix_array(corpus);
  d->owned.reserve(d->n * (d->token_width + d->sa_width));
  for (TokenId t : corpus) append_width(d->owned, t, d->token_width);
  for (auto p : sa) append_width(d->owned, p, d->sa_width);
  d->tokens = d->owned.data();
  d->sa = d->owned.data() + d->n * d->token_width;
  return SuffixIndex(std::move(d));
}

SuffixMatch find_longest_suffix(const SuffixIndex& index, TokenSpan query, int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  const auto& d = index_data(index);
  d.queries.fetch_add(1, std::memory_order_relaxed);
  if (query.size() > static_cast<std::size_t>(max_len)) query = query.last(max_len);
  return dispatch(d, [&](const auto& v) { return v.longest(query); });
}

NextTokenDistribution next_token_distribution(const SuffixIndex& index, TokenSpan query,
                                              int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  const auto& d = index_data(index);
  d.queries.fetch_add(1, std::memory_order_relaxed);
  if (query.size() > static_cast<std::size_t>(max_len)) query = query.last(max_len);

  return dispatch(d, [&](const auto& v) {
    SuffixMatch m = v.longest(query);
    std::vector<MatchEvidence> evidence;
    while (m.match_len > 0) {
      for (auto r = m.occ_lo; r < m.occ_hi; ++r) {
        const auto p = v.row(r);
        if (p + m.match_len < v.n) {
          evidence.push_back({p, static_cast<std::uint32_t>(m.match_len), v.tok(p + m.match_len), 1.0});
        }
      }
      if (!evidence.empty()) break;
      // Every occurrence ends the corpus: back off one token.
      --m.match_len;
      if (m.match_len > 0) {
        auto [a, b] = v.range(query.last(m.match_len), 0, v.n);
        m.occ_lo = a;
        m.occ_hi = b;
      }
    }

    if (m.match_len == 0) {
      std::vector<NextTokenDistribution::Entry> masses;
      for (const auto& [t, c] : index.unigram_counts()) masses.emplace_back(t, static_cast<double>(c));
      return NextTokenDistribution::from_masses(std::move(masses), 1, Source::kUnigramFallback);
    }

    std::sort(evidence.begin(), evidence.end(),
              [](const MatchEvidence& a, const MatchEvidence& b) { return a.position < b.position; });
    std::vector<NextTokenDistribution::Entry> masses;
    masses.reserve(evidence.size());
    for (const auto& e : evidence) masses.emplace_back(e.following_token, 1.0);
    auto dist = NextTokenDistribution::from_masses(std::move(masses), m.effective_n(),
                                                   Source::kReferenceExact);
    dist.evidence = std::move(evidence);
    return dist;
  });
}

void persist_index(const SuffixIndex& index, const std::filesystem::path& path) {
  const auto& d = index_data(index);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("IGRX", 4);
  put_le<std::uint32_t>(out, kIndexVersion);
  put_le<std::uint32_t>(out, d.vocab_size);
  put_le<std::uint8_t>(out, d.token_width);
  put_le<std::uint8_t>(out, d.sa_width);
  out.write("\0\0", 2);
  put_le<std::uint64_t>(out, d.n);
  // In-memory buffers already use the on-disk little-endian layout.
  out.write(reinterpret_cast<const char*>(d.tokens), static_cast<std::streamsize>(d.n * d.token_width));
  out.write(reinterpret_cast<const char*>(d.sa), static_cast<std::streamsize>(d.n * d.sa_width));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SuffixIndex open_index(const std::filesystem::path& path, bool validate) {
  auto d = std::make_shared<SuffixIndex::Data>();
  d->mapped = MappedFile(path);
  ByteCursor cur(d->mapped.bytes());
  cur.expect_magic("IGRX");
  const auto version_at = cur.offset();
  if (auto version = cur.read(4); version != kIndexVersion) {
    throw FormatError("unsupported index version " + std::to_string(version), version_at);
  }
  const auto vocab_at = cur.offset();
  d->vocab_size = static_cast<std::uint32_t>(cur.read(4));
  if (d->vocab_size == 0) throw FormatError("vocabulary size is zero", vocab_at);
  const auto tw_at = cur.offset();
  d->token_width = static_cast<std::uint8_t>(cur.read(1));
  if (d->token_width != 1 && d->token_width != 2 && d->token_width != 4) {
    throw FormatError("token width must be 1, 2 or 4", tw_at);
  }
  const auto sw_at = cur.offset();
  d->sa_width = static_cast<std::uint8_t>(cur.read(1));
  if (d->sa_width != 4 && d->sa_width != 8) throw FormatError("sa width must be 4 or 8", sw_at);
  cur.skip(2);
  const auto n_at = cur.offset();
  d->n = cur.read(8);
  if (d->n == 0) throw FormatError("index is empty", n_at);
  if (d->n >= (std::uint64_t{1} << 32) && d->sa_width != 8) {
    throw FormatError("sa width must be 8 for corpora of 2^32 tokens or more", sw_at);
  }
  const std::uint64_t per_token = d->token_width + d->sa_width;
  if (d->n > cur.remaining() / per_token) {
    throw FormatError("truncated index payload", cur.offset());
  }
  d->tokens = cur.take(d->n * d->token_width).data();
  d->sa = cur.take(d->n * d->sa_width).data();
  if (cur.remaining() != 0) throw FormatError("trailing bytes after index payload", cur.offset());
  static_assert(kHeaderBytes == 24);

  if (validate) {
    std::vector<bool> seen(d->n, false);
    TokenId prev_first = 0;
    for (std::uint64_t r = 0; r < d->n; ++r) {
      const auto p = load_width(d->sa, r, d->sa_width);
      if (p >= d->n || seen[p]) {
        throw IntegrityError("suffix array is not a permutation (row " + std::to_string(r) + ")");
      }
      seen[p] = true;
      const auto first = static_cast<TokenId>(load_width(d->tokens, p, d->token_width));
      if (r > 0 && first < prev_first) {
        throw IntegrityError("suffix array is not sorted (row " + std::to_string(r) + ")");
      }
      prev_first = first;
    }
    for (std::uint64_t i = 0; i < d->n; ++i) {
      if (load_width(d->tokens, i, d->token_width) >= d->vocab_size) {
        throw IntegrityError("token at position " + std::to_string(i) + " exceeds vocabulary");
      }
    }
  }
  return SuffixIndex(std::move(d));
}

}  // namespace igram
