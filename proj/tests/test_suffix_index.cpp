#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "igram/suffix_index.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace igram;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("igram_sa_" + std::to_string(::getpid()) + "_" + name);
}

TokenSequence seq(std::vector<TokenId> t, std::uint32_t vocab = 16) { return TokenSequence(std::move(t), vocab); }

std::vector<std::uint64_t> rows(const SuffixIndex& index) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t r = 0; r < index.size(); ++r) out.push_back(index.suffix_at(r));
  return out;
}

std::vector<std::uint64_t> match_positions(const SuffixIndex& index, const SuffixMatch& m) {
  std::vector<std::uint64_t> out;
  for (auto r = m.occ_lo; r < m.occ_hi; ++r) out.push_back(index.suffix_at(r));
  std::sort(out.begin(), out.end());
  return out;
}

void check_against_oracle(const SuffixIndex& index, const std::vector<TokenId>& corpus,
                          const std::vector<TokenId>& query, int max_len) {
  const auto expect = oracle::longest_suffix(corpus, query, max_len);
  const auto m = find_longest_suffix(index, query, max_len);
  REQUIRE(m.match_len == expect.len);
  if (m.match_len > 0) {
    CHECK(match_positions(index, m) == expect.positions);
  } else {
    CHECK(m.occ_lo == 0);
    CHECK(m.occ_hi == corpus.size());
  }

  const auto want = oracle::next_token(corpus, query, max_len);
  const auto got = next_token_distribution(index, query, max_len);
  REQUIRE(got.effective_n == want.effective_n);
  REQUIRE(got.probs().size() == want.probs.size());
  for (const auto& [t, p] : want.probs) CHECK(got.probability(t) == doctest::Approx(p).epsilon(1e-12));
  std::vector<std::uint64_t> positions;
  for (const auto& e : got.evidence) positions.push_back(e.position);
  CHECK(positions == want.positions);
}

}  // namespace

TEST_CASE("suffix arrays match a naive sort") {
  // Values frozen from oracle::naive_suffix_array.
  REQUIRE(oracle::naive_suffix_array({1, 2, 1, 2, 3}) == std::vector<std::uint64_t>{0, 2, 1, 3, 4});
  REQUIRE(oracle::naive_suffix_array({5, 5, 5}) == std::vector<std::uint64_t>{2, 1, 0});
  CHECK(rows(build_index(seq({1, 2, 1, 2, 3}))) == std::vector<std::uint64_t>{0, 2, 1, 3, 4});
  CHECK(rows(build_index(seq({7}))) == std::vector<std::uint64_t>{0});
  CHECK(rows(build_index(seq({5, 5, 5}))) == std::vector<std::uint64_t>{2, 1, 0});

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint32_t vocab = 1 + rng() % 6;
    const auto corpus = testing::random_tokens(rng, 1 + rng() % 200, vocab);
    CHECK(suffix_array(corpus) == oracle::naive_suffix_array(corpus));
  }
  const auto periodic = testing::repeat_block({1, 2, 3, 4}, 50);
  CHECK(suffix_array(periodic) == oracle::naive_suffix_array(periodic));
}

TEST_CASE("build rejects an empty corpus") {
  CHECK_THROWS_AS(build_index(seq({})), std::invalid_argument);
}

TEST_CASE("index invariants: permutation and unigram totals") {
  std::mt19937_64 rng(5);
  const auto corpus = testing::random_tokens(rng, 1000, 9);
  const auto index = build_index(seq(corpus));
  auto r = rows(index);
  std::sort(r.begin(), r.end());
  for (std::uint64_t i = 0; i < r.size(); ++i) REQUIRE(r[i] == i);
  std::uint64_t total = 0;
  for (const auto& [t, c] : index.unigram_counts()) total += c;
  CHECK(total == corpus.size());
}

TEST_CASE("longest suffix on the worked examples") {
  const auto index = build_index(seq({1, 2, 1, 2, 3}));

  auto m = find_longest_suffix(index, std::vector<TokenId>{9, 1, 2});
  CHECK(m.match_len == 2);
  CHECK(m.effective_n() == 3);
  CHECK(match_positions(index, m) == std::vector<std::uint64_t>{0, 2});

  m = find_longest_suffix(index, std::vector<TokenId>{9});
  CHECK(m.match_len == 0);
  CHECK(m.effective_n() == 1);
  CHECK(m.occ_lo == 0);
  CHECK(m.occ_hi == 5);

  m = find_longest_suffix(index, std::vector<TokenId>{2, 3});
  CHECK(m.match_len == 2);
  CHECK(match_positions(index, m) == std::vector<std::uint64_t>{3});

  m = find_longest_suffix(index, std::vector<TokenId>{});
  CHECK(m.match_len == 0);
  CHECK(m.count() == 5);
}

TEST_CASE("next-token distribution on the worked examples") {
  const auto index = build_index(seq({1, 2, 1, 2, 3}));

  auto d = next_token_distribution(index, std::vector<TokenId>{1, 2});
  CHECK(d.effective_n == 3);
  CHECK(d.source == Source::kReferenceExact);
  CHECK(d.probability(1) == doctest::Approx(0.5));
  CHECK(d.probability(3) == doctest::Approx(0.5));
  REQUIRE(d.evidence.size() == 2);
  CHECK(d.evidence[0].position == 0);
  CHECK(d.evidence[1].position == 2);

  d = next_token_distribution(index, std::vector<TokenId>{9});
  CHECK(d.effective_n == 1);
  CHECK(d.source == Source::kUnigramFallback);
  CHECK(d.probability(1) == doctest::Approx(0.4));
  CHECK(d.probability(2) == doctest::Approx(0.4));
  CHECK(d.probability(3) == doctest::Approx(0.2));

  // [2,3] and [3] only occur at the very end; both back off to the unigram.
  d = next_token_distribution(index, std::vector<TokenId>{2, 3});
  CHECK(d.effective_n == 1);
  CHECK(d.source == Source::kUnigramFallback);
  CHECK(d.probability(3) == doctest::Approx(0.2));
}

TEST_CASE("max_len trims the query before matching") {
  const auto index = build_index(seq({1, 2, 3, 4, 1, 2, 3, 5}));
  const std::vector<TokenId> q{1, 2, 3};
  CHECK(find_longest_suffix(index, q, 3).match_len == 3);
  CHECK(find_longest_suffix(index, q, 2).match_len == 2);
  CHECK(next_token_distribution(index, q, 1).effective_n == 2);
  CHECK_THROWS_AS(find_longest_suffix(index, q, 0), std::invalid_argument);
}

TEST_CASE("randomized oracle equivalence") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint32_t vocab = 1 + rng() % 16;
    const auto corpus = testing::random_tokens(rng, 1 + rng() % 256, vocab);
    const auto index = build_index(seq(corpus, 16));
    for (int q = 0; q < 3; ++q) {
      auto query = testing::random_tokens(rng, rng() % 33, vocab + 1);
      if (rng() % 2 && corpus.size() > 4) {
        // Splice in a corpus substring so long matches are common.
        const auto from = rng() % (corpus.size() - 2);
        const auto len = 1 + rng() % std::min<std::size_t>(20, corpus.size() - from);
        query.insert(query.end(), corpus.begin() + from, corpus.begin() + from + len);
      }
      check_against_oracle(index, corpus, query, 1 + static_cast<int>(rng() % 40));
    }
  }
}

TEST_CASE("prepending to a query never lengthens the match") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto corpus = testing::random_tokens(rng, 1 + rng() % 200, 4);
    const auto index = build_index(seq(corpus));
    auto query = testing::random_tokens(rng, 1 + rng() % 10, 4);
    auto prev = find_longest_suffix(index, query).match_len;
    for (int i = 0; i < 5; ++i) {
      query.insert(query.begin(), static_cast<TokenId>(rng() % 4));
      const auto now = find_longest_suffix(index, query).match_len;
      CHECK(now >= prev);  // prepending can only keep or extend the match ...
      CHECK(now <= prev + 1);  // ... and by at most the new token
      prev = now;
    }
  }
}

TEST_CASE("distributions are normalized and deterministic") {
  std::mt19937_64 rng(99);
  const auto corpus = testing::random_tokens(rng, 3000, 12);
  const auto index = build_index(seq(corpus));
  for (int trial = 0; trial < 200; ++trial) {
    const auto q = testing::random_tokens(rng, 1 + rng() % 12, 12);
    const auto a = next_token_distribution(index, q);
    const auto b = next_token_distribution(index, q);
    CHECK(a.total() == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto& [t, p] : a.probs()) CHECK(p >= 0.0);
    CHECK(a.probs() == b.probs());
    CHECK(a.evidence == b.evidence);
    CHECK(std::is_sorted(a.evidence.begin(), a.evidence.end(),
                         [](const MatchEvidence& x, const MatchEvidence& y) { return x.position < y.position; }));
  }
}

TEST_CASE("persisted indexes answer queries identically") {
  const auto path = temp_path("rt.igrx");
  const auto index = build_index(seq({1, 2, 1, 2, 3}));
  persist_index(index, path);
  const auto opened = open_index(path, true);
  CHECK(opened.size() == 5);
  CHECK(opened.vocab_size() == 16);
  CHECK(rows(opened) == rows(index));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto q = testing::random_tokens(rng, rng() % 6, 5);
    const auto a = next_token_distribution(index, q);
    const auto b = next_token_distribution(opened, q);
    CHECK(a.probs() == b.probs());
    CHECK(a.effective_n == b.effective_n);
    CHECK(a.evidence == b.evidence);
  }

  // Wider tokens take the two-byte layout.
  const auto wide = build_index(TokenSequence(testing::random_tokens(rng, 500, 1000), 1000));
  CHECK(wide.token_width() == 2);
  persist_index(wide, path);
  CHECK(rows(open_index(path, true)) == rows(wide));
  std::filesystem::remove(path);
}

TEST_CASE("opening malformed index files fails cleanly") {
  const auto path = temp_path("bad.igrx");
  persist_index(build_index(seq({1, 2, 1, 2, 3})), path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::vector<char>& b) {
    std::ofstream(path, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  auto bad = bytes;
  std::copy_n("XXXX", 4, bad.begin());
  write(bad);
  CHECK_THROWS_AS(open_index(path), FormatError);

  bad = bytes;
  bad[4] = 2;
  write(bad);
  CHECK_THROWS_AS(open_index(path), FormatError);

  bad = bytes;
  bad.resize(bad.size() - 3);
  write(bad);
  CHECK_THROWS_AS(open_index(path), FormatError);

  // Suffix array [0,2,1,3,4] corrupted to [0,0,1,3,4].
  bad = bytes;
  const std::size_t sa_at = 24 + 5;
  bad[sa_at + 4] = 0;
  write(bad);
  CHECK_NOTHROW(open_index(path, false));
  CHECK_THROWS_AS(open_index(path, true), IntegrityError);
  std::filesystem::remove(path);
}

TEST_CASE("query counter tracks searches") {
  const auto index = build_index(seq({1, 2, 3}));
  const auto before = index.query_count();
  (void)find_longest_suffix(index, std::vector<TokenId>{1});
  (void)next_token_distribution(index, std::vector<TokenId>{2});
  CHECK(index.query_count() == before + 2);
}
