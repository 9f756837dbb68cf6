#include <doctest.h>

#include <cmath>
#include <random>

#include "igram/induction.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace igram;
using testing::ConstantProvider;
using testing::IndicatorProvider;

namespace {

std::shared_ptr<const EmbeddingProvider> share(const EmbeddingProvider& p) {
  return {&p, [](const EmbeddingProvider*) {}};
}

}  // namespace

TEST_CASE("context exact matching on the worked examples") {
  auto d = context_exact_distribution(std::vector<TokenId>{7, 8, 9, 7, 8});
  CHECK(d.effective_n == 3);
  CHECK(d.source == Source::kContextExact);
  CHECK(d.probability(9) == 1.0);
  REQUIRE(d.evidence.size() == 1);
  CHECK(d.evidence[0].position == 0);
  CHECK(d.evidence[0].length == 2);
  CHECK(d.evidence[0].following_token == 9);

  d = context_exact_distribution(std::vector<TokenId>{1, 1, 1, 1});
  CHECK(d.effective_n == 4);
  CHECK(d.probability(1) == 1.0);
  REQUIRE(d.evidence.size() == 1);
  CHECK(d.evidence[0].position == 0);

  d = context_exact_distribution(std::vector<TokenId>{3, 4});
  CHECK(d.effective_n == 1);
  CHECK(d.source == Source::kUnigramFallback);
  CHECK(d.probability(3) == 0.5);
  CHECK(d.probability(4) == 0.5);

  d = context_exact_distribution(std::vector<TokenId>{5});
  CHECK(d.effective_n == 1);
  CHECK(d.probability(5) == 1.0);
  CHECK_THROWS_AS(context_exact_distribution(std::vector<TokenId>{}), std::invalid_argument);
}

TEST_CASE("context exact matching agrees with a brute-force scan") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 400; ++trial) {
    const std::uint32_t vocab = 1 + rng() % 8;
    auto ctx = testing::random_tokens(rng, 1 + rng() % 120, vocab);
    if (trial % 3 == 0) ctx = testing::repeat_block(testing::random_tokens(rng, 1 + rng() % 9, vocab), 1 + rng() % 12);
    const int max_len = 1 + static_cast<int>(rng() % 30);
    const auto want = oracle::context_exact(ctx, max_len);
    const auto got = context_exact_distribution(ctx, max_len);
    REQUIRE(got.effective_n == want.effective_n);
    for (const auto& [t, p] : want.probs) CHECK(got.probability(t) == doctest::Approx(p).epsilon(1e-12));
    CHECK(got.probs().size() == want.probs.size());
    std::vector<std::uint64_t> positions;
    for (const auto& e : got.evidence) positions.push_back(e.position);
    if (got.effective_n > 1) CHECK(positions == want.positions);
  }
}

TEST_CASE("similarity spot values") {
  Eigen::VectorXd a(2), b(2), c(2);
  a << 1, 0;
  b << 0.9, std::sqrt(1 - 0.81);
  c << 0, 1;
  CHECK(similarity(a, a) == 1.0);
  CHECK(similarity(a, b, 0.1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(similarity(a, b, 0.1) - 0.367879) < 1e-6);
  CHECK(std::abs(similarity(a, c, 0.1) - 4.54e-5) < 1e-7);
  CHECK(similarity_from_cosine(-1.0, 0.1) > 0.0);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(similarity(a, zero), std::invalid_argument);
  CHECK_THROWS_AS(similarity(a, a, 0.0), std::invalid_argument);
  Eigen::VectorXd longer(3);
  longer << 1, 2, 3;
  CHECK_THROWS_AS(similarity(a, longer), std::invalid_argument);
}

TEST_CASE("similarity stays in (0, 1] and is exactly 1 on the diagonal") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 40);
    Eigen::VectorXf x(d), y(d);
    for (int i = 0; i < d; ++i) {
      x[i] = static_cast<float>(g(rng));
      y[i] = static_cast<float>(g(rng));
    }
    if (x.squaredNorm() == 0 || y.squaredNorm() == 0) continue;
    const double t = 0.01 + static_cast<double>(rng() % 100) / 100.0;
    const double s = similarity(x, y, t);
    CHECK(s > 0.0);
    CHECK(s <= 1.0);
    CHECK(similarity(x, x, t) == 1.0);
  }
}

TEST_CASE("fuzzy counts with a constant provider are follower frequencies") {
  const ConstantProvider constant(2);
  const std::vector<TokenId> ctx{1, 2, 3, 1, 2};
  const auto counts = fuzzy_counts(ctx, constant);
  CHECK(counts == std::map<TokenId, double>{{1, 1.0}, {2, 1.0}, {3, 1.0}});

  const auto d = fuzzy_distribution(ctx, constant);
  CHECK(d.source == Source::kContextFuzzy);
  CHECK(d.probability(1) == doctest::Approx(1.0 / 3));
  CHECK(d.probability(2) == doctest::Approx(1.0 / 3));
  CHECK(d.probability(3) == doctest::Approx(1.0 / 3));
}

TEST_CASE("fuzzy counts with an indicator provider single out exact windows") {
  const IndicatorProvider indicator(2);
  const std::vector<TokenId> ctx{1, 2, 3, 1, 2};
  // Hand evaluation: [1,2]->3 at cos 1, [2,3]->1 and [3,1]->2 at cos 0.
  const auto counts = fuzzy_counts(ctx, indicator);
  CHECK(counts.at(3) == 1.0);
  CHECK(counts.at(1) == doctest::Approx(std::exp(-10.0)).epsilon(1e-12));
  CHECK(counts.at(2) == doctest::Approx(std::exp(-10.0)).epsilon(1e-12));

  const auto d = fuzzy_distribution(ctx, indicator);
  const double z = 1.0 + 2 * std::exp(-10.0);
  CHECK(d.probability(3) == doctest::Approx(1.0 / z).epsilon(1e-12));
  CHECK(d.probability(1) == doctest::Approx(std::exp(-10.0) / z).epsilon(1e-9));
  REQUIRE(d.evidence.size() == 3);
  CHECK(d.evidence[0].position == 0);
  CHECK(d.evidence[0].weight == 1.0);
  CHECK(d.evidence[1].weight <= d.evidence[0].weight);
}

TEST_CASE("the fuzzy window shrinks for short contexts") {
  const BaselineEmbedder baseline;  // k = 32
  const std::vector<TokenId> ctx{5, 6};
  const auto counts = fuzzy_counts(ctx, baseline);
  REQUIRE(counts.size() == 1);
  CHECK(counts.at(6) > 0.0);
  CHECK(counts.at(6) <= 1.0);

  CHECK_THROWS_AS(fuzzy_counts(std::vector<TokenId>{5}, baseline), std::invalid_argument);
  const auto d = fuzzy_distribution(std::vector<TokenId>{5}, baseline);
  CHECK(d.source == Source::kUnigramFallback);
  CHECK(d.probability(5) == 1.0);

  const auto nine = fuzzy_distribution(std::vector<TokenId>{9, 9, 9}, baseline);
  CHECK(nine.probability(9) == 1.0);
}

TEST_CASE("cached fuzzy scoring matches pairwise evaluation") {
  std::mt19937_64 rng(21);
  BaselineEmbedder::Options opt;
  opt.window = 6;
  opt.dim = 64;
  const BaselineEmbedder baseline(opt);
  for (int trial = 0; trial < 60; ++trial) {
    const auto ctx = testing::random_tokens(rng, 2 + rng() % 60, 5);
    const auto want = oracle::fuzzy_counts(ctx, baseline);
    const auto got = fuzzy_counts(ctx, baseline);
    REQUIRE(got.size() == want.size());
    for (const auto& [t, c] : want) CHECK(got.at(t) == doctest::Approx(c).epsilon(1e-6));
  }
}

TEST_CASE("incremental sessions reuse window embeddings") {
  BaselineEmbedder::Options opt;
  opt.window = 4;
  opt.dim = 32;
  auto provider = std::make_shared<BaselineEmbedder>(opt);
  FuzzyMatcher session(provider);
  std::mt19937_64 rng(2);
  auto ctx = testing::random_tokens(rng, 40, 6);
  (void)session.distribution(ctx, 1);
  CHECK(session.embeddings_computed() == 37);
  ctx.push_back(3);
  const auto incremental = session.distribution(ctx, 1);
  CHECK(session.embeddings_computed() == 38);
  const auto fresh = fuzzy_distribution(ctx, *provider);
  for (const auto& [t, p] : fresh.probs()) CHECK(incremental.probability(t) == doctest::Approx(p).epsilon(1e-12));

  // Rewinding two tokens keeps every window that ends before the divergence.
  ctx.resize(ctx.size() - 2);
  ctx.push_back(5);
  (void)session.distribution(ctx, 1);
  CHECK(session.embeddings_computed() == 39);
}

TEST_CASE("constant-provider fuzzy distribution is the empirical follower frequency") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 8);
    const ConstantProvider constant(k);
    const auto ctx = testing::random_tokens(rng, 2 + rng() % 80, 7);
    const std::size_t kk = std::min<std::size_t>(k, ctx.size() - 1);
    std::map<TokenId, double> freq;
    for (std::size_t j = kk; j < ctx.size(); ++j) freq[ctx[j]] += 1;
    const auto want = oracle::normalize(freq);
    const auto d = fuzzy_distribution(ctx, constant);
    REQUIRE(d.probs().size() == want.size());
    for (const auto& [t, p] : want) CHECK(d.probability(t) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("indicator fuzzy argmax is the follower mode of the last window") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 400; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 4);
    const IndicatorProvider indicator(k);
    const auto ctx = testing::random_tokens(rng, 2 + rng() % 60, 3);
    const std::size_t kk = std::min<std::size_t>(k, ctx.size() - 1);
    const std::vector<TokenId> last(ctx.end() - kk, ctx.end());
    std::map<TokenId, double> followers;
    for (std::size_t j = kk; j < ctx.size(); ++j)
      if (std::equal(last.begin(), last.end(), ctx.begin() + (j - kk))) followers[ctx[j]] += 1;
    const auto d = fuzzy_distribution(ctx, indicator);
    if (followers.empty()) continue;
    TokenId mode = followers.begin()->first;
    for (const auto& [t, c] : followers)
      if (c > followers[mode]) mode = t;
    const auto ties = std::count_if(followers.begin(), followers.end(),
                                    [&](const auto& f) { return f.second == followers[mode]; });
    if (ties == 1) CHECK(d.top_token() == mode);
  }
}

TEST_CASE("baseline embeddings are deterministic, finite and recency weighted") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = testing::random_tokens(rng, 1 + rng() % 40, 1000);
    const auto a = baseline_embed(w, 64, 0.9);
    const auto b = baseline_embed(w, 64, 0.9);
    CHECK(a == b);
    CHECK(a.allFinite());
    CHECK(a.norm() > 0.0f);
    CHECK(similarity(a, b) == 1.0);
  }

  // Windows differing in the oldest vs newest token, decay 0.5, k' = 8.
  const std::vector<TokenId> base{10, 11, 12, 13, 14, 15, 16, 17};
  auto old_changed = base, new_changed = base;
  old_changed.front() = 99;
  new_changed.back() = 99;
  const auto e = baseline_embed(base, 64, 0.5);
  const double cos_old = cosine(e, baseline_embed(old_changed, 64, 0.5));
  const double cos_new = cosine(e, baseline_embed(new_changed, 64, 0.5));
  CHECK(cos_old >= cos_new);
  CHECK(cos_old > 0.9);
  CHECK(cos_new < 0.5);
}

TEST_CASE("all fuzzy distributions normalize") {
  std::mt19937_64 rng(77);
  BaselineEmbedder::Options opt;
  opt.window = 8;
  opt.dim = 64;
  const BaselineEmbedder baseline(opt);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ctx = testing::random_tokens(rng, 1 + rng() % 100, 1 + rng() % 20);
    const auto d = fuzzy_distribution(ctx, baseline);
    CHECK(d.total() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::is_sorted(d.evidence.begin(), d.evidence.end(),
                         [](const MatchEvidence& a, const MatchEvidence& b) { return a.weight > b.weight; }));
    for (const auto& ev : d.evidence) {
      CHECK(ev.weight > 0.0);
      CHECK(ev.weight <= 1.0);
    }
  }
}
