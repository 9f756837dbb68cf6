#include "igram/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_set>

namespace igram {
namespace {

// Uniform integer in [0, bound) from raw 64-bit draws (portable across
// standard libraries, unlike std::uniform_int_distribution).
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const auto i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

SampleOutcome outcome_of(std::size_t idx, const EvalSample& s, const Prediction& p) {
  return {idx, s.target, p.top_token, p.top_token == s.target, p.branch, p.n_inf, p.n_x,
          p.distribution.effective_n};
}

}  // namespace

SampleSet sample_eval_windows(TokenSpan stream, std::size_t context_len, std::size_t stride,
                              std::size_t max_samples, std::uint64_t seed) {
  if (context_len < 1) throw std::invalid_argument("context_len must be at least 1");
  if (stride < 1) throw std::invalid_argument("stride must be at least 1");
  SampleSet set;
  if (stream.size() < context_len + 1) {
    set.too_short = true;
    return set;
  }
  set.candidates = (stream.size() - 1 - context_len) / stride + 1;

  std::vector<std::uint64_t> picks;
  if (set.candidates <= max_samples) {
    picks.resize(set.candidates);
    for (std::uint64_t i = 0; i < set.candidates; ++i) picks[i] = i;
  } else {
    // Floyd's algorithm: max_samples distinct draws.
    std::mt19937_64 rng(seed);
    std::unordered_set<std::uint64_t> chosen;
    for (std::uint64_t j = set.candidates - max_samples; j < set.candidates; ++j) {
      const auto t = uniform_below(rng, j + 1);
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    picks.assign(chosen.begin(), chosen.end());
    std::sort(picks.begin(), picks.end());
  }
  set.samples.reserve(picks.size());
  for (auto i : picks) {
    const std::uint64_t target = context_len + i * stride;
    set.samples.push_back({target, stream.subspan(target - context_len, context_len), stream[target]});
  }
  return set;
}

void EvalReport::add(const SampleOutcome& o) {
  ++n_samples;
  n_correct += o.correct;
  auto& bucket = per_effective_n[o.effective_n];
  ++bucket.count;
  bucket.correct += o.correct;
  ++branch_usage[o.branch];
  outcomes.push_back(o);
}

void EvalReport::finish() {
  accuracy = n_samples ? static_cast<double>(n_correct) / static_cast<double>(n_samples) : 0.0;
}

EvalReport evaluate(const PredictFn& model, const std::vector<EvalSample>& samples, unsigned threads) {
  if (samples.empty()) throw std::invalid_argument("no samples to evaluate");
  std::vector<SampleOutcome> outcomes(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    outcomes[i] = outcome_of(i, samples[i], model(samples[i].context));
  });
  EvalReport report;
  for (const auto& o : outcomes) report.add(o);
  report.finish();
  return report;
}

PredictFn make_model(const CombinerConfig& config) {
  config.validate();
  return [config](TokenSpan context) { return predict(context, config); };
}

std::vector<std::pair<int, EvalReport>> tau_sweep(const CombinerConfig& config,
                                                  const std::vector<EvalSample>& samples,
                                                  const std::vector<int>& taus, unsigned threads) {
  if (taus.empty()) throw std::invalid_argument("tau list is empty");
  if (samples.empty()) throw std::invalid_argument("no samples to evaluate");
  if (config.mode != Mode::kInductionGram && config.mode != Mode::kInductionOnlyFuzzy) {
    throw std::invalid_argument("tau only affects the induction-gram and induction-fuzzy modes");
  }
  for (int tau : taus) {
    if (tau < 0) throw std::invalid_argument("tau must be nonnegative");
  }
  config.validate();

  // Per sample: the routing pair and the prediction each branch would make.
  struct Cached {
    int n_inf = 0;
    int n_x = 0;
    std::optional<Prediction> by_branch[3];
  };
  std::vector<Cached> cache(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    auto& c = cache[i];
    const auto ctx = samples[i].context;
    CombinerConfig probe = config;
    probe.tau = 0;
    Predictor routed(probe);
    // tau = 0 resolves n_inf and n_x and whichever exact branch wins.
    auto first = routed.predict(ctx);
    c.n_inf = first.n_inf;
    c.n_x = first.n_x;
    // Only branches some tau in the list can select are materialized.
    for (int tau : taus) {
      const auto b = route(c.n_inf, c.n_x, tau);
      auto& slot = c.by_branch[static_cast<int>(b)];
      if (slot) continue;
      if (b == route(c.n_inf, c.n_x, 0)) {
        slot = first;
      } else {
        CombinerConfig at = config;
        at.tau = tau;
        slot = Predictor(at).predict(ctx);
      }
    }
  });

  std::vector<std::pair<int, EvalReport>> out;
  for (int tau : taus) {
    EvalReport report;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& c = cache[i];
      const auto& p = *c.by_branch[static_cast<int>(route(c.n_inf, c.n_x, tau))];
      report.add(outcome_of(i, samples[i], p));
    }
    report.finish();
    out.emplace_back(tau, std::move(report));
  }
  return out;
}

void write_csv(std::ostream& out, const EvalReport& report) {
  out << "sample_idx,target,predicted,correct,branch,n_inf,n_x\n";
  for (const auto& o : report.outcomes) {
    out << o.sample_idx << ',' << o.target << ',' << o.predicted << ',' << (o.correct ? 1 : 0) << ','
        << to_string(o.branch) << ',' << o.n_inf << ',' << o.n_x << '\n';
  }
}

nlohmann::json summary_json(const EvalReport& report) {
  nlohmann::json j;
  j["type"] = "summary";
  j["accuracy"] = report.accuracy;
  j["n_samples"] = report.n_samples;
  j["n_correct"] = report.n_correct;
  auto& per_n = j["per_effective_n"] = nlohmann::json::array();
  for (const auto& [n, s] : report.per_effective_n) {
    per_n.push_back({{"n", n}, {"count", s.count}, {"accuracy", s.accuracy()}});
  }
  auto& usage = j["branch_usage"] = nlohmann::json::object();
  for (const auto& [b, count] : report.branch_usage) usage[to_string(b)] = count;
  return j;
}

void write_jsonl(std::ostream& out, const EvalReport& report, const nlohmann::json& header) {
  out << header.dump() << '\n';
  for (const auto& o : report.outcomes) {
    nlohmann::json j{{"type", "sample"},      {"sample_idx", o.sample_idx}, {"target", o.target},
                     {"predicted", o.predicted}, {"correct", o.correct},     {"branch", to_string(o.branch)},
                     {"n_inf", o.n_inf},       {"n_x", o.n_x},               {"effective_n", o.effective_n}};
    out << j.dump() << '\n';
  }
  out << summary_json(report).dump() << '\n';
}

void write_table(std::ostream& out, const EvalReport& report) {
  char line[128];
  std::snprintf(line, sizeof line, "accuracy %.4f (%zu / %zu)\n", report.accuracy, report.n_correct,
                report.n_samples);
  out << line;
  out << "branch usage:";
  for (const auto& [b, count] : report.branch_usage) out << ' ' << to_string(b) << '=' << count;
  out << "\n  eff_n     count  accuracy  histogram\n";
  std::size_t peak = 1;
  for (const auto& [n, s] : report.per_effective_n) peak = std::max(peak, s.count);
  for (const auto& [n, s] : report.per_effective_n) {
    std::snprintf(line, sizeof line, "  %5d  %8zu  %8.4f  ", n, s.count, s.accuracy());
    out << line << std::string(s.count * 40 / peak, '#') << '\n';
  }
}

unsigned default_threads() {
  if (const char* env = std::getenv("IG_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace igram
