#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "igram/combiner.hpp"
#include "igram/tokenizer.hpp"

namespace igram {

// A context window and the token that follows it in the source stream.
// `context` views the stream passed to sample_eval_windows, which must
// outlive the samples.
struct EvalSample {
  std::uint64_t target_pos = 0;
  TokenSpan context;
  TokenId target = 0;
};

struct SampleSet {
  std::vector<EvalSample> samples;
  std::uint64_t candidates = 0;
  bool too_short = false;  // stream had no room for a single target
};

// Targets at context_len, context_len + stride, ...; each context is the
// context_len tokens before its target. More candidates than max_samples are
// subsampled uniformly without replacement; output is ordered by position.
SampleSet sample_eval_windows(TokenSpan stream, std::size_t context_len, std::size_t stride,
                              std::size_t max_samples, std::uint64_t seed);

struct SampleOutcome {
  std::size_t sample_idx = 0;
  TokenId target = 0;
  TokenId predicted = 0;
  bool correct = false;
  Branch branch = Branch::kContextFuzzy;
  int n_inf = 0;
  int n_x = 0;
  int effective_n = 0;
};

struct EffectiveNStats {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

struct EvalReport {
  double accuracy = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_correct = 0;
  std::map<int, EffectiveNStats> per_effective_n;
  std::map<Branch, std::size_t> branch_usage;
  std::vector<SampleOutcome> outcomes;  // in sample order

  void add(const SampleOutcome& o);
  void finish();
};

using PredictFn = std::function<Prediction(TokenSpan)>;

// Top-1 accuracy of `model` over `samples`. With threads > 1 the model is
// called concurrently and must be thread-safe. Results do not depend on the
// thread count.
EvalReport evaluate(const PredictFn& model, const std::vector<EvalSample>& samples, unsigned threads = 1);

// Stateless model over a config (a fresh Predictor per call).
PredictFn make_model(const CombinerConfig& config);

// One report per tau for the routed modes. The routing inputs (n_inf, n_x)
// and every branch's prediction are computed once per sample and reused.
std::vector<std::pair<int, EvalReport>> tau_sweep(const CombinerConfig& config,
                                                  const std::vector<EvalSample>& samples,
                                                  const std::vector<int>& taus, unsigned threads = 1);

// Columns: sample_idx,target,predicted,correct,branch,n_inf,n_x
void write_csv(std::ostream& out, const EvalReport& report);
// One JSON object per sample, then a summary object.
void write_jsonl(std::ostream& out, const EvalReport& report, const nlohmann::json& header);
void write_table(std::ostream& out, const EvalReport& report);
nlohmann::json summary_json(const EvalReport& report);

// Worker count from IG_THREADS, else hardware concurrency.
unsigned default_threads();

}  // namespace igram
