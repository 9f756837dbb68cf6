#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "igram/combiner.hpp"
#include "igram/net.hpp"
#include "igram/suffix_index.hpp"

namespace igram {

struct Verification {
  std::size_t accepted = 0;
  TokenId correction = 0;  // the target's greedy token after the accepted drafts
};

// Greedy target model. batch_verify must agree with greedy_next: the first
// `accepted` drafts are each the greedy continuation of the prefix extended
// by the drafts before them.
class TargetModel {
 public:
  virtual ~TargetModel() = default;
  virtual TokenId greedy_next(TokenSpan prefix) = 0;
  virtual Verification batch_verify(TokenSpan prefix, TokenSpan drafts);
};

// Target backed by a suffix index: argmax of its next-token distribution.
class ReferenceTarget final : public TargetModel {
 public:
  explicit ReferenceTarget(SuffixIndex index, int max_len = kDefaultMaxExactLen);
  TokenId greedy_next(TokenSpan prefix) override;

 private:
  SuffixIndex index_;
  int max_len_;
};

std::unique_ptr<TargetModel> make_reference_target(const SuffixIndex& index,
                                                   int max_len = kDefaultMaxExactLen);

// Line protocol over a byte stream:
//   request  "V <prefix-len> <gamma> <prefix ids...> <draft ids...>\n"
//   response "A <accepted> <correction-token>\n" or "E <message>\n"
class RemoteTarget final : public TargetModel {
 public:
  explicit RemoteTarget(const std::string& endpoint);
  TokenId greedy_next(TokenSpan prefix) override;
  Verification batch_verify(TokenSpan prefix, TokenSpan drafts) override;

 private:
  std::mutex mu_;
  net::Socket socket_;
};

// Answers line-protocol requests from `socket` with `target` until the peer
// disconnects.
void serve_target_connection(TargetModel& target, net::Socket& socket);

struct DecodeStats {
  std::uint64_t tokens_generated = 0;
  std::uint64_t target_calls = 0;
  std::uint64_t draft_tokens_proposed = 0;
  std::uint64_t draft_tokens_accepted = 0;
  double seconds = 0.0;

  double acceptance_rate() const {
    return draft_tokens_proposed ? static_cast<double>(draft_tokens_accepted) / draft_tokens_proposed : 0.0;
  }
  double tokens_per_target_call() const {
    return target_calls ? static_cast<double>(tokens_generated) / target_calls : 0.0;
  }
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // newly generated tokens only
  DecodeStats stats;
};

// Target failure mid-run, carrying what was produced before it.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, DecodeResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const DecodeResult& partial() const { return partial_; }

 private:
  DecodeResult partial_;
};

using DraftFn = std::function<TokenId(TokenSpan)>;

// Draft model: Induction-only (fuzzy) over a config, sharing one embedding
// cache across all calls of the returned function.
DraftFn induction_draft(const CombinerConfig& config);

// Greedy speculative decoding. Each round proposes up to gamma drafts (fewer
// near max_new) and makes one target call, which yields the accepted drafts
// plus one target token. The output equals target-only greedy decoding.
DecodeResult speculative_decode(const DraftFn& draft, TargetModel& target, TokenSpan prefix,
                                std::size_t max_new, std::size_t gamma);

DecodeResult greedy_decode(TargetModel& target, TokenSpan prefix, std::size_t max_new);

}  // namespace igram
