#include "igram/specdec.hpp"

#include <chrono>
#include <sstream>

namespace igram {

Verification TargetModel::batch_verify(TokenSpan prefix, TokenSpan drafts) {
  std::vector<TokenId> seq(prefix.begin(), prefix.end());
  Verification v;
  for (TokenId d : drafts) {
    const TokenId expect = greedy_next(seq);
    if (expect != d) {
      v.correction = expect;
      return v;
    }
    seq.push_back(d);
    ++v.accepted;
  }
  v.correction = greedy_next(seq);
  return v;
}

ReferenceTarget::ReferenceTarget(SuffixIndex index, int max_len)
    : index_(std::move(index)), max_len_(max_len) {
  if (!index_) throw std::invalid_argument("reference target needs an index");
  if (max_len_ < 1) throw std::invalid_argument("max_len must be at least 1");
}

TokenId ReferenceTarget::greedy_next(TokenSpan prefix) {
  return next_token_distribution(index_, prefix, max_len_).top_token();
}

std::unique_ptr<TargetModel> make_reference_target(const SuffixIndex& index, int max_len) {
  return std::make_unique<ReferenceTarget>(index, max_len);
}

RemoteTarget::RemoteTarget(const std::string& endpoint) : socket_(net::Socket::connect(endpoint)) {}

TokenId RemoteTarget::greedy_next(TokenSpan prefix) { return batch_verify(prefix, {}).correction; }

Verification RemoteTarget::batch_verify(TokenSpan prefix, TokenSpan drafts) {
  std::ostringstream req;
  req << "V " << prefix.size() << ' ' << drafts.size();
  for (TokenId t : prefix) req << ' ' << t;
  for (TokenId t : drafts) req << ' ' << t;
  req << '\n';

  std::lock_guard lock(mu_);
  socket_.write_all(req.str());
  const std::string line = socket_.read_line();
  std::istringstream in(line);
  std::string tag;
  in >> tag;
  if (tag == "E") throw RemoteError("target error:" + line.substr(1));
  Verification v;
  if (tag != "A" || !(in >> v.accepted >> v.correction) || v.accepted > drafts.size()) {
    throw RemoteError("malformed target response \"" + line + "\"");
  }
  return v;
}

void serve_target_connection(TargetModel& target, net::Socket& socket) {
  for (;;) {
    std::string line;
    try {
      line = socket.read_line();
    } catch (const RemoteError&) {
      return;
    }
    std::istringstream in(line);
    std::string tag;
    std::size_t prefix_len = 0, gamma = 0;
    if (!(in >> tag >> prefix_len >> gamma) || tag != "V") {
      socket.write_all("E malformed request\n");
      continue;
    }
    std::vector<TokenId> ids(prefix_len + gamma);
    bool ok = true;
    for (auto& id : ids) ok = ok && static_cast<bool>(in >> id);
    if (!ok) {
      socket.write_all("E expected " + std::to_string(prefix_len + gamma) + " token ids\n");
      continue;
    }
    try {
      const TokenSpan all(ids);
      const auto v = target.batch_verify(all.first(prefix_len), all.subspan(prefix_len));
      socket.write_all("A " + std::to_string(v.accepted) + " " + std::to_string(v.correction) + "\n");
    } catch (const std::exception& e) {
      socket.write_all(std::string("E ") + e.what() + "\n");
    }
  }
}

DraftFn induction_draft(const CombinerConfig& config) {
  CombinerConfig c = config;
  c.mode = Mode::kInductionOnlyFuzzy;
  c.reference.reset();
  auto predictor = std::make_shared<Predictor>(std::move(c));
  return [predictor](TokenSpan context) { return predictor->predict(context).top_token; };
}

DecodeResult speculative_decode(const DraftFn& draft, TargetModel& target, TokenSpan prefix,
                                std::size_t max_new, std::size_t gamma) {
  if (gamma < 1) throw std::invalid_argument("gamma must be at least 1");
  if (max_new < 1) throw std::invalid_argument("max_new must be at least 1");
  const auto start = std::chrono::steady_clock::now();

  std::vector<TokenId> seq(prefix.begin(), prefix.end());
  DecodeResult result;
  auto& st = result.stats;
  std::vector<TokenId> drafts;
  while (st.tokens_generated < max_new) {
    // Leave room for the target's own token so the total never overshoots.
    const std::size_t room = max_new - st.tokens_generated - 1;
    const std::size_t g = seq.empty() ? 0 : std::min(gamma, room);
    drafts.clear();
    for (std::size_t i = 0; i < g; ++i) {
      seq.push_back(draft(seq));
      drafts.push_back(seq.back());
    }
    seq.resize(seq.size() - g);

    Verification v;
    try {
      v = target.batch_verify(seq, drafts);
    } catch (const std::exception& e) {
      st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw DecodeError(std::string("target failed: ") + e.what(), result);
    }
    if (v.accepted > g) throw std::logic_error("target accepted more drafts than proposed");
    ++st.target_calls;
    st.draft_tokens_proposed += g;
    st.draft_tokens_accepted += v.accepted;
    for (std::size_t i = 0; i < v.accepted; ++i) {
      seq.push_back(drafts[i]);
      result.tokens.push_back(drafts[i]);
    }
    seq.push_back(v.correction);
    result.tokens.push_back(v.correction);
    st.tokens_generated += v.accepted + 1;
  }
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

DecodeResult greedy_decode(TargetModel& target, TokenSpan prefix, std::size_t max_new) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<TokenId> seq(prefix.begin(), prefix.end());
  DecodeResult result;
  for (std::size_t i = 0; i < max_new; ++i) {
    const TokenId t = target.greedy_next(seq);
    seq.push_back(t);
    result.tokens.push_back(t);
    ++result.stats.target_calls;
    ++result.stats.tokens_generated;
  }
  result.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace igram
