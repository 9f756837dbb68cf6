#include "igram/combiner.hpp"

#include <cstdio>
#include <sstream>

namespace igram {

const char* to_string(Branch branch) {
  switch (branch) {
    case Branch::kReferenceExact: return "reference_exact";
    case Branch::kContextExact: return "context_exact";
    case Branch::kContextFuzzy: return "context_fuzzy";
  }
  return "?";
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kInductionGram: return "induction-gram";
    case Mode::kInfiniGram: return "infini-gram";
    case Mode::kInductionOnlyExact: return "induction-exact";
    case Mode::kInductionOnlyFuzzy: return "induction-fuzzy";
    case Mode::kPureFuzzy: return "pure-fuzzy";
  }
  return "?";
}

std::optional<Mode> parse_mode(const std::string& name) {
  for (auto m : {Mode::kInductionGram, Mode::kInfiniGram, Mode::kInductionOnlyExact,
                 Mode::kInductionOnlyFuzzy, Mode::kPureFuzzy}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

void CombinerConfig::validate() const {
  if (tau < 0) throw std::invalid_argument("tau must be nonnegative");
  if (max_exact_len < 1) throw std::invalid_argument("max_exact_len must be at least 1");
  if (mode == Mode::kInfiniGram && !reference) {
    throw std::invalid_argument("infini-gram mode needs a reference index");
  }
  if (mode != Mode::kInfiniGram && mode != Mode::kInductionOnlyExact && !provider) {
    throw std::invalid_argument("fuzzy matching needs an embedding provider");
  }
  if (provider && provider->window_len() < 1) throw std::invalid_argument("k must be at least 1");
}

int reference_effective_n(const CombinerConfig& config, TokenSpan context) {
  if (!config.reference) return 0;
  const auto& index = *config.reference;
  SuffixMatch m = find_longest_suffix(index, context, config.max_exact_len);
  // Back off while the only occurrence is the one ending the corpus.
  while (m.match_len > 0 && m.count() == 1 && index.suffix_at(m.occ_lo) + m.match_len == index.size()) {
    const auto shorter = context.last(m.match_len - 1);
    m = find_longest_suffix(index, shorter, config.max_exact_len);
  }
  return m.effective_n();
}

Predictor::Predictor(CombinerConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.provider) fuzzy_.emplace(config_.provider);
}

NextTokenDistribution Predictor::fuzzy_branch(TokenSpan context, int n_x) {
  if (context.size() >= 2) {
    const auto window = fuzzy_window(static_cast<std::size_t>(config_.k()), context.size());
    // Fixed-window providers cannot embed the shrunken windows of short
    // contexts; those fall back to exact in-context matching.
    if (!config_.provider->accepts(window)) return context_exact_distribution(context, config_.max_exact_len);
  }
  return fuzzy_->distribution(context, n_x);
}

Prediction Predictor::predict(TokenSpan context) {
  if (context.empty()) throw std::invalid_argument("context must not be empty");
  Prediction p;
  auto exact = context_exact_distribution(context, config_.max_exact_len);
  p.n_x = exact.effective_n;

  switch (config_.mode) {
    case Mode::kInfiniGram:
      p.distribution = next_token_distribution(*config_.reference, context, config_.max_exact_len);
      p.n_inf = p.distribution.effective_n;
      p.branch = Branch::kReferenceExact;
      break;
    case Mode::kInductionOnlyExact:
      p.distribution = std::move(exact);
      p.branch = Branch::kContextExact;
      break;
    case Mode::kPureFuzzy:
      p.distribution = fuzzy_branch(context, p.n_x);
      p.branch = Branch::kContextFuzzy;
      break;
    case Mode::kInductionGram:
    case Mode::kInductionOnlyFuzzy: {
      if (config_.mode == Mode::kInductionGram) p.n_inf = reference_effective_n(config_, context);
      p.branch = route(p.n_inf, p.n_x, config_.tau);
      switch (p.branch) {
        case Branch::kReferenceExact:
          p.distribution = next_token_distribution(*config_.reference, context, config_.max_exact_len);
          break;
        case Branch::kContextExact:
          p.distribution = std::move(exact);
          break;
        case Branch::kContextFuzzy:
          p.distribution = fuzzy_branch(context, p.n_x);
          break;
      }
      break;
    }
  }
  p.top_token = p.distribution.top_token();
  return p;
}

Prediction predict(TokenSpan context, const CombinerConfig& config) {
  return Predictor(config).predict(context);
}

Prediction predict_induction_only_fuzzy(TokenSpan context, const CombinerConfig& config) {
  CombinerConfig c = config;
  c.mode = Mode::kInductionOnlyFuzzy;
  c.reference.reset();
  return Predictor(std::move(c)).predict(context);
}

std::string render_tokens(TokenSpan tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (vocab.kind() != VocabKind::kByte && i > 0) out.push_back(' ');
    const std::string s = vocab.surface(tokens[i]);
    for (unsigned char c : s) {
      if (c == '\n') {
        out += "\\n";
      } else if (c == '\t') {
        out += "\\t";
      } else if (c < 0x20 || c == 0x7f) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "\\x%02x", c);
        out += buf;
      } else {
        out.push_back(static_cast<char>(c));
      }
    }
  }
  return out;
}

Explanation explain(const Prediction& prediction, TokenSpan context, const Vocabulary& vocab,
                    const SuffixIndex* reference) {
  const auto& dist = prediction.distribution;
  Explanation e;
  e.branch = prediction.branch;
  e.source = dist.source;
  e.n_inf = prediction.n_inf;
  e.n_x = prediction.n_x;
  e.effective_n = dist.effective_n;
  e.matched = dist.source != Source::kUnigramFallback && !dist.evidence.empty();
  e.searched = dist.source == Source::kReferenceExact ? "reference" : "context";
  e.top_tokens = dist.top(5);

  const std::size_t shown = std::min<std::size_t>(5, dist.evidence.size());
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& ev = dist.evidence[i];
    ExplanationItem item;
    item.position = ev.position;
    item.length = ev.length;
    item.weight = ev.weight;
    item.follower = ev.following_token;
    item.follower_text = render_tokens(std::span(&ev.following_token, 1), vocab);
    if (dist.source == Source::kReferenceExact) {
      if (reference != nullptr) item.window_text = render_tokens(reference->tokens(ev.position, ev.length), vocab);
    } else if (ev.position + ev.length <= context.size()) {
      item.window_text = render_tokens(context.subspan(ev.position, ev.length), vocab);
    }
    e.evidence.push_back(std::move(item));
  }
  return e;
}

std::string Explanation::render(const Vocabulary& vocab) const {
  std::ostringstream out;
  out << "branch: " << to_string(branch) << " (source " << to_string(source) << ")\n";
  out << "n_inf: " << n_inf << "  n_x: " << n_x << "  effective n: " << effective_n << "\n";
  out << "top tokens:";
  for (const auto& [t, p] : top_tokens) {
    out << "  \"" << render_tokens(std::span(&t, 1), vocab) << "\" (" << t << ") " << p;
  }
  out << "\n";
  if (!matched) {
    out << "no match found; prediction falls back to token frequencies of the " << searched << "\n";
    return out.str();
  }
  out << "evidence (" << searched << "):\n";
  for (const auto& item : evidence) {
    out << "  [" << item.position << ".." << item.position + item.length - 1 << "] \"" << item.window_text
        << "\" -> \"" << item.follower_text << "\" weight " << item.weight << "\n";
  }
  return out.str();
}

nlohmann::json Explanation::to_json(const Vocabulary& vocab) const {
  nlohmann::json j;
  j["branch"] = to_string(branch);
  j["source"] = to_string(source);
  j["n_inf"] = n_inf;
  j["n_x"] = n_x;
  j["effective_n"] = effective_n;
  j["matched"] = matched;
  j["searched"] = searched;
  j["top_tokens"] = nlohmann::json::array();
  for (const auto& [t, p] : top_tokens) {
    j["top_tokens"].push_back({{"token", t}, {"text", render_tokens(std::span(&t, 1), vocab)}, {"prob", p}});
  }
  j["evidence"] = nlohmann::json::array();
  for (const auto& item : evidence) {
    j["evidence"].push_back({{"position", item.position},
                             {"length", item.length},
                             {"window", item.window_text},
                             {"weight", item.weight},
                             {"follower", item.follower},
                             {"follower_text", item.follower_text}});
  }
  return j;
}

}  // namespace igram
