#include "igram/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <system_error>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "igram/combiner.hpp"
#include "igram/eval.hpp"
#include "igram/specdec.hpp"
#include "igram/suffix_index.hpp"
#include "igram/tokenizer.hpp"

namespace igram::cli {
namespace {

// Raised for flag combinations CLI11 cannot check on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string index;
  std::string mode = "induction-gram";
  int tau = kDefaultTau;
  int max_exact_len = kDefaultMaxExactLen;
  std::string provider = "baseline";
  std::string table_stream;
  BaselineEmbedder::Options baseline;

  void attach(CLI::App* app, bool index_flag = true) {
    if (index_flag) app->add_option("--index", index, "Reference index (IGRX)");
    app->add_option("--mode", mode,
                    "induction-gram | infini-gram | induction-exact | induction-fuzzy | pure-fuzzy")
        ->capture_default_str();
    app->add_option("--tau", tau, "Effective-n threshold")->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--max-exact-len", max_exact_len, "Longest exact match considered")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--provider", provider, "baseline | table:<path> | remote:<host:port>")->capture_default_str();
    app->add_option("--table-stream", table_stream, "Token stream the embedding table was exported from");
    app->add_option("--k", baseline.window, "Fuzzy window size (baseline provider)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--dim", baseline.dim, "Baseline embedding dimension")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--decay", baseline.decay, "Baseline recency decay in (0, 1]")
        ->capture_default_str()
        ->check(CLI::Range(1e-9, 1.0));
    app->add_option("--temperature", baseline.temperature, "Similarity temperature (baseline provider)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--embed-seed", baseline.seed, "Baseline hash seed")->capture_default_str();
  }

  CombinerConfig config() const {
    auto m = parse_mode(mode);
    if (!m) throw UsageError("unknown mode \"" + mode + "\"");
    CombinerConfig c;
    c.mode = *m;
    c.tau = tau;
    c.max_exact_len = max_exact_len;
    if (!index.empty()) c.reference = open_index(index);
    if (c.mode != Mode::kInfiniGram && c.mode != Mode::kInductionOnlyExact) {
      c.provider = make_provider(provider, baseline, table_stream);
    }
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }

  nlohmann::json describe() const {
    return {{"mode", mode},         {"tau", tau},
            {"max_exact_len", max_exact_len}, {"provider", provider},
            {"k", baseline.window}, {"dim", baseline.dim},
            {"decay", baseline.decay}, {"temperature", baseline.temperature},
            {"embed_seed", baseline.seed}, {"index", index}};
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Vocabulary vocab_for(const std::string& vocab_path, std::uint32_t fallback_size) {
  if (!vocab_path.empty()) return Vocabulary::load(vocab_path);
  return fallback_size == 256 ? Vocabulary::bytes() : Vocabulary::external(fallback_size);
}

std::vector<int> parse_taus(const std::string& text) {
  std::vector<int> taus;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dots = part.find("..");
    try {
      if (dots != std::string::npos) {
        const int a = std::stoi(part.substr(0, dots)), b = std::stoi(part.substr(dots + 2));
        if (a > b) throw UsageError("empty tau range \"" + part + "\"");
        for (int t = a; t <= b; ++t) taus.push_back(t);
      } else if (part == "inf") {
        taus.push_back(kTauInfinity);
      } else {
        taus.push_back(std::stoi(part));
      }
    } catch (const std::logic_error&) {
      throw UsageError("bad tau list \"" + text + "\"");
    }
  }
  if (taus.empty()) throw UsageError("tau list is empty");
  for (int t : taus) {
    if (t < 0) throw UsageError("tau must be nonnegative");
  }
  return taus;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Induction-head ngram engine: suffix-array reference matching, in-context exact and fuzzy "
               "induction, evaluation and speculative decoding."};
  app.require_subcommand(1);

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Convert text to an IGTS token stream (or back with --decode)");
  std::string tok_input, tok_out, tok_kind = "byte", tok_vocab_out, tok_vocab;
  bool tok_unk = false, tok_decode = false;
  tok->add_option("--input", tok_input, "Input text file (or IGTS file with --decode)")->required();
  tok->add_option("--out", tok_out, "Output path");
  tok->add_option("--kind", tok_kind, "byte | word")->capture_default_str()->check(CLI::IsMember({"byte", "word"}));
  tok->add_option("--vocab", tok_vocab, "Existing vocabulary JSON (word kind)");
  tok->add_option("--vocab-out", tok_vocab_out, "Write the vocabulary built from the input");
  tok->add_flag("--unk", tok_unk, "Reserve an unknown-word id");
  tok->add_flag("--decode", tok_decode, "Decode an IGTS stream to text");

  // build-index
  auto* bidx = app.add_subcommand("build-index", "Build an IGRX suffix-array index over a token stream");
  std::string bidx_corpus, bidx_out;
  bidx->add_option("--corpus", bidx_corpus, "Corpus token stream (IGTS)")->required();
  bidx->add_option("--out", bidx_out, "Output index (IGRX)")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "Predict the next token of a context");
  ModelFlags pred_model;
  pred_model.attach(pred);
  std::string pred_ctx_file, pred_ctx_text, pred_vocab, pred_format = "human";
  bool pred_explain = false;
  pred->add_option("--context-file", pred_ctx_file, "Context token stream (IGTS)");
  pred->add_option("--context-text", pred_ctx_text, "Context text (byte vocabulary unless --vocab)");
  pred->add_option("--vocab", pred_vocab, "Vocabulary JSON for encoding and rendering");
  pred->add_flag("--explain", pred_explain, "Print matched evidence");
  pred->add_option("--format", pred_format, "human | structured")
      ->capture_default_str()
      ->check(CLI::IsMember({"human", "structured"}));

  // eval and tau-sweep share their sampling flags.
  struct EvalFlags {
    ModelFlags model;
    std::string stream, format = "human", csv, taus = "1..12";
    std::size_t context_len = 1024, stride = 512, max_samples = 100000;
    std::uint64_t seed = 0;
    unsigned threads = 0;
  };
  EvalFlags ev, sw;
  auto attach_eval = [](CLI::App* sub, EvalFlags& f) {
    f.model.attach(sub);
    sub->add_option("--stream", f.stream, "Evaluation token stream (IGTS)")->required();
    sub->add_option("--context-len", f.context_len, "Context length")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--stride", f.stride, "Stride between targets")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--max-samples", f.max_samples, "Sample cap")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.seed, "Sampling seed")->capture_default_str();
    sub->add_option("--threads", f.threads, "Worker threads (default: IG_THREADS or all cores)");
    sub->add_option("--format", f.format, "human | csv | structured")
        ->capture_default_str()
        ->check(CLI::IsMember({"human", "csv", "structured"}));
    sub->add_option("--csv", f.csv, "Also write the per-sample CSV here");
  };
  auto* evc = app.add_subcommand("eval", "Top-1 next-token accuracy over sampled windows");
  attach_eval(evc, ev);
  auto* swc = app.add_subcommand("tau-sweep", "Accuracy for each effective-n threshold");
  attach_eval(swc, sw);
  swc->add_option("--taus", sw.taus, "Comma list, ranges a..b, or inf")->capture_default_str();

  // specdec
  auto* sd = app.add_subcommand("specdec", "Speculative decoding with the induction draft");
  ModelFlags sd_model;
  sd_model.attach(sd, false);
  std::string sd_prefix, sd_target_index, sd_target_remote, sd_format = "human";
  std::size_t sd_max_new = 1024, sd_gamma = 8;
  bool sd_compare = false;
  sd->add_option("--prefix-file", sd_prefix, "Prefix token stream (IGTS)")->required();
  sd->add_option("--target-index", sd_target_index, "Index backing the in-process reference target");
  sd->add_option("--target", sd_target_remote, "Remote target host:port (line protocol)");
  sd->add_option("--max-new", sd_max_new, "Tokens to generate")->capture_default_str()->check(CLI::PositiveNumber);
  sd->add_option("--gamma", sd_gamma, "Draft tokens per target call")->capture_default_str()->check(CLI::PositiveNumber);
  sd->add_flag("--compare-greedy", sd_compare, "Also run target-only greedy decoding and compare");
  sd->add_option("--format", sd_format, "human | structured")
      ->capture_default_str()
      ->check(CLI::IsMember({"human", "structured"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*tok) {
      if (tok_decode) {
        const auto seq = load_token_stream(tok_input);
        const auto vocab = vocab_for(tok_vocab, seq.vocab_size());
        const auto text = decode(seq, vocab);
        if (tok_out.empty()) {
          out << text;
        } else {
          std::ofstream(tok_out, std::ios::binary) << text;
        }
        return kOk;
      }
      if (tok_out.empty()) throw UsageError("--out is required");
      const std::string text = read_file(tok_input);
      Vocabulary vocab = Vocabulary::bytes();
      if (tok_kind == "word") vocab = tok_vocab.empty() ? Vocabulary::words_from(text, tok_unk) : Vocabulary::load(tok_vocab);
      const auto seq = encode(text, vocab);
      write_token_stream(tok_out, seq);
      if (!tok_vocab_out.empty()) vocab.save(tok_vocab_out);
      out << "wrote " << seq.size() << " tokens (vocab " << vocab.size() << ", " << to_string(vocab.kind())
          << ") to " << tok_out << "\n";
      return kOk;
    }

    if (*bidx) {
      const auto corpus = load_token_stream(bidx_corpus);
      if (corpus.empty()) throw FormatError("corpus is empty", 0);
      const auto index = build_index(corpus);
      persist_index(index, bidx_out);
      out << "indexed " << index.size() << " tokens (vocab " << index.vocab_size() << ") into " << bidx_out << "\n";
      return kOk;
    }

    if (*pred) {
      if (pred_ctx_file.empty() == pred_ctx_text.empty()) {
        throw UsageError("give exactly one of --context-file or --context-text");
      }
      const auto config = pred_model.config();
      TokenSequence context;
      Vocabulary vocab = Vocabulary::bytes();
      if (!pred_ctx_file.empty()) {
        context = load_token_stream(pred_ctx_file);
        vocab = vocab_for(pred_vocab, context.vocab_size());
      } else {
        if (!pred_vocab.empty()) vocab = Vocabulary::load(pred_vocab);
        context = encode(pred_ctx_text, vocab);
      }
      if (context.empty()) throw UsageError("context is empty");
      const auto p = predict(context, config);
      const auto ex = explain(p, context, vocab, config.reference ? &*config.reference : nullptr);
      if (pred_format == "structured") {
        auto j = ex.to_json(vocab);
        j["config"] = pred_model.describe();
        j["top_token"] = p.top_token;
        if (!pred_explain) j.erase("evidence");
        out << j.dump() << "\n";
      } else {
        out << "prediction: \"" << render_tokens(std::span(&p.top_token, 1), vocab) << "\" (" << p.top_token << ")\n";
        auto text = ex.render(vocab);
        if (!pred_explain) text = text.substr(0, text.find("evidence ("));
        out << text;
      }
      return kOk;
    }

    if (*evc || *swc) {
      auto& f = *evc ? ev : sw;
      const auto config = f.model.config();
      const auto stream = load_token_stream(f.stream);
      if (stream.size() < 2) throw UsageError("evaluation stream needs at least two tokens");
      const std::vector<int> taus = *swc ? parse_taus(f.taus) : std::vector<int>{};
      const auto set = sample_eval_windows(stream, f.context_len, f.stride, f.max_samples, f.seed);
      if (set.too_short || set.samples.empty()) {
        err << "warning: stream of " << stream.size() << " tokens has no room for a target after "
            << f.context_len << " context tokens\n";
        return kData;
      }
      const unsigned threads = f.threads ? f.threads : default_threads();
      nlohmann::json header{{"type", "header"},          {"command", *evc ? "eval" : "tau-sweep"},
                            {"stream", f.stream},          {"context_len", f.context_len},
                            {"stride", f.stride},          {"max_samples", f.max_samples},
                            {"seed", f.seed},              {"candidates", set.candidates},
                            {"samples", set.samples.size()}, {"model", f.model.describe()}};

      std::vector<std::pair<int, EvalReport>> reports;
      if (*evc) {
        reports.emplace_back(f.model.tau, evaluate(make_model(config), set.samples, threads));
      } else {
        reports = tau_sweep(config, set.samples, taus, threads);
      }

      if (!f.csv.empty()) {
        std::ofstream csv(f.csv);
        if (!csv) throw std::system_error(errno, std::generic_category(), "cannot write " + f.csv);
        write_csv(csv, reports.front().second);
      }
      if (f.format == "csv") {
        out << "# seed=" << f.seed << " samples=" << set.samples.size() << "\n";
        if (*evc) {
          write_csv(out, reports.front().second);
        } else {
          out << "tau,accuracy,n_samples,reference_exact,context_exact,context_fuzzy\n";
          for (const auto& [tau, r] : reports) {
            auto usage = [&](Branch b) { auto it = r.branch_usage.find(b); return it == r.branch_usage.end() ? 0 : it->second; };
            out << (tau == kTauInfinity ? std::string("inf") : std::to_string(tau)) << ',' << r.accuracy << ','
                << r.n_samples << ',' << usage(Branch::kReferenceExact) << ',' << usage(Branch::kContextExact)
                << ',' << usage(Branch::kContextFuzzy) << '\n';
          }
        }
      } else if (f.format == "structured") {
        if (*evc) {
          write_jsonl(out, reports.front().second, header);
        } else {
          out << header.dump() << "\n";
          for (const auto& [tau, r] : reports) {
            auto j = summary_json(r);
            j["tau"] = tau == kTauInfinity ? nlohmann::json("inf") : nlohmann::json(tau);
            out << j.dump() << "\n";
          }
        }
      } else {
        out << "# seed=" << f.seed << " samples=" << set.samples.size() << " of " << set.candidates
            << " candidates, context_len=" << f.context_len << " stride=" << f.stride << " mode=" << f.model.mode
            << "\n";
        for (const auto& [tau, r] : reports) {
          if (*swc) out << "== tau " << (tau == kTauInfinity ? std::string("inf") : std::to_string(tau)) << "\n";
          write_table(out, r);
        }
      }
      return kOk;
    }

    if (*sd) {
      if (sd_target_index.empty() == sd_target_remote.empty()) {
        throw UsageError("give exactly one of --target-index or --target");
      }
      if (sd_model.mode != "induction-fuzzy") sd_model.mode = "induction-fuzzy";
      const auto config = sd_model.config();
      const auto prefix = load_token_stream(sd_prefix);
      std::unique_ptr<TargetModel> target;
      if (!sd_target_index.empty()) {
        target = make_reference_target(open_index(sd_target_index), config.max_exact_len);
      } else {
        target = std::make_unique<RemoteTarget>(sd_target_remote);
      }
      const auto spec = speculative_decode(induction_draft(config), *target, prefix, sd_max_new, sd_gamma);
      std::optional<DecodeResult> base;
      if (sd_compare) base = greedy_decode(*target, prefix, sd_max_new);
      const auto& st = spec.stats;
      if (sd_format == "structured") {
        nlohmann::json j{{"type", "specdec"},
                         {"gamma", sd_gamma},
                         {"max_new", sd_max_new},
                         {"tokens_generated", st.tokens_generated},
                         {"target_calls", st.target_calls},
                         {"draft_tokens_proposed", st.draft_tokens_proposed},
                         {"draft_tokens_accepted", st.draft_tokens_accepted},
                         {"acceptance_rate", st.acceptance_rate()},
                         {"tokens_per_target_call", st.tokens_per_target_call()},
                         {"tokens", spec.tokens},
                         {"model", sd_model.describe()}};
        if (base) j["lossless"] = base->tokens == spec.tokens;
        out << j.dump() << "\n";
      } else {
        char line[160];
        std::snprintf(line, sizeof line,
                      "generated %llu tokens in %llu target calls (%.3f tokens/call), acceptance %.4f (%llu/%llu)\n",
                      static_cast<unsigned long long>(st.tokens_generated),
                      static_cast<unsigned long long>(st.target_calls), st.tokens_per_target_call(),
                      st.acceptance_rate(), static_cast<unsigned long long>(st.draft_tokens_accepted),
                      static_cast<unsigned long long>(st.draft_tokens_proposed));
        out << line;
        std::snprintf(line, sizeof line, "speculative: %.4f ms/token\n", 1e3 * st.seconds / std::max<double>(1, st.tokens_generated));
        out << line;
        if (base) {
          const double base_ms = 1e3 * base->stats.seconds / std::max<double>(1, base->stats.tokens_generated);
          const double spec_ms = 1e3 * st.seconds / std::max<double>(1, st.tokens_generated);
          std::snprintf(line, sizeof line, "target-only: %.4f ms/token, speed-up %.2fx, lossless: %s\n", base_ms,
                        spec_ms > 0 ? base_ms / spec_ms : 0.0, base->tokens == spec.tokens ? "yes" : "NO");
          out << line;
        }
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kData;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return kData;
  } catch (const EncodingError& e) {
    err << "encoding error: " << e.what() << "\n";
    return kData;
  } catch (const RemoteError& e) {
    err << "remote error: " << e.what() << "\n";
    return kData;
  } catch (const DecodeError& e) {
    err << "decode error: " << e.what() << " after " << e.partial().tokens.size() << " tokens\n";
    return kData;
  } catch (const std::system_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace igram::cli
