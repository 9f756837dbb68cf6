#include "igram/tokenizer.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "igram/binary_io.hpp"

namespace igram {
namespace {

constexpr std::uint32_t kStreamVersion = 1;

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

template <typename F>
void for_each_word(std::string_view text, F&& f) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) f(text.substr(start, i - start));
  }
}

}  // namespace

const char* to_string(VocabKind kind) {
  switch (kind) {
    case VocabKind::kByte: return "byte";
    case VocabKind::kWord: return "word";
    case VocabKind::kExternal: return "external";
  }
  return "?";
}

Vocabulary Vocabulary::bytes() {
  Vocabulary v;
  v.kind_ = VocabKind::kByte;
  v.size_ = 256;
  return v;
}

Vocabulary Vocabulary::words_from(std::string_view text, bool reserve_unknown) {
  Vocabulary v;
  v.kind_ = VocabKind::kWord;
  for_each_word(text, [&](std::string_view w) {
    auto [it, inserted] = v.word_ids_.try_emplace(std::string(w), static_cast<TokenId>(v.words_.size()));
    if (inserted) v.words_.emplace_back(w);
  });
  if (reserve_unknown) {
    v.unknown_id_ = static_cast<TokenId>(v.words_.size());
    v.words_.emplace_back("<unk>");
  }
  v.size_ = static_cast<std::uint32_t>(v.words_.size());
  if (v.size_ == 0) v.size_ = 1;  // keep the size positive for empty corpora
  return v;
}

Vocabulary Vocabulary::external(std::uint32_t size) {
  if (size == 0) throw std::invalid_argument("vocabulary size must be positive");
  Vocabulary v;
  v.kind_ = VocabKind::kExternal;
  v.size_ = size;
  return v;
}

std::string Vocabulary::surface(TokenId id) const {
  switch (kind_) {
    case VocabKind::kByte:
      if (id < 256) return std::string(1, static_cast<char>(id));
      break;
    case VocabKind::kWord:
      if (id < words_.size()) return words_[id];
      break;
    case VocabKind::kExternal:
      break;
  }
  return "<" + std::to_string(id) + ">";
}

std::optional<TokenId> Vocabulary::lookup(std::string_view word) const {
  auto it = word_ids_.find(std::string(word));
  if (it == word_ids_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["kind"] = to_string(kind_);
  j["size"] = size_;
  if (kind_ == VocabKind::kWord) j["words"] = words_;
  if (unknown_id_) j["unknown_id"] = *unknown_id_;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << j.dump() << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary is not valid JSON: ") + e.what(), 0);
  }
  const std::string kind = j.value("kind", "");
  if (kind == "byte") return bytes();
  if (kind == "external") return external(j.at("size").get<std::uint32_t>());
  if (kind != "word") throw FormatError("unknown vocabulary kind \"" + kind + "\"", 0);
  Vocabulary v;
  v.kind_ = VocabKind::kWord;
  v.words_ = j.at("words").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    v.word_ids_.emplace(v.words_[i], static_cast<TokenId>(i));
  }
  if (j.contains("unknown_id")) {
    v.unknown_id_ = j["unknown_id"].get<TokenId>();
    v.word_ids_.erase(v.words_[*v.unknown_id_]);
  }
  v.size_ = j.at("size").get<std::uint32_t>();
  return v;
}

TokenSequence::TokenSequence(std::vector<TokenId> tokens, std::uint32_t vocab_size)
    : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be positive");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab_size) {
      throw std::out_of_range("token id " + std::to_string(tokens[i]) + " at index " +
                              std::to_string(i) + " is outside vocabulary of size " +
                              std::to_string(vocab_size));
    }
  }
  tokens_ = std::make_shared<const std::vector<TokenId>>(std::move(tokens));
}

TokenSequence encode(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  switch (vocab.kind()) {
    case VocabKind::kByte:
      ids.reserve(text.size());
      for (char c : text) ids.push_back(static_cast<unsigned char>(c));
      break;
    case VocabKind::kWord:
      for_each_word(text, [&](std::string_view w) {
        if (auto id = vocab.lookup(w)) {
          ids.push_back(*id);
        } else if (auto unk = vocab.unknown_id()) {
          ids.push_back(*unk);
        } else {
          throw EncodingError("word \"" + std::string(w) + "\" is not in the vocabulary");
        }
      });
      break;
    case VocabKind::kExternal:
      throw std::invalid_argument("external vocabularies cannot encode text");
  }
  return TokenSequence(std::move(ids), vocab.size());
}

std::string decode(TokenSpan tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab.size()) {
      throw std::out_of_range("token id " + std::to_string(tokens[i]) +
                              " is outside vocabulary of size " + std::to_string(vocab.size()));
    }
    if (vocab.kind() == VocabKind::kWord && i > 0) out.push_back(' ');
    out += vocab.surface(tokens[i]);
  }
  return out;
}

std::uint8_t token_width_for(std::uint32_t vocab_size) {
  if (vocab_size <= (1u << 8)) return 1;
  if (vocab_size <= (1u << 16)) return 2;
  return 4;
}

void write_token_stream(const std::filesystem::path& path, const TokenSequence& tokens,
                        std::uint8_t token_width) {
  if (token_width == 0) token_width = token_width_for(tokens.vocab_size());
  if (token_width != 1 && token_width != 2 && token_width != 4) {
    throw std::invalid_argument("token width must be 1, 2 or 4");
  }
  if (token_width < 4 && tokens.vocab_size() > (1ull << (8 * token_width))) {
    throw std::invalid_argument("token width too small for vocabulary");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("IGTS", 4);
  put_le<std::uint32_t>(out, kStreamVersion);
  put_le<std::uint32_t>(out, tokens.vocab_size());
  put_le<std::uint8_t>(out, token_width);
  out.write("\0\0\0", 3);
  put_le<std::uint64_t>(out, tokens.size());
  for (TokenId t : tokens) put_le_width(out, t, token_width);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TokenSequence parse_token_stream(std::span<const unsigned char> bytes) {
  ByteCursor cur(bytes);
  cur.expect_magic("IGTS");
  const auto version_at = cur.offset();
  if (auto version = cur.read(4); version != kStreamVersion) {
    throw FormatError("unsupported token stream version " + std::to_string(version), version_at);
  }
  const auto vocab_at = cur.offset();
  const auto vocab_size = static_cast<std::uint32_t>(cur.read(4));
  if (vocab_size == 0) throw FormatError("vocabulary size is zero", vocab_at);
  const auto width_at = cur.offset();
  const auto width = static_cast<std::size_t>(cur.read(1));
  if (width != 1 && width != 2 && width != 4) {
    throw FormatError("token width must be 1, 2 or 4, got " + std::to_string(width), width_at);
  }
  cur.skip(3);
  const auto count = cur.read(8);
  if (count > cur.remaining() / width) {
    throw FormatError("truncated payload: header declares " + std::to_string(count) + " tokens",
                      cur.offset());
  }
  std::vector<TokenId> ids(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto at = cur.offset();
    const auto id = cur.read(width);
    if (id >= vocab_size) {
      throw FormatError("token id " + std::to_string(id) + " >= vocabulary size " +
                            std::to_string(vocab_size),
                        at);
    }
    ids[i] = static_cast<TokenId>(id);
  }
  if (cur.remaining() != 0) throw FormatError("trailing bytes after payload", cur.offset());
  return TokenSequence(std::move(ids), vocab_size);
}

TokenSequence load_token_stream(const std::filesystem::path& path) {
  MappedFile file(path);
  return parse_token_stream(file.bytes());
}

}  // namespace igram
