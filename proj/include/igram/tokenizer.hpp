#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "igram/types.hpp"

namespace igram {

enum class VocabKind { kByte, kWord, kExternal };

const char* to_string(VocabKind kind);

// A fixed token vocabulary. Byte vocabularies have exactly 256 entries; word
// vocabularies assign ids in first-appearance order; external vocabularies
// only know their size (surfaces render as "<id>").
class Vocabulary {
 public:
  static Vocabulary bytes();
  static Vocabulary words_from(std::string_view text, bool reserve_unknown = false);
  static Vocabulary external(std::uint32_t size);

  VocabKind kind() const { return kind_; }
  std::uint32_t size() const { return size_; }
  std::optional<TokenId> unknown_id() const { return unknown_id_; }

  // Display string for explanations; never throws for in-range ids.
  std::string surface(TokenId id) const;
  std::optional<TokenId> lookup(std::string_view word) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  VocabKind kind_ = VocabKind::kExternal;
  std::uint32_t size_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> word_ids_;
  std::optional<TokenId> unknown_id_;
};

// Immutable run of token ids bound to a vocabulary size. Copies share storage.
class TokenSequence {
 public:
  TokenSequence() : tokens_(std::make_shared<const std::vector<TokenId>>()) {}
  TokenSequence(std::vector<TokenId> tokens, std::uint32_t vocab_size);

  std::size_t size() const { return tokens_->size(); }
  bool empty() const { return tokens_->empty(); }
  TokenId operator[](std::size_t i) const { return (*tokens_)[i]; }
  std::uint32_t vocab_size() const { return vocab_size_; }

  TokenSpan view() const { return *tokens_; }
  operator TokenSpan() const { return view(); }  // NOLINT(google-explicit-constructor)
  auto begin() const { return tokens_->begin(); }
  auto end() const { return tokens_->end(); }
  const std::vector<TokenId>& vector() const { return *tokens_; }

  friend bool operator==(const TokenSequence& a, const TokenSequence& b) {
    return a.vocab_size_ == b.vocab_size_ && *a.tokens_ == *b.tokens_;
  }

 private:
  std::shared_ptr<const std::vector<TokenId>> tokens_;
  std::uint32_t vocab_size_ = 0;
};

TokenSequence encode(std::string_view text, const Vocabulary& vocab);
std::string decode(TokenSpan tokens, const Vocabulary& vocab);

// Smallest of {1, 2, 4} bytes able to hold every id of a vocabulary.
std::uint8_t token_width_for(std::uint32_t vocab_size);

// IGTS token stream files (little-endian):
//   "IGTS" | u32 version=1 | u32 vocab_size | u8 token_width | 3 reserved |
//   u64 count | count ids of token_width bytes
void write_token_stream(const std::filesystem::path& path, const TokenSequence& tokens,
                        std::uint8_t token_width = 0);
TokenSequence load_token_stream(const std::filesystem::path& path);
TokenSequence parse_token_stream(std::span<const unsigned char> bytes);

}  // namespace igram
