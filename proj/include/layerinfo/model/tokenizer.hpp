#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace layerinfo::model {

using TokenId = std::int32_t;

// Half-open byte range [begin, end) into the UTF-8 source string.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const ByteSpan&) const = default;
};

// Token ids plus, for every token, the bytes of the source text it covers.
// Tokens that do not come from the text (a begin-of-sequence marker, an
// inserted prefix space) carry an empty span.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<ByteSpan> offsets;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  void append(const TokenSequence& other, std::size_t byte_shift);
  void push_back(TokenId id, ByteSpan span) {
    ids.push_back(id);
    offsets.push_back(span);
  }
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  // Encodes raw text without adding any special token.
  virtual TokenSequence encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids, bool skip_special = true) const = 0;
  virtual int vocab_size() const = 0;
  virtual std::optional<TokenId> token_id(std::string_view token) const = 0;
  virtual bool is_special(TokenId id) const = 0;

  std::optional<TokenId> bos_id() const { return bos_; }
  std::optional<TokenId> eos_id() const { return eos_; }
  void set_bos(std::optional<TokenId> id) { bos_ = id; }
  void set_eos(std::optional<TokenId> id) { eos_ = id; }

 private:
  std::optional<TokenId> bos_;
  std::optional<TokenId> eos_;
};

// BPE tokenizer driven by a Hugging Face tokenizer.json. Supported layouts:
//   * ByteLevel pre-tokenizer (GPT-2 regex or an explicit Split regex),
//   * Metaspace pre-tokenizer or the Prepend/Replace normaliser pair used by
//     SentencePiece conversions, with optional byte fallback.
// Anything else is rejected at load time.
class BpeTokenizer final : public Tokenizer {
 public:
  static std::unique_ptr<BpeTokenizer> from_file(const std::filesystem::path& path);

  TokenSequence encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids, bool skip_special = true) const override;
  int vocab_size() const override { return static_cast<int>(id_to_token_.size()); }
  std::optional<TokenId> token_id(std::string_view token) const override;
  bool is_special(TokenId id) const override;

  ~BpeTokenizer() override;

 private:
  enum class Mode { byte_level, metaspace };
  enum class Prepend { never, first, always };

  struct Symbol {
    std::string text;  // in the model alphabet
    ByteSpan span;
  };
  struct AddedToken {
    std::string content;
    TokenId id;
    bool special;
  };
  struct PairHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const;
  };
  class SplitRegex;

  BpeTokenizer();

  void encode_segment(std::string_view text, std::size_t base, bool first_segment,
                      TokenSequence& out) const;
  std::vector<std::pair<std::size_t, std::size_t>> split_pieces(std::string_view text) const;
  void encode_symbols(std::vector<Symbol> symbols, TokenSequence& out) const;
  void emit_symbol(const Symbol& s, TokenSequence& out) const;

  Mode mode_ = Mode::byte_level;
  Prepend prepend_ = Prepend::never;
  bool add_prefix_space_ = false;
  bool metaspace_split_ = true;
  bool byte_fallback_ = false;
  bool ignore_merges_ = false;
  std::optional<TokenId> unk_;
  std::string replacement_ = "\xE2\x96\x81";  // U+2581
  std::unique_ptr<SplitRegex> split_;

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::pair<std::string, std::string>, int, PairHash> merge_rank_;
  std::vector<AddedToken> added_;
  std::vector<bool> special_;
  std::vector<std::string> byte_to_unicode_;
  std::unordered_map<std::string, unsigned char> unicode_to_byte_;
};

// Character-level tokenizer used by the toy models: ids 0..2 are <bos>,
// <eos>, <unk>, followed by a fixed lower-case alphabet truncated to the
// vocabulary size. Upper-case ASCII is folded to lower case; any other
// character becomes <unk> and decodes as '?'.
class CharTokenizer final : public Tokenizer {
 public:
  explicit CharTokenizer(int vocab_size);

  TokenSequence encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids, bool skip_special = true) const override;
  int vocab_size() const override { return vocab_size_; }
  std::optional<TokenId> token_id(std::string_view token) const override;
  bool is_special(TokenId id) const override { return id < kFirstChar; }

  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kFirstChar = 3;
  static std::string_view alphabet();

 private:
  int vocab_size_;
  std::string chars_;
};

}  // namespace layerinfo::model
