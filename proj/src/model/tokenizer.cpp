#include "layerinfo/model/tokenizer.hpp"

#include <unicode/regex.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>

#include <nlohmann/json.hpp>

#include "layerinfo/error.hpp"

namespace layerinfo::model {
namespace {

using json = nlohmann::json;

constexpr std::string_view kGpt2Pattern =
    R"('s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+)";

std::string encode_utf8(std::uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

// Length in bytes of the UTF-8 sequence starting at text[i]; invalid lead
// bytes count as a single byte.
std::size_t utf8_length(std::string_view text, std::size_t i) {
  const auto c = static_cast<unsigned char>(text[i]);
  std::size_t n = 1;
  if (c >= 0xF0) n = 4;
  else if (c >= 0xE0) n = 3;
  else if (c >= 0xC0) n = 2;
  return std::min(n, text.size() - i);
}

// The GPT-2 byte <-> printable-unicode table.
std::vector<std::string> make_byte_table() {
  std::vector<int> direct;
  for (int b = '!'; b <= '~'; ++b) direct.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) direct.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) direct.push_back(b);
  std::vector<std::string> table(256);
  std::vector<bool> seen(256, false);
  for (int b : direct) {
    table[b] = encode_utf8(static_cast<std::uint32_t>(b));
    seen[b] = true;
  }
  std::uint32_t next = 256;
  for (int b = 0; b < 256; ++b) {
    if (!seen[b]) table[b] = encode_utf8(next++);
  }
  return table;
}

std::optional<int> parse_byte_token(std::string_view tok) {
  // "<0xAB>"
  if (tok.size() != 6 || tok.substr(0, 3) != "<0x" || tok[5] != '>') return std::nullopt;
  int value = 0;
  for (char c : tok.substr(3, 2)) {
    value <<= 4;
    if (c >= '0' && c <= '9') value |= c - '0';
    else if (c >= 'A' && c <= 'F') value |= c - 'A' + 10;
    else if (c >= 'a' && c <= 'f') value |= c - 'a' + 10;
    else return std::nullopt;
  }
  return value;
}

}  // namespace

void TokenSequence::append(const TokenSequence& other, std::size_t byte_shift) {
  for (std::size_t i = 0; i < other.size(); ++i) {
    const auto& s = other.offsets[i];
    push_back(other.ids[i], {s.begin + byte_shift, s.end + byte_shift});
  }
}

// ---------------------------------------------------------------------------
// Regex splitting backed by ICU (the patterns use \p{L}, \p{N}, look-ahead and
// scoped case folding, none of which std::regex supports).

class BpeTokenizer::SplitRegex {
 public:
  SplitRegex(const std::string& pattern, bool remove_matches) : remove_matches_(remove_matches) {
    UErrorCode status = U_ZERO_ERROR;
    UParseError perr;
    pattern_.reset(icu::RegexPattern::compile(icu::UnicodeString::fromUTF8(pattern), 0, perr,
                                              status));
    if (U_FAILURE(status)) {
      throw LoadError("unsupported pre-tokenizer regex: " + pattern + " (" +
                      u_errorName(status) + ")");
    }
  }

  // Byte ranges of the pieces of `text`.
  std::vector<std::pair<std::size_t, std::size_t>> split(std::string_view text) const {
    const auto ustr = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(),
                                                                    static_cast<int32_t>(text.size())));
    // utf16 index -> byte offset
    std::vector<std::size_t> byte_at(static_cast<std::size_t>(ustr.length()) + 1, text.size());
    {
      std::size_t b = 0;
      int32_t u = 0;
      while (u < ustr.length()) {
        byte_at[static_cast<std::size_t>(u)] = b;
        const UChar32 cp = ustr.char32At(u);
        u += U16_LENGTH(cp);
        b += U8_LENGTH(cp);
      }
      byte_at[static_cast<std::size_t>(ustr.length())] = text.size();
    }

    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::RegexMatcher> m(pattern_->matcher(ustr, status));
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t last = 0;
    while (m->find(status) && U_SUCCESS(status)) {
      const auto s = byte_at[static_cast<std::size_t>(m->start(status))];
      const auto e = byte_at[static_cast<std::size_t>(m->end(status))];
      if (s == e) continue;
      if (s > last) out.emplace_back(last, s);
      if (!remove_matches_) out.emplace_back(s, e);
      last = e;
    }
    if (last < text.size()) out.emplace_back(last, text.size());
    return out;
  }

 private:
  std::unique_ptr<icu::RegexPattern> pattern_;
  bool remove_matches_;
};

// ---------------------------------------------------------------------------

std::size_t BpeTokenizer::PairHash::operator()(const std::pair<std::string, std::string>& p) const {
  const std::size_t h1 = std::hash<std::string>{}(p.first);
  const std::size_t h2 = std::hash<std::string>{}(p.second);
  return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
}

BpeTokenizer::BpeTokenizer() : byte_to_unicode_(make_byte_table()) {
  for (int b = 0; b < 256; ++b) unicode_to_byte_[byte_to_unicode_[b]] = static_cast<unsigned char>(b);
}

BpeTokenizer::~BpeTokenizer() = default;

std::unique_ptr<BpeTokenizer> BpeTokenizer::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open tokenizer " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("invalid tokenizer json " + path.string() + ": " + e.what());
  }

  std::unique_ptr<BpeTokenizer> tok(new BpeTokenizer());
  const auto& model = doc.at("model");
  if (model.value("type", std::string("BPE")) != "BPE") {
    throw LoadError("only BPE tokenizers are supported: " + path.string());
  }
  tok->byte_fallback_ = model.value("byte_fallback", false);
  tok->ignore_merges_ = model.value("ignore_merges", false);

  TokenId max_id = -1;
  for (const auto& [piece, id] : model.at("vocab").items()) {
    tok->vocab_[piece] = id.get<TokenId>();
    max_id = std::max(max_id, id.get<TokenId>());
  }
  for (const auto& added : doc.value("added_tokens", json::array())) {
    const auto id = added.at("id").get<TokenId>();
    const auto content = added.at("content").get<std::string>();
    tok->vocab_.emplace(content, id);
    tok->added_.push_back({content, id, added.value("special", false)});
    max_id = std::max(max_id, id);
  }
  tok->id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
  tok->special_.assign(static_cast<std::size_t>(max_id + 1), false);
  for (const auto& [piece, id] : tok->vocab_) tok->id_to_token_[static_cast<std::size_t>(id)] = piece;
  for (const auto& a : tok->added_) tok->special_[static_cast<std::size_t>(a.id)] = a.special;
  // Longest contents first so that overlapping added tokens resolve greedily.
  std::stable_sort(tok->added_.begin(), tok->added_.end(),
                   [](const AddedToken& a, const AddedToken& b) { return a.content.size() > b.content.size(); });

  int rank = 0;
  for (const auto& m : model.at("merges")) {
    std::string a, b;
    if (m.is_array()) {
      a = m.at(0).get<std::string>();
      b = m.at(1).get<std::string>();
    } else {
      const auto s = m.get<std::string>();
      const auto sp = s.find(' ');
      if (sp == std::string::npos) throw LoadError("malformed merge: " + s);
      a = s.substr(0, sp);
      b = s.substr(sp + 1);
    }
    tok->merge_rank_.emplace(std::make_pair(std::move(a), std::move(b)), rank++);
  }
  if (model.contains("unk_token") && model["unk_token"].is_string()) {
    tok->unk_ = tok->token_id(model["unk_token"].get<std::string>());
  }

  // Pre-tokenizer / normaliser configuration.
  std::function<void(const json&)> configure = [&](const json& pt) {
    const auto type = pt.at("type").get<std::string>();
    if (type == "Sequence") {
      for (const auto& sub : pt.at("pretokenizers")) configure(sub);
    } else if (type == "ByteLevel") {
      tok->mode_ = Mode::byte_level;
      tok->add_prefix_space_ = pt.value("add_prefix_space", false);
      if (pt.value("use_regex", true)) {
        if (tok->split_) throw LoadError("two regex splitters in " + path.string());
        tok->split_ = std::make_unique<SplitRegex>(std::string(kGpt2Pattern), false);
      }
    } else if (type == "Split") {
      const auto& pat = pt.at("pattern");
      if (!pat.contains("Regex")) throw LoadError("only regex Split pre-tokenizers are supported");
      const auto behavior = pt.value("behavior", std::string("Isolated"));
      if (pt.value("invert", false) || (behavior != "Isolated" && behavior != "Removed")) {
        throw LoadError("unsupported Split behaviour " + behavior);
      }
      if (tok->split_) throw LoadError("two regex splitters in " + path.string());
      tok->split_ = std::make_unique<SplitRegex>(pat.at("Regex").get<std::string>(), behavior == "Removed");
    } else if (type == "Metaspace") {
      tok->mode_ = Mode::metaspace;
      tok->replacement_ = pt.value("replacement", tok->replacement_);
      tok->metaspace_split_ = pt.value("split", true);
      const auto scheme = pt.value("prepend_scheme",
                                   pt.value("add_prefix_space", true) ? std::string("always") : std::string("never"));
      tok->prepend_ = scheme == "never" ? Prepend::never : scheme == "first" ? Prepend::first : Prepend::always;
    } else {
      throw LoadError("unsupported pre-tokenizer " + type + " in " + path.string());
    }
  };

  const auto& pre = doc.value("pre_tokenizer", json());
  if (!pre.is_null()) configure(pre);

  const auto& norm = doc.value("normalizer", json());
  if (!norm.is_null()) {
    // SentencePiece conversions: Sequence[Prepend("▁"), Replace(" ", "▁")].
    bool prepend = false, replace = false;
    const auto parts = norm.at("type") == "Sequence" ? norm.at("normalizers") : json::array({norm});
    for (const auto& n : parts) {
      const auto t = n.at("type").get<std::string>();
      if (t == "Prepend") {
        prepend = true;
        tok->replacement_ = n.at("prepend").get<std::string>();
      } else if (t == "Replace") {
        replace = true;
      } else {
        throw LoadError("unsupported normalizer " + t + " in " + path.string());
      }
    }
    if (!replace || !pre.is_null()) throw LoadError("unsupported normalizer layout in " + path.string());
    tok->mode_ = Mode::metaspace;
    tok->metaspace_split_ = false;
    tok->prepend_ = prepend ? Prepend::first : Prepend::never;
  }
  if (pre.is_null() && norm.is_null()) throw LoadError("tokenizer without pre-tokenizer: " + path.string());
  return tok;
}

std::optional<TokenId> BpeTokenizer::token_id(std::string_view token) const {
  const auto it = vocab_.find(std::string(token));
  if (it == vocab_.end()) return std::nullopt;
  return it->second;
}

bool BpeTokenizer::is_special(TokenId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < special_.size() && special_[static_cast<std::size_t>(id)];
}

TokenSequence BpeTokenizer::encode(std::string_view text) const {
  TokenSequence out;
  std::size_t pos = 0;
  std::size_t seg_start = 0;
  bool first = true;
  while (pos < text.size()) {
    const AddedToken* hit = nullptr;
    for (const auto& a : added_) {
      if (!a.content.empty() && text.compare(pos, a.content.size(), a.content) == 0) {
        hit = &a;
        break;
      }
    }
    if (hit == nullptr) {
      ++pos;
      continue;
    }
    if (pos > seg_start) {
      encode_segment(text.substr(seg_start, pos - seg_start), seg_start, first, out);
    }
    first = false;
    out.push_back(hit->id, {pos, pos + hit->content.size()});
    pos += hit->content.size();
    seg_start = pos;
  }
  if (seg_start < text.size()) encode_segment(text.substr(seg_start), seg_start, first, out);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> BpeTokenizer::split_pieces(std::string_view text) const {
  if (split_) return split_->split(text);
  return {{0, text.size()}};
}

void BpeTokenizer::encode_segment(std::string_view text, std::size_t base, bool first_segment,
                                  TokenSequence& out) const {
  if (mode_ == Mode::byte_level) {
    std::string buffer;
    std::string_view view = text;
    std::size_t shift = 0;
    bool prefixed = false;
    if (add_prefix_space_ && !text.empty() && text.front() != ' ') {
      buffer = " " + std::string(text);
      view = buffer;
      shift = 1;
      prefixed = true;
    }
    for (const auto& [b, e] : split_pieces(view)) {
      std::vector<Symbol> symbols;
      for (std::size_t i = b; i < e; ++i) {
        ByteSpan span{base + i - shift, base + i + 1 - shift};
        if (prefixed && i == 0) span = {base, base};
        symbols.push_back({byte_to_unicode_[static_cast<unsigned char>(view[i])], span});
      }
      encode_symbols(std::move(symbols), out);
    }
    return;
  }

  // Metaspace: spaces become the replacement character, a replacement is
  // optionally prepended, and the text is split so that each piece starts at
  // a replacement character.
  std::vector<Symbol> all;
  const bool starts_with_space = !text.empty() && text.front() == ' ';
  if ((prepend_ == Prepend::always || (prepend_ == Prepend::first && first_segment && base == 0)) &&
      !starts_with_space) {
    all.push_back({replacement_, {base, base}});
  }
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t n = utf8_length(text, i);
    std::string ch(text.substr(i, n));
    if (ch == " ") ch = replacement_;
    all.push_back({std::move(ch), {base + i, base + i + n}});
    i += n;
  }
  if (!metaspace_split_) {
    encode_symbols(std::move(all), out);
    return;
  }
  std::vector<Symbol> piece;
  for (auto& s : all) {
    if (s.text == replacement_ && !piece.empty()) {
      encode_symbols(std::move(piece), out);
      piece.clear();
    }
    piece.push_back(std::move(s));
  }
  if (!piece.empty()) encode_symbols(std::move(piece), out);
}

void BpeTokenizer::encode_symbols(std::vector<Symbol> symbols, TokenSequence& out) const {
  if (symbols.empty()) return;
  if (ignore_merges_) {
    std::string whole;
    for (const auto& s : symbols) whole += s.text;
    if (const auto it = vocab_.find(whole); it != vocab_.end()) {
      out.push_back(it->second, {symbols.front().span.begin, symbols.back().span.end});
      return;
    }
  }
  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = merge_rank_.find({symbols[i].text, symbols[i + 1].text});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = i;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    // Merge every non-overlapping occurrence of the winning pair, left to right.
    const std::string left = symbols[best].text;
    const std::string right = symbols[best + 1].text;
    std::vector<Symbol> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i].text == left && symbols[i + 1].text == right) {
        merged.push_back({left + right, {symbols[i].span.begin, symbols[i + 1].span.end}});
        i += 2;
      } else {
        merged.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  for (const auto& s : symbols) emit_symbol(s, out);
}

void BpeTokenizer::emit_symbol(const Symbol& s, TokenSequence& out) const {
  if (const auto it = vocab_.find(s.text); it != vocab_.end()) {
    out.push_back(it->second, s.span);
    return;
  }
  if (byte_fallback_) {
    // One token per byte; spans advance byte by byte where the symbol's
    // source bytes line up with its UTF-8 encoding.
    bool all_found = true;
    std::vector<TokenId> ids;
    for (unsigned char c : s.text) {
      char name[8];
      std::snprintf(name, sizeof(name), "<0x%02X>", c);
      const auto it = vocab_.find(name);
      if (it == vocab_.end()) {
        all_found = false;
        break;
      }
      ids.push_back(it->second);
    }
    if (all_found) {
      const bool aligned = s.span.end - s.span.begin == s.text.size();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ByteSpan span = aligned ? ByteSpan{s.span.begin + i, s.span.begin + i + 1}
                                : (i + 1 == ids.size() ? s.span : ByteSpan{s.span.begin, s.span.begin});
        out.push_back(ids[i], span);
      }
      return;
    }
  }
  if (unk_) {
    out.push_back(*unk_, s.span);
    return;
  }
  throw InvalidArgument("symbol not representable by tokenizer: " + s.text);
}

std::string BpeTokenizer::decode(std::span<const TokenId> ids, bool skip_special) const {
  std::string out;
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw InvalidArgument("token id out of range: " + std::to_string(id));
    }
    const std::string& piece = id_to_token_[static_cast<std::size_t>(id)];
    // Byte tokens are text even when a tokenizer file registers them as special.
    if (mode_ != Mode::byte_level && byte_fallback_) {
      if (const auto b = parse_byte_token(piece)) {
        out.push_back(static_cast<char>(*b));
        continue;
      }
    }
    if (skip_special && is_special(id)) continue;
    if (special_[static_cast<std::size_t>(id)]) {
      out += piece;
      continue;
    }
    if (mode_ == Mode::byte_level) {
      for (std::size_t i = 0; i < piece.size();) {
        const std::size_t n = utf8_length(piece, i);
        const auto it = unicode_to_byte_.find(piece.substr(i, n));
        if (it != unicode_to_byte_.end()) out.push_back(static_cast<char>(it->second));
        else out += piece.substr(i, n);
        i += n;
      }
    } else {
      for (std::size_t i = 0; i < piece.size();) {
        if (piece.compare(i, replacement_.size(), replacement_) == 0) {
          out.push_back(' ');
          i += replacement_.size();
        } else {
          out.push_back(piece[i]);
          ++i;
        }
      }
    }
  }
  if (mode_ == Mode::metaspace && prepend_ != Prepend::never && !out.empty() && out.front() == ' ') {
    out.erase(0, 1);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view CharTokenizer::alphabet() {
  static constexpr std::string_view kAlphabet = " \nabcdefghijklmnopqrstuvwxyz.,?!'\"-:;0123456789";
  return kAlphabet;
}

CharTokenizer::CharTokenizer(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < kFirstChar + 1) throw InvalidArgument("char tokenizer needs vocab_size >= 4");
  const auto usable = std::min<std::size_t>(alphabet().size(), static_cast<std::size_t>(vocab_size - kFirstChar));
  chars_ = std::string(alphabet().substr(0, usable));
  set_bos(kBos);
  set_eos(kEos);
}

TokenSequence CharTokenizer::encode(std::string_view text) const {
  TokenSequence out;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t n = utf8_length(text, i);
    TokenId id = kUnk;
    if (n == 1) {
      char c = text[i];
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      if (const auto p = chars_.find(c); p != std::string::npos) id = kFirstChar + static_cast<TokenId>(p);
    }
    out.push_back(id, {i, i + n});
    i += n;
  }
  return out;
}

std::string CharTokenizer::decode(std::span<const TokenId> ids, bool skip_special) const {
  std::string out;
  for (const TokenId id : ids) {
    if (id < 0 || id >= vocab_size_) throw InvalidArgument("token id out of range: " + std::to_string(id));
    if (id == kBos || id == kEos) {
      if (!skip_special) out += id == kBos ? "<bos>" : "<eos>";
      continue;
    }
    const auto p = static_cast<std::size_t>(id - kFirstChar);
    out.push_back(id == kUnk || p >= chars_.size() ? '?' : chars_[p]);
  }
  return out;
}

std::optional<TokenId> CharTokenizer::token_id(std::string_view token) const {
  if (token == "<bos>") return kBos;
  if (token == "<eos>") return kEos;
  if (token == "<unk>") return kUnk;
  if (token.size() == 1) {
    if (const auto p = chars_.find(token[0]); p != std::string::npos) return kFirstChar + static_cast<TokenId>(p);
  }
  return std::nullopt;
}

}  // namespace layerinfo::model
