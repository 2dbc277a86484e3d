#pragma once

// Token codecs.
//
// Everything downstream (budgets, latency metrics, packed sequences) is
// defined over token counts, so the codec contract matters more than the
// tokenization quality:
//
//   * decode(encode(text)) == text, byte for byte.
//   * Control tags encode to one dedicated token id each, no matter what
//     surrounds them, so packed sequences tokenize identically across codecs.
//   * Encoding is deterministic for the lifetime of a codec instance.
//
// WordCodec is the test codec: whitespace/word-level, with any leading
// whitespace attached to the following word ("a b" -> ["a", " b"]).  That
// convention makes token counts additive at the seams the runtime actually
// cuts at (a control tag on either side, or a span boundary right before
// leading whitespace), which is what lets a packed trie reproduce each
// unit's standalone token sequence exactly.
//
// VocabFileCodec adapts an external vocabulary file (one token per line,
// line index = token id) with greedy longest-match encoding; it is meant for
// counting real-model tokens, not for training-data generation.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace apr {

using TokenId = std::int32_t;

struct CodecError : std::runtime_error {
  explicit CodecError(const std::string& what) : std::runtime_error(what) {}
};

// Control tags of the fork-join trajectory format, in canonical order.
// WordCodec assigns them ids 0..9 in this order.
namespace tags {
inline constexpr std::string_view think_open = "<think>";
inline constexpr std::string_view think_close = "</think>";
inline constexpr std::string_view parallel_open = "<Parallel>";
inline constexpr std::string_view parallel_close = "</Parallel>";
inline constexpr std::string_view outlines_open = "<Outlines>";
inline constexpr std::string_view outlines_close = "</Outlines>";
inline constexpr std::string_view outline_open = "<Outline>";
inline constexpr std::string_view outline_close = "</Outline>";
inline constexpr std::string_view thread_open = "<Thread>";
inline constexpr std::string_view thread_close = "</Thread>";

inline constexpr std::array<std::string_view, 10> all = {
    think_open,    think_close,    parallel_open, parallel_close,
    outlines_open, outlines_close, outline_open,  outline_close,
    thread_open,   thread_close,
};

// Legacy aliases seen in older trajectories; recognized by the parser only
// when explicitly enabled, never emitted by the runtime.
inline constexpr std::string_view goal_open = "<Goal>";
inline constexpr std::string_view goal_close = "</Goal>";
inline constexpr std::string_view path_open = "<Path>";
inline constexpr std::string_view path_close = "</Path>";
}  // namespace tags

class TokenCodec {
 public:
  virtual ~TokenCodec() = default;

  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;

  // Number of tokens encode(text) would produce.  Default delegates to
  // encode; implementations may count without materializing ids.
  virtual std::int64_t count(std::string_view text) const {
    return static_cast<std::int64_t>(encode(text).size());
  }

  virtual std::size_t vocab_size() const = 0;

  // Dedicated id for a registered control tag, or -1 if absent.
  virtual TokenId special_id(std::string_view tag) const = 0;
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

// Whitespace/word-level codec with interned words and fixed special-token
// ids.  Safe for concurrent use; the word table is grown under a mutex.
class WordCodec final : public TokenCodec {
 public:
  explicit WordCodec(std::vector<std::string> extra_specials = {}) {
    for (std::string_view tag : tags::all) add_special(std::string(tag));
    for (auto& tag : extra_specials) add_special(std::move(tag));
    n_specials_ = table_.size();
  }

  std::vector<TokenId> encode(std::string_view text) const override {
    std::vector<TokenId> out;
    out.reserve(text.size() / 4 + 1);
    std::lock_guard<std::mutex> lock(mu_);
    scan(text, [&](std::string_view piece, TokenId special) {
      if (special >= 0) {
        out.push_back(special);
      } else {
        out.push_back(intern_locked(piece));
      }
    });
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::lock_guard<std::mutex> lock(mu_);
    std::string out;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const TokenId id = ids[k];
      if (id < 0 || static_cast<std::size_t>(id) >= table_.size()) {
        throw CodecError("decode: unknown token id " + std::to_string(id) +
                         " at index " + std::to_string(k));
      }
      out += table_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  std::int64_t count(std::string_view text) const override {
    std::int64_t n = 0;
    scan(text, [&](std::string_view, TokenId) { ++n; });
    return n;
  }

  std::size_t vocab_size() const override {
    std::lock_guard<std::mutex> lock(mu_);
    return table_.size();
  }

  TokenId special_id(std::string_view tag) const override {
    for (std::size_t i = 0; i < n_specials_; ++i) {
      if (table_[i] == tag) return static_cast<TokenId>(i);
    }
    return -1;
  }

 private:
  void add_special(std::string tag) {
    if (tag.empty()) throw CodecError("empty special token");
    index_.emplace(tag, static_cast<TokenId>(table_.size()));
    table_.push_back(std::move(tag));
  }

  // Matches a registered special token starting at text[pos], longest first.
  TokenId special_at(std::string_view text, std::size_t pos) const {
    if (text[pos] != '<') return -1;  // all registered tags start with '<'
    TokenId best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < n_specials_; ++i) {
      const std::string& tag = table_[i];
      if (tag.size() > best_len && text.compare(pos, tag.size(), tag) == 0) {
        best = static_cast<TokenId>(i);
        best_len = tag.size();
      }
    }
    return best;
  }

  // Tokenization walk shared by encode() and count().  Emits either a
  // special id or a (leading whitespace + word) piece.
  template <typename Fn>
  void scan(std::string_view text, Fn&& emit) const {
    std::size_t pos = 0;
    const std::size_t n = text.size();
    while (pos < n) {
      if (TokenId sp = special_at(text, pos); sp >= 0) {
        emit(std::string_view{}, sp);
        pos += table_[static_cast<std::size_t>(sp)].size();
        continue;
      }
      const std::size_t start = pos;
      while (pos < n && detail::is_space(text[pos]) &&
             special_at(text, pos) < 0) {
        ++pos;
      }
      // A special token right after whitespace ends the piece (whitespace-
      // only token); otherwise consume the word.
      if (pos < n && special_at(text, pos) < 0) {
        while (pos < n && !detail::is_space(text[pos]) &&
               special_at(text, pos) < 0) {
          ++pos;
        }
      }
      emit(text.substr(start, pos - start), -1);
    }
  }

  TokenId intern_locked(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    if (it != index_.end()) return it->second;
    const TokenId id = static_cast<TokenId>(table_.size());
    table_.emplace_back(piece);
    index_.emplace(table_.back(), id);
    return id;
  }

  mutable std::mutex mu_;
  mutable std::vector<std::string> table_;  // id -> text, specials first
  mutable std::unordered_map<std::string, TokenId> index_;
  std::size_t n_specials_ = 0;
};

// Greedy longest-match codec over an external vocabulary file.  The file
// holds one token per line (UTF-8); the line index is the token id.  Every
// control tag must be present as its own entry, and a control tag always
// wins at its position even if a longer non-tag entry would match, so tag
// dedication holds for any vocabulary.
class VocabFileCodec final : public TokenCodec {
 public:
  static VocabFileCodec from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CodecError("cannot open vocabulary file: " + path);
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      entries.push_back(line);
    }
    return VocabFileCodec(std::move(entries));
  }

  explicit VocabFileCodec(std::vector<std::string> entries)
      : table_(std::move(entries)) {
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const std::string& tok = table_[i];
      if (tok.empty()) continue;  // blank lines hold their id but never match
      // First writer wins on duplicate entries; later ids are decode-only.
      index_.emplace(tok, static_cast<TokenId>(i));
      max_len_ = std::max(max_len_, tok.size());
    }
    for (std::string_view tag : tags::all) {
      auto it = index_.find(std::string(tag));
      if (it == index_.end()) {
        throw CodecError("vocabulary is missing control tag entry: " +
                         std::string(tag));
      }
      tag_ids_.emplace(std::string(tag), it->second);
    }
  }

  std::vector<TokenId> encode(std::string_view text) const override {
    std::vector<TokenId> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      // Control tags take priority at their position.
      TokenId id = -1;
      std::size_t len = 0;
      if (text[pos] == '<') {
        for (const auto& [tag, tid] : tag_ids_) {
          if (tag.size() > len && text.compare(pos, tag.size(), tag) == 0) {
            id = tid;
            len = tag.size();
          }
        }
      }
      if (id < 0) {
        const std::size_t cap = std::min(max_len_, text.size() - pos);
        for (std::size_t l = cap; l >= 1; --l) {
          auto it = index_.find(std::string(text.substr(pos, l)));
          if (it != index_.end()) {
            id = it->second;
            len = l;
            break;
          }
        }
      }
      if (id < 0) {
        throw CodecError("unencodable input at byte offset " +
                         std::to_string(pos));
      }
      out.push_back(id);
      pos += len;
    }
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string out;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const TokenId id = ids[k];
      if (id < 0 || static_cast<std::size_t>(id) >= table_.size()) {
        throw CodecError("decode: unknown token id " + std::to_string(id) +
                         " at index " + std::to_string(k));
      }
      out += table_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  std::size_t vocab_size() const override { return table_.size(); }

  TokenId special_id(std::string_view tag) const override {
    auto it = tag_ids_.find(std::string(tag));
    return it == tag_ids_.end() ? -1 : it->second;
  }

 private:
  std::vector<std::string> table_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::string, TokenId> tag_ids_;
  std::size_t max_len_ = 0;
};

}  // namespace apr
