#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "augu/errors.hpp"
#include "augu/segment.hpp"

namespace augu {

namespace utf8 {

/// Byte length of the code point starting at s[i].
inline std::size_t char_len(std::string_view s, std::size_t i) {
  std::size_t j = i + 1;
  while (j < s.size() && (static_cast<unsigned char>(s[j]) & 0xC0) == 0x80) ++j;
  return j - i;
}

inline std::vector<std::string_view> chars(std::string_view s) {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < s.size();) {
    const std::size_t n = char_len(s, i);
    out.push_back(s.substr(i, n));
    i += n;
  }
  return out;
}

}  // namespace utf8

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Whitespace + lowercase wordpiece tokenizer. Ids below token::first_regular
// are reserved; continuation pieces carry a "##" prefix.
class Tokenizer {
 public:
  Tokenizer() = default;

  /// Builds a vocabulary of exactly `vocab_size` entries or fewer when the
  /// corpus runs out of pieces. Every character seen in the corpus gets a
  /// piece (initial and continuation) so any corpus word is encodable; the
  /// remaining slots go to whole words by descending frequency, ties by byte
  /// order.
  static Tokenizer build(std::span<const std::string> texts, std::size_t vocab_size) {
    std::map<std::string, std::size_t> word_freq;
    std::map<std::string, std::size_t> char_pieces;
    for (const auto& t : texts) {
      for (auto& w : split_words(t)) {
        bool first = true;
        for (auto ch : utf8::chars(w)) {
          char_pieces[(first ? "" : "##") + std::string(ch)] += 1;
          first = false;
        }
        word_freq[w] += 1;
      }
    }
    const std::size_t reserved = static_cast<std::size_t>(token::first_regular);
    if (vocab_size < reserved + char_pieces.size()) {
      throw ConfigError("vocab_size " + std::to_string(vocab_size) + " cannot hold " +
                        std::to_string(char_pieces.size()) + " character pieces plus reserved ids");
    }
    Tokenizer tok;
    tok.add_reserved();
    for (const auto& [p, _] : char_pieces) tok.add(p);
    std::vector<std::pair<std::string, std::size_t>> words(word_freq.begin(), word_freq.end());
    std::stable_sort(words.begin(), words.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, _] : words) {
      if (tok.pieces_.size() >= vocab_size) break;
      if (!tok.index_.contains(w)) tok.add(w);
    }
    return tok;
  }

  static Tokenizer from_pieces(std::vector<std::string> pieces) {
    Tokenizer tok;
    tok.add_reserved();
    if (pieces.size() < tok.pieces_.size()) throw DataError("vocabulary shorter than reserved block");
    for (std::size_t i = 0; i < tok.pieces_.size(); ++i) {
      if (pieces[i] != tok.pieces_[i]) throw DataError("vocabulary reserved block mismatch at id " + std::to_string(i));
    }
    for (std::size_t i = tok.pieces_.size(); i < pieces.size(); ++i) {
      if (pieces[i].empty() || tok.index_.contains(pieces[i])) throw DataError("bad vocabulary entry at id " + std::to_string(i));
      tok.add(pieces[i]);
    }
    return tok;
  }

  std::size_t size() const { return pieces_.size(); }
  const std::string& piece(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) throw VocabularyError("token id " + std::to_string(id));
    return pieces_[static_cast<std::size_t>(id)];
  }
  bool contains_word(const std::string& w) const { return index_.contains(w); }

  /// Whole-word entries in id order (no reserved ids, no continuation pieces).
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    for (std::size_t i = static_cast<std::size_t>(token::first_regular); i < pieces_.size(); ++i) {
      if (!pieces_[i].starts_with("##")) out.push_back(pieces_[i]);
    }
    return out;
  }

  std::vector<std::int32_t> encode(std::string_view text) const {
    std::vector<std::int32_t> out;
    for (const auto& w : split_words(text)) encode_word(w, out);
    return out;
  }

  std::string decode(std::span<const std::int32_t> ids) const {
    std::string out;
    for (auto id : ids) {
      if (id == token::pad) continue;
      if (id == token::eos) break;
      const auto& p = piece(id);
      if (p.starts_with("##")) {
        out += p.substr(2);
      } else {
        if (!out.empty()) out += ' ';
        out += p;
      }
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    for (const auto& p : pieces_) f << p << '\n';
  }

  static Tokenizer load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::vector<std::string> pieces;
    for (std::string line; std::getline(f, line);) pieces.push_back(line);
    return from_pieces(std::move(pieces));
  }

 private:
  void add_reserved() {
    add("[pad]");
    add("[eos]");
    add("[unk]");
    for (auto name : kSegmentKindNames) add("[" + std::string(name) + "]");
  }

  void add(const std::string& p) {
    index_.emplace(p, static_cast<std::int32_t>(pieces_.size()));
    pieces_.push_back(p);
  }

  void encode_word(const std::string& w, std::vector<std::int32_t>& out) const {
    if (auto it = index_.find(w); it != index_.end()) {
      out.push_back(it->second);
      return;
    }
    // Greedy longest-match wordpiece on code point boundaries.
    std::vector<std::size_t> bounds{0};
    for (std::size_t i = 0; i < w.size();) bounds.push_back(i += utf8::char_len(w, i));
    std::vector<std::int32_t> pieces;
    std::size_t start = 0;
    while (start + 1 < bounds.size()) {
      std::int32_t found = -1;
      std::size_t end = bounds.size() - 1;
      for (; end > start; --end) {
        std::string sub = w.substr(bounds[start], bounds[end] - bounds[start]);
        if (start > 0) sub = "##" + sub;
        if (auto it = index_.find(sub); it != index_.end()) {
          found = it->second;
          break;
        }
      }
      if (found < 0) {
        out.push_back(token::unk);
        return;
      }
      pieces.push_back(found);
      start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
  }

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, std::int32_t> index_;
};

}  // namespace augu
