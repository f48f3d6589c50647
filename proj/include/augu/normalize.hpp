#pragma once

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "augu/errors.hpp"

namespace augu {

namespace detail {

inline std::u32string to_u32(std::string_view s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  std::u32string out(static_cast<std::size_t>(u.countChar32()), U'\0');
  UErrorCode err = U_ZERO_ERROR;
  u.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), err);
  return out;
}

/// True when a and b are at Levenshtein distance exactly one.
inline bool one_edit_apart(const std::u32string& a, const std::u32string& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == m) {
    std::size_t diff = 0;
    for (std::size_t i = 0; i < n && diff < 2; ++i) diff += a[i] != b[i];
    return diff == 1;
  }
  if (n + 1 != m && m + 1 != n) return false;
  const auto& s = n < m ? a : b;  // shorter
  const auto& l = n < m ? b : a;
  std::size_t i = 0;
  while (i < s.size() && s[i] == l[i]) ++i;
  return std::equal(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(), l.begin() + static_cast<std::ptrdiff_t>(i) + 1);
}

}  // namespace detail

struct NormalizerOptions {
  /// Words shorter than this (in code points) are never spell-folded.
  std::size_t min_fold_length = 4;
};

// Canonical query form used as the cache key: NFKC with case folding,
// whitespace collapsed to single spaces, then each out-of-dictionary word
// replaced by the first dictionary word one edit away (dictionary order is
// priority order). The result is a fixed point of normalize().
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::vector<std::string> dictionary, NormalizerOptions opt = {}) : opt_(opt) {
    for (auto& w : dictionary) {
      auto folded = fold_text(w);
      if (folded.empty() || folded.find(' ') != std::string::npos || known_.contains(folded)) continue;
      known_.insert(folded);
      auto u = detail::to_u32(folded);
      by_len_[u.size()].push_back(dict_.size());
      dict_.push_back({std::move(folded), std::move(u)});
    }
  }

  std::size_t dictionary_size() const { return dict_.size(); }

  std::string operator()(std::string_view query) const { return normalize(query); }

  std::string normalize(std::string_view query) const {
    const std::string folded = fold_text(query);
    if (folded.empty()) throw ContractError("empty query after normalization");
    std::string out;
    std::size_t i = 0;
    while (i < folded.size()) {
      std::size_t j = folded.find(' ', i);
      if (j == std::string::npos) j = folded.size();
      if (!out.empty()) out += ' ';
      out += spell_fold(folded.substr(i, j - i));
      i = j + 1;
    }
    return out;
  }

  /// Unicode fold and whitespace collapse without dictionary correction.
  static std::string fold_text(std::string_view s) {
    // Dropping whitespace can bring combining marks next to new bases, so
    // repeat until the pass is a fixed point.
    std::string cur = fold_once(s);
    for (int i = 0; i < 8; ++i) {
      std::string next = fold_once(cur);
      if (next == cur) break;
      cur = std::move(next);
    }
    return cur;
  }

 private:
  static std::string fold_once(std::string_view s) {
    UErrorCode err = U_ZERO_ERROR;
    const icu::Normalizer2* nfkc_cf = icu::Normalizer2::getNFKCCasefoldInstance(err);
    if (U_FAILURE(err)) throw ContractError("ICU NFKC_Casefold unavailable");
    icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    icu::UnicodeString norm = nfkc_cf->normalize(in, err);
    if (U_FAILURE(err)) throw ContractError("normalization failed");
    std::string utf8;
    norm.toUTF8String(utf8);
    // Collapse runs of whitespace (NFKC already maps exotic spaces to U+0020
    // where a compatibility mapping exists; remaining ones are caught here).
    std::string out;
    bool pending_space = false;
    for (std::size_t i = 0; i < utf8.size();) {
      UChar32 c;
      int32_t off = static_cast<int32_t>(i);
      U8_NEXT(utf8.data(), off, static_cast<int32_t>(utf8.size()), c);
      const std::size_t next = static_cast<std::size_t>(off);
      if (c < 0 || u_isUWhiteSpace(c) || u_iscntrl(c)) {
        pending_space = !out.empty();
      } else {
        if (pending_space) out += ' ';
        pending_space = false;
        out.append(utf8, i, next - i);
      }
      i = next;
    }
    return out;
  }

  struct Entry {
    std::string word;
    std::u32string chars;
  };

  std::string spell_fold(const std::string& word) const {
    if (dict_.empty() || known_.contains(word)) return word;
    const auto u = detail::to_u32(word);
    if (u.size() < opt_.min_fold_length) return word;
    std::size_t best = dict_.size();
    for (std::size_t len : {u.size() - 1, u.size(), u.size() + 1}) {
      auto it = by_len_.find(len);
      if (it == by_len_.end()) continue;
      for (std::size_t idx : it->second) {
        if (idx >= best) break;
        if (detail::one_edit_apart(u, dict_[idx].chars)) {
          best = idx;
          break;
        }
      }
    }
    return best < dict_.size() ? dict_[best].word : word;
  }

  NormalizerOptions opt_;
  std::vector<Entry> dict_;
  std::unordered_set<std::string> known_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> by_len_;
};

}  // namespace augu
