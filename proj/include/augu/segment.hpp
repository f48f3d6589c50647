#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace augu {

enum class SegmentKind : std::uint8_t { query = 0, web_title, web_snippet, qp_rewrite, qp_intent };

inline constexpr std::size_t kNumSegmentKinds = 5;

inline constexpr std::array<std::string_view, kNumSegmentKinds> kSegmentKindNames = {
    "query", "web_title", "web_snippet", "qp_rewrite", "qp_intent"};

constexpr std::string_view to_string(SegmentKind k) {
  return kSegmentKindNames[static_cast<std::size_t>(k)];
}

constexpr bool is_web(SegmentKind k) {
  return k == SegmentKind::web_title || k == SegmentKind::web_snippet;
}
constexpr bool is_query_profile(SegmentKind k) {
  return k == SegmentKind::qp_rewrite || k == SegmentKind::qp_intent;
}

// Reserved token ids shared by the tokenizer and the model.
namespace token {
inline constexpr std::int32_t pad = 0;
inline constexpr std::int32_t eos = 1;
inline constexpr std::int32_t unk = 2;
/// Marker prefixed to a context segment of the given kind.
constexpr std::int32_t marker(SegmentKind k) { return 3 + static_cast<std::int32_t>(k); }
inline constexpr std::int32_t first_regular = 3 + static_cast<std::int32_t>(kNumSegmentKinds);
}  // namespace token

struct TokenSegment {
  SegmentKind kind = SegmentKind::query;
  std::vector<std::int32_t> ids;
  int source_rank = 0;

  bool operator==(const TokenSegment&) const = default;
};

/// A query plus its ordered context segments.
struct ContextBundle {
  TokenSegment query;
  std::vector<TokenSegment> contexts;

  std::size_t n() const { return contexts.size(); }
  bool operator==(const ContextBundle&) const = default;
};

}  // namespace augu

namespace augu {

enum class MatchType : std::uint8_t { exact = 0, phrase, smart };

inline constexpr std::array<std::string_view, 3> kMatchTypeNames = {"exact", "phrase", "smart"};

constexpr std::string_view to_string(MatchType m) { return kMatchTypeNames[static_cast<std::size_t>(m)]; }

}  // namespace augu
