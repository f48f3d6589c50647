#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "augu/errors.hpp"
#include "augu/ops.hpp"
#include "augu/segment.hpp"

namespace augu {

/// Decoder-slot targets for a keyword: its tokens then EOS, left-aligned over
/// `slots` positions, with -1 (ignored) after EOS. Keywords that do not fit
/// are truncated to slots-1 tokens before the EOS.
inline std::vector<std::int32_t> align_keyword(std::span<const std::int32_t> keyword, std::size_t slots) {
  if (keyword.empty()) throw ContractError("keyword must have at least one token");
  if (slots < 2) throw ContractError("need at least two decoder slots to place a keyword and EOS");
  std::vector<std::int32_t> t(slots, -1);
  const std::size_t m = std::min(keyword.size(), slots - 1);
  std::copy_n(keyword.begin(), m, t.begin());
  t[m] = token::eos;
  return t;
}

/// Negative log-likelihood of the keyword (plus EOS) under per-slot logits.
template <class T>
Var<T> nlg_loss(Var<T> logits, std::span<const std::int32_t> keyword) {
  const auto targets = align_keyword(keyword, logits.rows());
  return cross_entropy_gather(logits, std::span<const std::int32_t>(targets));
}

/// InfoNCE over in-batch negatives with cosine similarity, summed over rows:
/// sum_i -log(exp(s_ii) / sum_j exp(s_ij)).
template <class T>
Var<T> contrastive_loss(Var<T> query_embs, Var<T> keyword_embs) {
  if (query_embs.rows() != keyword_embs.rows()) {
    throw DimensionError("contrastive_loss batch sizes differ: " + shape_str(query_embs.shape()) +
                         " vs " + shape_str(keyword_embs.shape()));
  }
  auto sims = cosine(query_embs, keyword_embs);
  std::vector<std::int32_t> diag(query_embs.rows());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<std::int32_t>(i);
  return cross_entropy_gather(sims, std::span<const std::int32_t>(diag));
}

}  // namespace augu
