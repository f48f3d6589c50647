#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <string_view>
#include <vector>

#include "augu/errors.hpp"
#include "augu/rng.hpp"
#include "augu/segment.hpp"

namespace augu {

struct GlanceRates {
  double d_rand = 0, d_web = 0, d_qp = 0, d_all = 0;

  double total() const { return d_rand + d_web + d_qp + d_all; }
  bool operator==(const GlanceRates&) const = default;
};

// Context-dropping curriculum: no dropping until warmup_epochs, then each
// rate ramps linearly to its maximum at total_epochs.
struct GlanceSchedule {
  double warmup_epochs = 3;
  double total_epochs = 10;
  GlanceRates max_rates{0.1, 0.1, 0.1, 0.1};

  void validate() const {
    if (!(warmup_epochs < total_epochs)) throw ConfigError("glance schedule: warmup_epochs must be < total_epochs");
    for (double r : {max_rates.d_rand, max_rates.d_web, max_rates.d_qp, max_rates.d_all}) {
      if (r < 0 || r > 1) throw ConfigError("glance schedule: rates must lie in [0, 1]");
    }
    if (max_rates.total() > 1 + 1e-12) throw ConfigError("glance schedule: rates sum above 1");
  }
};

inline GlanceRates glance_rates(const GlanceSchedule& s, double epoch) {
  const double f = std::clamp((epoch - s.warmup_epochs) / (s.total_epochs - s.warmup_epochs), 0.0, 1.0);
  return {s.max_rates.d_rand * f, s.max_rates.d_web * f, s.max_rates.d_qp * f, s.max_rates.d_all * f};
}

enum class GlanceCategory { none, rand, web, qp, all };

inline constexpr std::array<std::string_view, 5> kGlanceCategoryNames = {"none", "rand", "web", "qp", "all"};

/// One categorical draw over {rand, web, qp, all, none}.
inline GlanceCategory draw_glance_category(const GlanceRates& r, Rng& rng) {
  const double u = rng.uniform();
  double acc = r.d_rand;
  if (u < acc) return GlanceCategory::rand;
  if (u < (acc += r.d_web)) return GlanceCategory::web;
  if (u < (acc += r.d_qp)) return GlanceCategory::qp;
  if (u < (acc += r.d_all)) return GlanceCategory::all;
  return GlanceCategory::none;
}

struct GlanceOutcome {
  ContextBundle bundle;
  GlanceCategory category = GlanceCategory::none;
};

/// Drops contexts from one bundle per a single category draw. The query and
/// the relative order of surviving contexts are preserved.
inline GlanceOutcome apply_glancing(const ContextBundle& in, const GlanceRates& rates, Rng& rng) {
  GlanceOutcome out{in, draw_glance_category(rates, rng)};
  auto& ctx = out.bundle.contexts;
  switch (out.category) {
    case GlanceCategory::none:
      break;
    case GlanceCategory::all:
      ctx.clear();
      break;
    case GlanceCategory::web:
      std::erase_if(ctx, [](const TokenSegment& s) { return is_web(s.kind); });
      break;
    case GlanceCategory::qp:
      std::erase_if(ctx, [](const TokenSegment& s) { return is_query_profile(s.kind); });
      break;
    case GlanceCategory::rand: {
      const std::size_t n = ctx.size();
      if (n == 0) break;
      const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n)));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      // partial Fisher-Yates: first k entries are the dropped set
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(idx[i], idx[j]);
      }
      std::vector<bool> drop(n, false);
      for (std::size_t i = 0; i < k; ++i) drop[idx[i]] = true;
      std::vector<TokenSegment> kept;
      for (std::size_t i = 0; i < n; ++i)
        if (!drop[i]) kept.push_back(std::move(ctx[i]));
      ctx = std::move(kept);
      break;
    }
  }
  return out;
}

}  // namespace augu
