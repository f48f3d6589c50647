#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "augu/graph.hpp"

namespace augu {

// Adam with linear warmup then linear decay to zero at total_steps.
struct OptimizerState {
  std::int64_t step = 0;
  double lr_base = 3e-4;
  std::int64_t warmup_steps = 1000;
  std::int64_t total_steps = 10000;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  std::vector<std::vector<float>> m, v;

  double lr_at(std::int64_t s) const {
    if (s <= 0) return 0.0;
    if (s < warmup_steps) return lr_base * static_cast<double>(s) / static_cast<double>(warmup_steps);
    if (s >= total_steps) return 0.0;
    const double span = static_cast<double>(total_steps - warmup_steps);
    return lr_base * static_cast<double>(total_steps - s) / (span > 0 ? span : 1.0);
  }
};

/// Applies one update using the parameters' accumulated gradients; returns
/// the learning rate used.
inline double adam_step(std::vector<Parameter<float>>& params, OptimizerState& st) {
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), {});
    st.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i].value.size(), 0.0f);
      st.v[i].assign(params[i].value.size(), 0.0f);
    }
  }
  ++st.step;
  const double lr = st.lr_at(st.step);
  double scale = 1.0;
  if (st.clip_norm > 0) {
    double sq = 0;
    for (auto& p : params)
      for (float gv : p.grad.data()) sq += double(gv) * gv;
    const double norm = std::sqrt(sq);
    if (norm > st.clip_norm) scale = st.clip_norm / norm;
  }
  const double bc1 = 1 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1 - std::pow(st.beta2, static_cast<double>(st.step));
  const float b1 = static_cast<float>(st.beta1), b2 = static_cast<float>(st.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(st.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.data();
    auto g = params[i].grad.data();
    if (g.size() != w.size()) continue;
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gj = static_cast<float>(g[j] * scale);
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
  return lr;
}

}  // namespace augu
