#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "augu/errors.hpp"
#include "augu/graph.hpp"
#include "augu/tensor.hpp"

namespace augu {

namespace detail {

template <class T>
void check_same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
}

inline std::string dims(const Shape& a, const Shape& b) {
  return shape_str(a) + " and " + shape_str(b);
}

}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::check_same_graph(a, b);
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) throw DimensionError("matmul inner dimensions differ: " + detail::dims(av.shape(), bv.shape()));
  BasicTensor<T> out = BasicTensor<T>::matrix(m, n);
  kernels::gemm_nn(m, n, k, av.data().data(), bv.data().data(), out.data().data());
  g.add_flops(2ULL * m * n * k);
  return g.push(OpKind::matmul, {a.id, b.id}, std::move(out), g.any_requires_grad({a, b}),
                [m, n, k](Graph<T>& g, std::size_t self) {
                  const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
                  const auto& dc = g.grad_of(self);
                  if (g.needs_grad(ia)) {
                    kernels::gemm_nt(m, k, n, dc.data().data(), g.value(ib).data().data(),
                                     g.grad_buffer(ia).data().data());
                  }
                  if (g.needs_grad(ib)) {
                    kernels::gemm_tn(m, n, k, g.value(ia).data().data(), dc.data().data(),
                                     g.grad_buffer(ib).data().data());
                  }
                });
}

/// Elementwise sum. `b` may also be a single row broadcast over a's rows.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_graph(a, b);
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool broadcast = av.size() != bv.size();
  if (broadcast && !(bv.rows() == 1 && bv.cols() == av.cols())) {
    throw DimensionError("add shape mismatch: " + detail::dims(av.shape(), bv.shape()));
  }
  if (!broadcast && av.shape() != bv.shape() && !(av.rows() == bv.rows() && av.cols() == bv.cols())) {
    throw DimensionError("add shape mismatch: " + detail::dims(av.shape(), bv.shape()));
  }
  BasicTensor<T> out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[broadcast ? i % c : i];
  return g.push(OpKind::add, {a.id, b.id}, std::move(out), g.any_requires_grad({a, b}),
                [broadcast, c](Graph<T>& g, std::size_t self) {
                  const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
                  const auto& dy = g.grad_of(self);
                  if (g.needs_grad(ia)) g.accumulate(ia, dy);
                  if (g.needs_grad(ib)) {
                    if (!broadcast) {
                      g.accumulate(ib, dy);
                    } else {
                      auto& gb = g.grad_buffer(ib);
                      for (std::size_t i = 0; i < dy.size(); ++i) gb[i % c] += dy[i];
                    }
                  }
                });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_graph(a, b);
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.size() != bv.size() || av.cols() != bv.cols()) {
    throw DimensionError("mul shape mismatch: " + detail::dims(av.shape(), bv.shape()));
  }
  BasicTensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.push(OpKind::mul, {a.id, b.id}, std::move(out), g.any_requires_grad({a, b}),
                [](Graph<T>& g, std::size_t self) {
                  const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
                  const auto& dy = g.grad_of(self);
                  if (g.needs_grad(ia)) {
                    auto& ga = g.grad_buffer(ia);
                    const auto& bv = g.value(ib);
                    for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * bv[i];
                  }
                  if (g.needs_grad(ib)) {
                    auto& gb = g.grad_buffer(ib);
                    const auto& av = g.value(ia);
                    for (std::size_t i = 0; i < dy.size(); ++i) gb[i] += dy[i] * av[i];
                  }
                });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Graph<T>& g = *a.graph;
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return g.push(OpKind::scale, {a.id}, std::move(out), g.any_requires_grad({a}),
                [s](Graph<T>& g, std::size_t self) {
                  const auto ia = g.inputs(self)[0];
                  const auto& dy = g.grad_of(self);
                  auto& ga = g.grad_buffer(ia);
                  for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * s;
                });
}

template <class T>
Var<T> sum(Var<T> a) {
  Graph<T>& g = *a.graph;
  T s{0};
  for (T v : a.value().data()) s += v;
  return g.push(OpKind::sum, {a.id}, BasicTensor<T>::scalar(s), g.any_requires_grad({a}),
                [](Graph<T>& g, std::size_t self) {
                  const auto ia = g.inputs(self)[0];
                  const T dy = g.grad_of(self)[0];
                  for (auto& v : g.grad_buffer(ia).data()) v += dy;
                });
}

namespace detail {

// Row softmax with max subtraction; -inf entries get probability 0.
template <class T>
void softmax_row(std::span<const T> x, std::span<T> y) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) throw NumericError("softmax row has no finite entry");
  T z{0};
  for (std::size_t j = 0; j < x.size(); ++j) {
    y[j] = std::exp(x[j] - mx);
    z += y[j];
  }
  const T inv = T{1} / z;
  for (auto& v : y) v *= inv;
}

template <class T>
void check_no_nan(const BasicTensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

}  // namespace detail

template <class T>
Var<T> softmax_rows(Var<T> x) {
  Graph<T>& g = *x.graph;
  const auto& xv = x.value();
  detail::check_no_nan(xv, "softmax_rows");
  BasicTensor<T> out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) detail::softmax_row(xv.row(r), out.row(r));
  return g.push(OpKind::softmax, {x.id}, std::move(out), g.any_requires_grad({x}),
                [](Graph<T>& g, std::size_t self) {
                  const auto ix = g.inputs(self)[0];
                  const auto& y = g.value(self);
                  const auto& dy = g.grad_of(self);
                  auto& gx = g.grad_buffer(ix);
                  for (std::size_t r = 0; r < y.rows(); ++r) {
                    auto yr = y.row(r);
                    auto dyr = dy.row(r);
                    T dot{0};
                    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * dyr[j];
                    auto gr = gx.row(r);
                    for (std::size_t j = 0; j < yr.size(); ++j) gr[j] += yr[j] * (dyr[j] - dot);
                  }
                });
}

template <class T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  Graph<T>& g = *x.graph;
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) {
    throw DimensionError("layernorm affine size mismatch: " +
                         detail::dims(xv.shape(), gamma.value().shape()));
  }
  auto xhat = std::make_shared<BasicTensor<T>>(xv.shape());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  BasicTensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = xv.row(r);
    T mean{0};
    for (T v : xr) mean += v;
    mean /= static_cast<T>(cols);
    T var{0};
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(cols);
    const T rs = T{1} / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    auto hr = xhat->row(r);
    auto orow = out.row(r);
    for (std::size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - mean) * rs;
      orow[j] = hr[j] * gv[j] + bv[j];
    }
  }
  const bool rg = g.any_requires_grad({x, gamma, beta});
  if (!rg) xhat.reset();
  return g.push(OpKind::layernorm, {x.id, gamma.id, beta.id}, std::move(out), rg,
                [xhat, rstd, rows, cols](Graph<T>& g, std::size_t self) {
                  const auto ix = g.inputs(self)[0], ig = g.inputs(self)[1], ib = g.inputs(self)[2];
                  const auto& dy = g.grad_of(self);
                  const auto& gv = g.value(ig);
                  if (g.needs_grad(ig) || g.needs_grad(ib)) {
                    auto* gg = g.needs_grad(ig) ? &g.grad_buffer(ig) : nullptr;
                    auto* gb = g.needs_grad(ib) ? &g.grad_buffer(ib) : nullptr;
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < cols; ++j) {
                        const T d = dy(r, j);
                        if (gg) (*gg)[j] += d * (*xhat)(r, j);
                        if (gb) (*gb)[j] += d;
                      }
                    }
                  }
                  if (g.needs_grad(ix)) {
                    auto& gx = g.grad_buffer(ix);
                    for (std::size_t r = 0; r < rows; ++r) {
                      T m1{0}, m2{0};
                      for (std::size_t j = 0; j < cols; ++j) {
                        const T dh = dy(r, j) * gv[j];
                        m1 += dh;
                        m2 += dh * (*xhat)(r, j);
                      }
                      m1 /= static_cast<T>(cols);
                      m2 /= static_cast<T>(cols);
                      for (std::size_t j = 0; j < cols; ++j) {
                        const T dh = dy(r, j) * gv[j];
                        gx(r, j) += (*rstd)[r] * (dh - m1 - (*xhat)(r, j) * m2);
                      }
                    }
                  }
                });
}

/// tanh-approximated GELU.
template <class T>
Var<T> gelu(Var<T> x) {
  Graph<T>& g = *x.graph;
  constexpr T c = T(0.7978845608028654);
  constexpr T a = T(0.044715);
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) {
    const T t = std::tanh(c * (v + a * v * v * v));
    v = T(0.5) * v * (T{1} + t);
  }
  return g.push(OpKind::gelu, {x.id}, std::move(out), g.any_requires_grad({x}),
                [](Graph<T>& g, std::size_t self) {
                  const auto ix = g.inputs(self)[0];
                  const auto& xv = g.value(ix);
                  const auto& dy = g.grad_of(self);
                  auto& gx = g.grad_buffer(ix);
                  for (std::size_t i = 0; i < xv.size(); ++i) {
                    const T v = xv[i];
                    const T t = std::tanh(c * (v + a * v * v * v));
                    const T d = T(0.5) * (T{1} + t) +
                                T(0.5) * v * (T{1} - t * t) * c * (T{1} + T(3) * a * v * v);
                    gx[i] += dy[i] * d;
                  }
                });
}

/// Gathers rows of `table` by token id.
template <class T>
Var<T> embed(Var<T> table, std::span<const std::int32_t> ids) {
  Graph<T>& g = *table.graph;
  const auto& tv = table.value();
  const std::size_t d = tv.cols();
  BasicTensor<T> out = BasicTensor<T>::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw VocabularyError("token id " + std::to_string(ids[i]) + " outside table of " +
                            std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.row(ids[i]).begin(), d, out.row(i).begin());
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return g.push(OpKind::embed, {table.id}, std::move(out), g.any_requires_grad({table}),
                [saved = std::move(saved), d](Graph<T>& g, std::size_t self) {
                  const auto it = g.inputs(self)[0];
                  const auto& dy = g.grad_of(self);
                  auto& gt = g.grad_buffer(it);
                  for (std::size_t i = 0; i < saved.size(); ++i) {
                    auto src = dy.row(i);
                    auto dst = gt.row(saved[i]);
                    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                  }
                });
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows of an empty list");
  Graph<T>& g = *parts[0].graph;
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  bool rg = false;
  for (const auto& p : parts) {
    detail::check_same_graph(parts[0], p);
    if (p.cols() != c) {
      throw DimensionError("concat_rows width mismatch: " +
                           detail::dims(parts[0].shape(), p.shape()));
    }
    total += p.rows();
    ids.push_back(p.id);
    rg = rg || g.any_requires_grad({p});
  }
  BasicTensor<T> out = BasicTensor<T>::matrix(total, c);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + off * c);
    off += pv.rows();
  }
  return g.push(OpKind::concat_rows, std::move(ids), std::move(out), rg,
                [c](Graph<T>& g, std::size_t self) {
                  const auto& dy = g.grad_of(self);
                  std::size_t off = 0;
                  for (auto in : g.inputs(self)) {
                    const std::size_t n = g.value(in).size();
                    if (g.needs_grad(in)) {
                      auto& gi = g.grad_buffer(in);
                      for (std::size_t j = 0; j < n; ++j) gi[j] += dy[off + j];
                    }
                    off += n;
                  }
                  (void)c;
                });
}

template <class T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_rows(std::span<const Var<T>>(v));
}

/// Rows [begin, end).
template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  Graph<T>& g = *x.graph;
  const auto& xv = x.value();
  if (begin > end || end > xv.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_str(xv.shape()));
  }
  const std::size_t c = xv.cols();
  BasicTensor<T> out = BasicTensor<T>::matrix(end - begin, c);
  std::copy(xv.data().begin() + begin * c, xv.data().begin() + end * c, out.data().begin());
  return g.push(OpKind::slice_rows, {x.id}, std::move(out), g.any_requires_grad({x}),
                [begin, c](Graph<T>& g, std::size_t self) {
                  const auto ix = g.inputs(self)[0];
                  const auto& dy = g.grad_of(self);
                  auto& gx = g.grad_buffer(ix);
                  for (std::size_t j = 0; j < dy.size(); ++j) gx[begin * c + j] += dy[j];
                });
}

template <class T>
Var<T> transpose(Var<T> x) {
  Graph<T>& g = *x.graph;
  const auto& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  BasicTensor<T> out = BasicTensor<T>::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = xv(i, j);
  return g.push(OpKind::transpose, {x.id}, std::move(out), g.any_requires_grad({x}),
                [r, c](Graph<T>& g, std::size_t self) {
                  const auto ix = g.inputs(self)[0];
                  const auto& dy = g.grad_of(self);
                  auto& gx = g.grad_buffer(ix);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gx(i, j) += dy(j, i);
                });
}

/// Sum over rows of -log softmax(logits[r])[targets[r]]. A negative target
/// marks a row excluded from the loss.
template <class T>
Var<T> cross_entropy_gather(Var<T> logits, std::span<const std::int32_t> targets) {
  Graph<T>& g = *logits.graph;
  const auto& lv = logits.value();
  if (targets.size() != lv.rows()) {
    throw DimensionError("cross_entropy_gather: " + std::to_string(targets.size()) +
                         " targets for " + shape_str(lv.shape()));
  }
  detail::check_no_nan(lv, "cross_entropy_gather");
  auto probs = std::make_shared<BasicTensor<T>>(lv.shape());
  T loss{0};
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= lv.cols()) {
      throw VocabularyError("target " + std::to_string(targets[r]) + " outside " +
                            std::to_string(lv.cols()) + " classes");
    }
    auto row = lv.row(r);
    T mx = *std::max_element(row.begin(), row.end());
    T z{0};
    for (T v : row) z += std::exp(v - mx);
    const T lse = mx + std::log(z);
    loss += lse - row[targets[r]];
    auto pr = probs->row(r);
    for (std::size_t j = 0; j < row.size(); ++j) pr[j] = std::exp(row[j] - lse);
  }
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return g.push(OpKind::cross_entropy_gather, {logits.id}, BasicTensor<T>::scalar(loss),
                g.any_requires_grad({logits}),
                [probs, saved = std::move(saved)](Graph<T>& g, std::size_t self) {
                  const auto il = g.inputs(self)[0];
                  const T dy = g.grad_of(self)[0];
                  auto& gl = g.grad_buffer(il);
                  for (std::size_t r = 0; r < saved.size(); ++r) {
                    if (saved[r] < 0) continue;
                    auto pr = probs->row(r);
                    auto gr = gl.row(r);
                    for (std::size_t j = 0; j < pr.size(); ++j) gr[j] += dy * pr[j];
                    gr[saved[r]] -= dy;
                  }
                });
}

/// Pairwise cosine similarity: out[i][j] = cos(a_i, b_j). Norms are clamped
/// at 1e-8; an exactly zero row is rejected.
template <class T>
Var<T> cosine(Var<T> a, Var<T> b) {
  detail::check_same_graph(a, b);
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) throw DimensionError("cosine width mismatch: " + detail::dims(av.shape(), bv.shape()));
  const std::size_t m = av.rows(), n = bv.rows(), d = av.cols();
  auto norms = [d](const BasicTensor<T>& t) {
    auto out = std::make_shared<std::vector<T>>(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) {
      T s{0};
      for (T v : t.row(i)) s += v * v;
      if (s == T{0}) throw NumericError("cosine of a zero-norm embedding");
      (*out)[i] = std::max(std::sqrt(s), T(1e-8));
    }
    (void)d;
    return out;
  };
  auto na = norms(av);
  auto nb = norms(bv);
  BasicTensor<T> out = BasicTensor<T>::matrix(m, n);
  kernels::gemm_nt(m, n, d, av.data().data(), bv.data().data(), out.data().data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= (*na)[i] * (*nb)[j];
  g.add_flops(2ULL * m * n * d);
  return g.push(OpKind::cosine, {a.id, b.id}, std::move(out), g.any_requires_grad({a, b}),
                [na, nb, m, n, d](Graph<T>& g, std::size_t self) {
                  const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
                  const auto& av = g.value(ia);
                  const auto& bv = g.value(ib);
                  const auto& s = g.value(self);
                  const auto& dy = g.grad_of(self);
                  // d cos / d a_i = b_j/(|a||b|) - cos * a_i/|a|^2
                  if (g.needs_grad(ia)) {
                    auto& ga = g.grad_buffer(ia);
                    for (std::size_t i = 0; i < m; ++i) {
                      auto gr = ga.row(i);
                      auto ar = av.row(i);
                      T coef_a{0};
                      for (std::size_t j = 0; j < n; ++j) {
                        const T w = dy(i, j) / ((*na)[i] * (*nb)[j]);
                        auto br = bv.row(j);
                        for (std::size_t p = 0; p < d; ++p) gr[p] += w * br[p];
                        coef_a += dy(i, j) * s(i, j);
                      }
                      const T inv2 = T{1} / ((*na)[i] * (*na)[i]);
                      for (std::size_t p = 0; p < d; ++p) gr[p] -= coef_a * ar[p] * inv2;
                    }
                  }
                  if (g.needs_grad(ib)) {
                    auto& gb = g.grad_buffer(ib);
                    for (std::size_t j = 0; j < n; ++j) {
                      auto gr = gb.row(j);
                      auto br = bv.row(j);
                      T coef_b{0};
                      for (std::size_t i = 0; i < m; ++i) {
                        const T w = dy(i, j) / ((*na)[i] * (*nb)[j]);
                        auto ar = av.row(i);
                        for (std::size_t p = 0; p < d; ++p) gr[p] += w * ar[p];
                        coef_b += dy(i, j) * s(i, j);
                      }
                      const T inv2 = T{1} / ((*nb)[j] * (*nb)[j]);
                      for (std::size_t p = 0; p < d; ++p) gr[p] -= coef_b * br[p] * inv2;
                    }
                  }
                });
}

struct AttentionOptions {
  std::size_t heads = 1;
  /// Empty, one flag per key row, or a full queries x keys matrix. Nonzero
  /// entries are excluded from the softmax.
  std::vector<std::uint8_t> mask;
  bool causal = false;
};

/// Multi-head scaled dot-product attention over pre-projected q/k/v. Each
/// head uses a contiguous column block; scores are scaled by 1/sqrt(head_dim).
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionOptions& opt = {}) {
  detail::check_same_graph(q, k);
  detail::check_same_graph(q, v);
  Graph<T>& g = *q.graph;
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t m = qv.rows(), n = kv.rows(), dk = qv.cols(), dv = vv.cols(), h = opt.heads;
  if (kv.cols() != dk) throw DimensionError("attention query/key width mismatch: " + detail::dims(qv.shape(), kv.shape()));
  if (vv.rows() != n) throw DimensionError("attention key/value row mismatch: " + detail::dims(kv.shape(), vv.shape()));
  if (h == 0 || dk % h != 0 || dv % h != 0) {
    throw DimensionError("attention head count " + std::to_string(h) + " does not divide widths " +
                         std::to_string(dk) + "/" + std::to_string(dv));
  }
  const bool per_key = opt.mask.size() == n;
  const bool full = !per_key && opt.mask.size() == m * n;
  if (!opt.mask.empty() && !per_key && !full) {
    throw DimensionError("attention mask of size " + std::to_string(opt.mask.size()) +
                         " fits neither " + std::to_string(n) + " keys nor " +
                         std::to_string(m) + "x" + std::to_string(n));
  }
  auto masked = [&](std::size_t i, std::size_t j) {
    if (opt.causal && j > i) return true;
    if (per_key) return opt.mask[j] != 0;
    if (full) return opt.mask[i * n + j] != 0;
    return false;
  };
  const std::size_t hk = dk / h, hv = dv / h;
  const T sc = T{1} / std::sqrt(static_cast<T>(hk));
  // probs laid out [head][query][key]
  auto probs = std::make_shared<std::vector<T>>(h * m * n);
  BasicTensor<T> out = BasicTensor<T>::matrix(m, dv);
  std::vector<T> scores(n);
  for (std::size_t hh = 0; hh < h; ++hh) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* qi = &qv(i, hh * hk);
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (masked(i, j)) {
          scores[j] = -std::numeric_limits<T>::infinity();
          continue;
        }
        any = true;
        const T* kj = &kv(j, hh * hk);
        T s{0};
        for (std::size_t p = 0; p < hk; ++p) s += qi[p] * kj[p];
        scores[j] = s * sc;
      }
      if (!any) throw NumericError("attention row " + std::to_string(i) + " is fully masked");
      for (T s : scores) {
        if (std::isnan(s)) throw NumericError("attention: NaN score");
      }
      std::span<T> pr(probs->data() + (hh * m + i) * n, n);
      detail::softmax_row<T>(scores, pr);
      T* oi = &out(i, hh * hv);
      for (std::size_t j = 0; j < n; ++j) {
        const T pj = pr[j];
        if (pj == T{0}) continue;
        const T* vj = &vv(j, hh * hv);
        for (std::size_t p = 0; p < hv; ++p) oi[p] += pj * vj[p];
      }
    }
  }
  g.add_flops(2ULL * m * n * (dk + dv));
  return g.push(
      OpKind::attention, {q.id, k.id, v.id}, std::move(out), g.any_requires_grad({q, k, v}),
      [probs, m, n, h, hk, hv, sc](Graph<T>& g, std::size_t self) {
        const auto iq = g.inputs(self)[0], ik = g.inputs(self)[1], iv = g.inputs(self)[2];
        const auto& qv = g.value(iq);
        const auto& kv = g.value(ik);
        const auto& vv = g.value(iv);
        const auto& dout = g.grad_of(self);
        auto* gq = g.needs_grad(iq) ? &g.grad_buffer(iq) : nullptr;
        auto* gk = g.needs_grad(ik) ? &g.grad_buffer(ik) : nullptr;
        auto* gv = g.needs_grad(iv) ? &g.grad_buffer(iv) : nullptr;
        std::vector<T> dp(n);
        for (std::size_t hh = 0; hh < h; ++hh) {
          for (std::size_t i = 0; i < m; ++i) {
            const T* pr = probs->data() + (hh * m + i) * n;
            const T* doi = &dout(i, hh * hv);
            T dot{0};
            for (std::size_t j = 0; j < n; ++j) {
              T s{0};
              if (pr[j] != T{0}) {
                const T* vj = &vv(j, hh * hv);
                for (std::size_t p = 0; p < hv; ++p) s += doi[p] * vj[p];
                if (gv) {
                  T* gvj = &(*gv)(j, hh * hv);
                  for (std::size_t p = 0; p < hv; ++p) gvj[p] += pr[j] * doi[p];
                }
              }
              dp[j] = s;
              dot += s * pr[j];
            }
            const T* qi = &qv(i, hh * hk);
            T* gqi = gq ? &(*gq)(i, hh * hk) : nullptr;
            for (std::size_t j = 0; j < n; ++j) {
              if (pr[j] == T{0}) continue;
              const T ds = pr[j] * (dp[j] - dot) * sc;
              const T* kj = &kv(j, hh * hk);
              if (gqi) {
                for (std::size_t p = 0; p < hk; ++p) gqi[p] += ds * kj[p];
              }
              if (gk) {
                T* gkj = &(*gk)(j, hh * hk);
                for (std::size_t p = 0; p < hk; ++p) gkj[p] += ds * qi[p];
              }
            }
          }
        }
      });
}

}  // namespace augu
