#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "augu/errors.hpp"
#include "augu/rng.hpp"

namespace augu {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major array. Rank 0..2 in practice; a rank-1 tensor is viewed
// as a single row, a rank-0 tensor as 1x1.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static BasicTensor matrix(std::size_t r, std::size_t c, T fill = T{0}) {
    return BasicTensor({r, c}, fill);
  }
  static BasicTensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged row list");
      d.insert(d.end(), row.begin(), row.end());
    }
    return BasicTensor({r, c}, std::move(d));
  }
  static BasicTensor identity(std::size_t n) {
    BasicTensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
    return t;
  }
  static BasicTensor scalar(T v) { return BasicTensor({1, 1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const {
    return shape_.size() >= 2 ? shape_[shape_.size() - 2] : 1;
  }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * cols(), cols());
  }

  T item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor reshaped(Shape s) const { return BasicTensor(std::move(s), data_); }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> d(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(d));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Fills with N(0, stddev^2) draws from rng.
template <class T>
void fill_normal(BasicTensor<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
}

template <class T>
bool all_finite(std::span<const T> xs) {
  return std::all_of(xs.begin(), xs.end(), [](T v) { return std::isfinite(v); });
}

namespace kernels {

inline constexpr std::size_t kTile = 32;

// C[m x n] += A[m x k] * B[k x n]; raw row-major buffers. Columns are processed
// in fixed-width tiles so the accumulator stays in registers across k.
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a,
             const T* __restrict b, T* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    std::size_t j0 = 0;
    for (; j0 + kTile <= n; j0 += kTile) {
      T acc[kTile];
      for (std::size_t j = 0; j < kTile; ++j) acc[j] = ci[j0 + j];
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = ai[p];
        const T* bp = b + p * n + j0;
        for (std::size_t j = 0; j < kTile; ++j) acc[j] += aip * bp[j];
      }
      for (std::size_t j = 0; j < kTile; ++j) ci[j0 + j] = acc[j];
    }
    if (j0 < n) {
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = ai[p];
        const T* bp = b + p * n;
        for (std::size_t j = j0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  }
}

// C[m x n] += A[m x k] * B^T where B is [n x k]. B is transposed into a
// scratch buffer so the inner loop runs over contiguous columns of C.
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a,
             const T* __restrict b, T* __restrict c) {
  thread_local std::vector<T> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c);
}

// C[k x n] += A^T * B where A is [m x k], B is [m x n].
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a,
             const T* __restrict b, T* __restrict c) {
  for (std::size_t p = 0; p < k; ++p) {
    T* cp = c + p * n;
    std::size_t j0 = 0;
    for (; j0 + kTile <= n; j0 += kTile) {
      T acc[kTile];
      for (std::size_t j = 0; j < kTile; ++j) acc[j] = cp[j0 + j];
      for (std::size_t i = 0; i < m; ++i) {
        const T aip = a[i * k + p];
        const T* bi = b + i * n + j0;
        for (std::size_t j = 0; j < kTile; ++j) acc[j] += aip * bi[j];
      }
      for (std::size_t j = 0; j < kTile; ++j) cp[j0 + j] = acc[j];
    }
    if (j0 < n) {
      for (std::size_t i = 0; i < m; ++i) {
        const T aip = a[i * k + p];
        const T* bi = b + i * n;
        for (std::size_t j = j0; j < n; ++j) cp[j] += aip * bi[j];
      }
    }
  }
}

}  // namespace kernels
}  // namespace augu
