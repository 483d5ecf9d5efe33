#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rlogist/errors.hpp"

namespace rlogist::nk {

// Dense row-major rank-2 tensor. Vectors are stored as 1 x n rows.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  static Tensor row_vector(std::vector<T> values) {
    const auto n = values.size();
    return Tensor(1, n, std::move(values));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<T> row_copy(std::size_t r) const {
    const auto s = row(r);
    return {s.begin(), s.end()};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(rows_, cols_, std::move(out));
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

inline void require_same_shape(std::array<std::size_t, 2> a, std::array<std::size_t, 2> b,
                               const char* where) {
  if (a != b) {
    throw ShapeError(std::string(where) + ": shape " + std::to_string(a[0]) + "x" +
                     std::to_string(a[1]) + " vs " + std::to_string(b[0]) + "x" +
                     std::to_string(b[1]));
  }
}

// Kernels shared by the recorded and unrecorded paths so both produce identical bits.
// Reductions accumulate in double regardless of T.
namespace kernels {

// out = a * b
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor<T> out(n, m);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* arow = a.raw() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = static_cast<double>(arow[p]);
      if (av == 0.0) continue;
      const T* brow = b.raw() + p * m;
      for (std::size_t j = 0; j < m; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* orow = out.raw() + i * m;
    for (std::size_t j = 0; j < m; ++j) orow[j] = static_cast<T>(acc[j]);
  }
  return out;
}

// out = a^T * b
template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> acc(k * m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const T* arow = a.raw() + r * k;
    const T* brow = b.raw() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = static_cast<double>(arow[i]);
      if (av == 0.0) continue;
      double* dst = acc.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += av * static_cast<double>(brow[j]);
    }
  }
  Tensor<T> out(k, m);
  for (std::size_t i = 0; i < k * m; ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

// out = a * b^T
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor<T> out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.raw() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* brow = b.raw() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
      out(i, j) = static_cast<T>(acc);
    }
  }
  return out;
}

template <class T>
void add_row_inplace(Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row: " + x.shape_string() + " + " + bias.shape_string());
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T* row = x.raw() + r * x.cols();
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] = static_cast<T>(row[c] + bias[c]);
  }
}

template <class T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  Tensor<T> out(1, x.cols());
  if (x.rows() == 0) return out;
  std::vector<double> acc(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) acc[c] += static_cast<double>(x(r, c));
  for (std::size_t c = 0; c < x.cols(); ++c) out[c] = static_cast<T>(acc[c] / static_cast<double>(x.rows()));
  return out;
}

template <class T>
Tensor<T> max_rows(const Tensor<T>& x, std::vector<std::size_t>* argmax = nullptr) {
  Tensor<T> out(1, x.cols());
  if (argmax) argmax->assign(x.cols(), 0);
  if (x.rows() == 0) return out;
  for (std::size_t c = 0; c < x.cols(); ++c) out[c] = x(0, c);
  for (std::size_t r = 1; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (x(r, c) > out[c]) {
        out[c] = x(r, c);
        if (argmax) (*argmax)[c] = r;
      }
    }
  }
  return out;
}

}  // namespace kernels

}  // namespace rlogist::nk
