#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/tensor.hpp"

namespace rlogist::nets {

struct PoolStats {
  std::vector<double> mean;
  std::vector<double> max;
};

inline PoolStats pool_rows(const nk::Tensor<float>& scan) {
  if (scan.rows() == 0) throw ShapeError("cannot pool an empty feature matrix");
  const std::size_t n = scan.rows(), d = scan.cols();
  PoolStats s{std::vector<double>(d, 0.0), std::vector<double>(d, -1e300)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = scan.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      s.mean[c] += r[c];
      s.max[c] = std::max(s.max[c], static_cast<double>(r[c]));
    }
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  return s;
}

// Row i: [v_i ; mean-pool ; max-pool ; observed_i ; t/T].
template <class T>
nk::Tensor<T> policy_view(const nk::Tensor<float>& scan, const std::vector<bool>& observed, double progress) {
  if (observed.size() != scan.rows()) throw ShapeError("policy view: observed mask length mismatch");
  const std::size_t n = scan.rows(), d = scan.cols();
  const auto pool = pool_rows(scan);
  nk::Tensor<T> out(n, 3 * d + 2);
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    const auto r = scan.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      o[c] = static_cast<T>(r[c]);
      o[d + c] = static_cast<T>(pool.mean[c]);
      o[2 * d + c] = static_cast<T>(pool.max[c]);
    }
    o[3 * d] = observed[i] ? T(1) : T(0);
    o[3 * d + 1] = static_cast<T>(progress);
  }
  return out;
}

// [mean-pool ; max-pool ; t/T].
template <class T>
nk::Tensor<T> value_view(const nk::Tensor<float>& scan, double progress) {
  const std::size_t d = scan.cols();
  const auto pool = pool_rows(scan);
  nk::Tensor<T> out(1, 2 * d + 1);
  for (std::size_t c = 0; c < d; ++c) {
    out[c] = static_cast<T>(pool.mean[c]);
    out[d + c] = static_cast<T>(pool.max[c]);
  }
  out[2 * d] = static_cast<T>(progress);
  return out;
}

// Row i: [v_i - mean-pool ; observed_i]. Centring removes the slide-level shift, which otherwise
// lets the classifier memorise individual training slides.
template <class T>
nk::Tensor<T> classifier_view(const nk::Tensor<float>& scan, const std::vector<bool>& observed) {
  if (observed.size() != scan.rows()) throw ShapeError("classifier view: observed mask length mismatch");
  const std::size_t n = scan.rows(), d = scan.cols();
  const auto pool = pool_rows(scan);
  nk::Tensor<T> out(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    const auto r = scan.row(i);
    for (std::size_t c = 0; c < d; ++c) o[c] = static_cast<T>(static_cast<double>(r[c]) - pool.mean[c]);
    o[d] = observed[i] ? T(1) : T(0);
  }
  return out;
}

// Regions the classifier pools over: all, or the observed ones once any exist.
inline std::vector<bool> attention_mask(const std::vector<bool>& observed, bool sees_all) {
  if (sees_all) return std::vector<bool>(observed.size(), true);
  if (std::none_of(observed.begin(), observed.end(), [](bool b) { return b; })) {
    return std::vector<bool>(observed.size(), true);
  }
  return observed;
}

}  // namespace rlogist::nets
