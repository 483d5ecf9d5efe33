#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rlogist/errors.hpp"

namespace rlogist::nk {

// Logit assigned to excluded actions before normalization.
inline constexpr double kMaskedLogit = -1.0e8;

namespace detail {

template <class T>
double masked_max(std::span<const T> logits, const std::vector<bool>& legal) {
  if (legal.size() != logits.size()) throw ShapeError("masked softmax: mask length mismatch");
  bool any = false;
  double m = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!legal[i]) continue;
    const double v = static_cast<double>(logits[i]);
    if (!std::isfinite(v)) throw NumericError("masked softmax: non-finite logit at index " + std::to_string(i));
    if (!any || v > m) m = v;
    any = true;
  }
  if (!any) throw NoLegalActionError("masked softmax: every action is masked");
  return m;
}

}  // namespace detail

template <class T>
std::vector<double> masked_log_softmax(std::span<const T> logits, const std::vector<bool>& legal) {
  const double m = detail::masked_max(logits, legal);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = legal[i] ? static_cast<double>(logits[i]) : kMaskedLogit;
    total += std::exp(z - m);
  }
  const double log_total = std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = legal[i] ? static_cast<double>(logits[i]) : kMaskedLogit;
    out[i] = z - m - log_total;
  }
  return out;
}

template <class T>
std::vector<double> masked_softmax(std::span<const T> logits, const std::vector<bool>& legal) {
  const double m = detail::masked_max(logits, legal);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = legal[i] ? static_cast<double>(logits[i]) : kMaskedLogit;
    out[i] = std::exp(z - m);
    total += out[i];
  }
  for (auto& p : out) p /= total;
  return out;
}

template <class T>
std::vector<double> masked_softmax(const std::vector<T>& logits, const std::vector<bool>& legal) {
  return masked_softmax(std::span<const T>(logits), legal);
}

template <class T>
std::vector<double> masked_log_softmax(const std::vector<T>& logits, const std::vector<bool>& legal) {
  return masked_log_softmax(std::span<const T>(logits), legal);
}

}  // namespace rlogist::nk
