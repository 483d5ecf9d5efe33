#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rlogist/eval/auc.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/slidegen/config.hpp"
#include "rlogist/slidegen/generate.hpp"

namespace rlogist::slidegen {

struct CalibrationReport {
  double oracle_auc_high = 0.0;
  double oracle_auc_scan = 0.0;
  std::size_t train_slides = 0;
  std::size_t test_slides = 0;
};

inline void to_json(nlohmann::json& j, const CalibrationReport& r) {
  j = {{"oracle_auc_high", r.oracle_auc_high},
       {"oracle_auc_scan", r.oracle_auc_scan},
       {"train_slides", r.train_slides},
       {"test_slides", r.test_slides}};
}

namespace detail {

// Slide summary used by the probes: per-dimension mean, max of slide-centred rows, and std.
inline std::vector<double> slide_summary(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), d = rows.front().size();
  std::vector<double> mean(d, 0.0), mx(d, -1e300), var(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < d; ++c) mean[c] += r[c];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < d; ++c) {
      const double z = r[c] - mean[c];
      mx[c] = std::max(mx[c], z);
      var[c] += z * z;
    }
  }
  std::vector<double> out;
  out.reserve(3 * d);
  out.insert(out.end(), mean.begin(), mean.end());
  out.insert(out.end(), mx.begin(), mx.end());
  for (auto v : var) out.push_back(std::sqrt(v / static_cast<double>(n)));
  return out;
}

inline std::vector<std::vector<double>> high_rows(const SlideBundle& b) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < b.n_regions; ++i) {
    const auto m = b.region_mean(i);
    rows.emplace_back(m.begin(), m.end());
  }
  return rows;
}

inline std::vector<std::vector<double>> scan_rows(const SlideBundle& b) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < b.n_regions; ++i) {
    const auto r = b.scan_features.row(i);
    rows.emplace_back(r.begin(), r.end());
  }
  return rows;
}

// L2-regularised logistic regression on standardised features, full-batch gradient descent.
// Returns held-out AUC.
inline double probe_auc(const std::vector<std::vector<double>>& x_train, const std::vector<int>& y_train,
                        const std::vector<std::vector<double>>& x_test, const std::vector<int>& y_test) {
  const std::size_t n = x_train.size(), p = x_train.front().size();
  std::vector<double> mu(p, 0.0), sd(p, 0.0);
  for (const auto& x : x_train)
    for (std::size_t c = 0; c < p; ++c) mu[c] += x[c];
  for (auto& m : mu) m /= static_cast<double>(n);
  for (const auto& x : x_train)
    for (std::size_t c = 0; c < p; ++c) sd[c] += (x[c] - mu[c]) * (x[c] - mu[c]);
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n)) + 1e-9;
  auto standardise = [&](const std::vector<double>& x) {
    std::vector<double> z(p);
    for (std::size_t c = 0; c < p; ++c) z[c] = (x[c] - mu[c]) / sd[c];
    return z;
  };
  std::vector<std::vector<double>> z;
  for (const auto& x : x_train) z.push_back(standardise(x));

  constexpr double lr = 0.5, l2 = 1e-2;
  constexpr int iterations = 1500;
  std::vector<double> w(p, 0.0), g(p);
  double bias = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = bias;
      for (std::size_t c = 0; c < p; ++c) s += w[c] * z[i][c];
      const double err = 1.0 / (1.0 + std::exp(-s)) - y_train[i];
      for (std::size_t c = 0; c < p; ++c) g[c] += err * z[i][c];
      gb += err;
    }
    for (std::size_t c = 0; c < p; ++c) w[c] -= lr * (g[c] / static_cast<double>(n) + l2 * w[c]);
    bias -= lr * gb / static_cast<double>(n);
  }
  std::vector<eval::ScoredLabel> scores;
  for (std::size_t i = 0; i < x_test.size(); ++i) {
    const auto zt = standardise(x_test[i]);
    double s = bias;
    for (std::size_t c = 0; c < p; ++c) s += w[c] * zt[c];
    scores.push_back({s, y_test[i]});
  }
  return eval::compute_auc(scores);
}

}  // namespace detail

// Throwaway linear probes on slide summaries, trained on one fresh sample and scored on another:
// one sees exact high-magnification region means, the other the raw scan features.
inline CalibrationReport calibrate(const GenConfig& config, std::size_t train_slides = 200,
                                   std::size_t test_slides = 200) {
  config.validate();
  std::vector<std::vector<double>> hi_train, hi_test, sc_train, sc_test;
  std::vector<int> y_train, y_test;
  auto draw = [&](std::size_t count, std::uint64_t stream, std::vector<std::vector<double>>& hi,
                  std::vector<std::vector<double>>& sc, std::vector<int>& y) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto label = static_cast<std::uint8_t>(i % 2);
      const auto b = generate_slide(config, nk::derive_seed(config.seed, {0xca11b, stream, i}), label);
      hi.push_back(detail::slide_summary(detail::high_rows(b)));
      sc.push_back(detail::slide_summary(detail::scan_rows(b)));
      y.push_back(label);
    }
  };
  draw(train_slides, 0, hi_train, sc_train, y_train);
  draw(test_slides, 1, hi_test, sc_test, y_test);
  CalibrationReport r;
  r.train_slides = train_slides;
  r.test_slides = test_slides;
  r.oracle_auc_high = detail::probe_auc(hi_train, y_train, hi_test, y_test);
  r.oracle_auc_scan = detail::probe_auc(sc_train, y_train, sc_test, y_test);
  return r;
}

}  // namespace rlogist::slidegen
