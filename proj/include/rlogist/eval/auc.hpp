#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rlogist/errors.hpp"

namespace rlogist::eval {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

// Area under the ROC curve as the normalized Mann-Whitney U statistic; ties count one half.
// O(n log n) via midranks.
inline double compute_auc(std::span<const ScoredLabel> scores) {
  std::size_t n_pos = 0;
  for (const auto& s : scores) n_pos += s.label == 1 ? 1 : 0;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedAucError("auc is undefined unless both classes are present");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });

  // Sum of positive ranks, using the average rank within tie groups.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]].score == scores[order[i]].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (scores[order[k]].label == 1) pos_rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

inline double compute_auc(const std::vector<ScoredLabel>& scores) {
  return compute_auc(std::span<const ScoredLabel>(scores));
}

}  // namespace rlogist::eval
