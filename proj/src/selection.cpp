#include "alsubset/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace alsubset {

std::vector<SampleId> rank_by_score(const AcquisitionScores& scores, const IdSet& excluded) {
  if (scores.scores.size() != scores.sample_ids.size()) {
    throw std::invalid_argument("score and id counts differ");
  }
  std::vector<std::size_t> order;
  order.reserve(scores.scores.size());
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    if (!std::isfinite(scores.scores[i])) {
      throw std::invalid_argument("non-finite score for sample " +
                                  std::to_string(scores.sample_ids[i]));
    }
    if (!excluded.contains(scores.sample_ids[i])) {
      order.push_back(i);
    }
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.scores[a] != scores.scores[b]) {
      return scores.scores[a] > scores.scores[b];
    }
    return scores.sample_ids[a] < scores.sample_ids[b];
  });
  std::vector<SampleId> ids(order.size());
  std::transform(order.begin(), order.end(), ids.begin(),
                 [&](std::size_t i) { return scores.sample_ids[i]; });
  return ids;
}

std::vector<SampleId> select_top_k(const AcquisitionScores& scores, std::size_t k,
                                   const IdSet& excluded) {
  auto ranked = rank_by_score(scores, excluded);
  if (k > ranked.size()) {
    throw std::invalid_argument("cannot select " + std::to_string(k) + " of " +
                                std::to_string(ranked.size()) + " candidates");
  }
  ranked.resize(k);
  return ranked;
}

std::vector<SampleId> outlier_window_select(const AcquisitionScores& scores, std::size_t k,
                                            double outlier_fraction, const IdSet& excluded) {
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw std::invalid_argument("outlier fraction must be in [0, 1)");
  }
  const std::size_t n = scores.sample_ids.size();
  const auto skip =
      static_cast<std::size_t>(std::floor(outlier_fraction * static_cast<double>(n)));
  auto ranked = rank_by_score(scores, excluded);
  if (skip + k > ranked.size()) {
    throw std::invalid_argument("outlier window of " + std::to_string(skip) + " + " +
                                std::to_string(k) + " exceeds " + std::to_string(ranked.size()) +
                                " candidates");
  }
  return {ranked.begin() + static_cast<std::ptrdiff_t>(skip),
          ranked.begin() + static_cast<std::ptrdiff_t>(skip + k)};
}

std::vector<std::size_t> growth_schedule(std::size_t target_size) {
  if (target_size < 8) {
    throw std::invalid_argument("growth schedule needs a target of at least 8, got " +
                                std::to_string(target_size));
  }
  return {target_size / 8, target_size / 4, target_size / 2, target_size};
}

}  // namespace alsubset
