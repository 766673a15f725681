#pragma once

#include <cstddef>
#include <unordered_set>
#include <vector>

#include "alsubset/acquisition.hpp"

namespace alsubset {

using IdSet = std::unordered_set<SampleId>;

/// Ids ordered by descending score, ties by ascending id.
std::vector<SampleId> rank_by_score(const AcquisitionScores& scores, const IdSet& excluded = {});

/// The k highest-scoring ids not in `excluded`, in rank order. Throws
/// std::invalid_argument when fewer than k candidates remain.
std::vector<SampleId> select_top_k(const AcquisitionScores& scores, std::size_t k,
                                   const IdSet& excluded = {});

/// Skips the top floor(f * N) ranked ids and returns the next k, where N is
/// the number of scored ids. Requires floor(f * N) + k <= N.
std::vector<SampleId> outlier_window_select(const AcquisitionScores& scores, std::size_t k,
                                            double outlier_fraction, const IdSet& excluded = {});

/// [floor(n/8), floor(n/4), floor(n/2), n]. Requires n >= 8.
std::vector<std::size_t> growth_schedule(std::size_t target_size);

}  // namespace alsubset
