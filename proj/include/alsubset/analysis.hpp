#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "alsubset/acquisition.hpp"
#include "alsubset/learner.hpp"
#include "alsubset/subset_state.hpp"

namespace alsubset {

struct ConsensusReport {
  std::size_t eval_size = 0;
  /// cumulative[n - 1]: samples on which the n latest members share a top-1.
  std::vector<std::size_t> cumulative;
  /// pairwise[e]: agreement count between members e and e + 1.
  std::vector<std::size_t> pairwise;
};

/// Members of `tensor` must be in epoch order. The group of size n is the n
/// latest members.
ConsensusReport consensus_counts(const PredictionTensor& tensor, std::size_t n_max);

struct DuplicationHistogram {
  std::map<std::uint32_t, std::size_t> frames;  ///< multiplicity -> frame count

  std::size_t unique_count() const;
  std::size_t total_count() const;
};

DuplicationHistogram duplication_histogram(const SubsetState& state);

struct EvalReport {
  std::size_t size = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<double> per_class;  ///< NaN for classes absent from the id set
};

/// Top-1 accuracy of argmax(predictive mean) over `ids`.
EvalReport evaluate(std::span<const ModelParams> members, const LabeledPool& pool,
                    std::span<const SampleId> ids);
/// Over every sample of the pool.
EvalReport evaluate(std::span<const ModelParams> members, const LabeledPool& pool);

struct PartitionReport {
  EvalReport selected;
  EvalReport unselected;
};

/// Evaluates on the unique ids of `state` and on the rest of the pool.
/// Throws std::invalid_argument("empty partition") if either side is empty.
PartitionReport selected_unselected_gap(std::span<const ModelParams> members,
                                        const LabeledPool& pool, const SubsetState& state);

}  // namespace alsubset
