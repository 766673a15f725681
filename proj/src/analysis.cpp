#include "alsubset/analysis.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace alsubset {

ConsensusReport consensus_counts(const PredictionTensor& tensor, std::size_t n_max) {
  const std::size_t members = tensor.members();
  if (n_max == 0 || n_max > members) {
    throw std::invalid_argument("consensus group size " + std::to_string(n_max) +
                                " outside [1, " + std::to_string(members) + "]");
  }
  ConsensusReport report;
  report.eval_size = tensor.samples();
  report.cumulative.assign(n_max, 0);
  report.pairwise.assign(members - 1, 0);

  std::vector<ClassIndex> votes(members);
  for (std::size_t n = 0; n < tensor.samples(); ++n) {
    const auto slice = tensor.slice(n);
    for (std::size_t e = 0; e < members; ++e) {
      std::vector<double> row(slice.begin() + static_cast<std::ptrdiff_t>(e * tensor.classes()),
                              slice.begin() +
                                  static_cast<std::ptrdiff_t>((e + 1) * tensor.classes()));
      votes[e] = argmax(row);
    }
    for (std::size_t e = 0; e + 1 < members; ++e) {
      if (votes[e] == votes[e + 1]) {
        ++report.pairwise[e];
      }
    }
    // Grow the group backwards from the latest member.
    const ClassIndex latest = votes[members - 1];
    for (std::size_t size = 1; size <= n_max; ++size) {
      if (votes[members - size] != latest) {
        break;
      }
      ++report.cumulative[size - 1];
    }
  }
  return report;
}

std::size_t DuplicationHistogram::unique_count() const {
  std::size_t n = 0;
  for (const auto& [m, count] : frames) {
    n += count;
  }
  return n;
}

std::size_t DuplicationHistogram::total_count() const {
  std::size_t n = 0;
  for (const auto& [m, count] : frames) {
    n += static_cast<std::size_t>(m) * count;
  }
  return n;
}

DuplicationHistogram duplication_histogram(const SubsetState& state) {
  DuplicationHistogram hist;
  for (const auto& [id, m] : state.counts()) {
    ++hist.frames[m];
  }
  return hist;
}

EvalReport evaluate(std::span<const ModelParams> members, const LabeledPool& pool,
                    std::span<const SampleId> ids) {
  if (ids.empty()) {
    throw std::invalid_argument("cannot evaluate on an empty id set");
  }
  if (members.empty()) {
    throw std::invalid_argument("empty ensemble");
  }
  const auto k = static_cast<std::size_t>(pool.classes());
  std::vector<std::size_t> class_total(k, 0);
  std::vector<std::size_t> class_correct(k, 0);
  EvalReport report;
  report.size = ids.size();
  std::vector<double> mean(k);
  for (SampleId id : ids) {
    const std::size_t i = pool.index_of(id);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (const auto& m : members) {
      const auto p = predict_proba(m, pool.features(i));
      for (std::size_t c = 0; c < k; ++c) {
        mean[c] += p[c];
      }
    }
    const auto label = static_cast<std::size_t>(pool.label(i));
    ++class_total[label];
    if (static_cast<std::size_t>(argmax(mean)) == label) {
      ++report.correct;
      ++class_correct[label];
    }
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.size);
  report.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    report.per_class[c] = class_total[c] == 0
                              ? std::numeric_limits<double>::quiet_NaN()
                              : static_cast<double>(class_correct[c]) /
                                    static_cast<double>(class_total[c]);
  }
  return report;
}

EvalReport evaluate(std::span<const ModelParams> members, const LabeledPool& pool) {
  return evaluate(members, pool, pool.ids());
}

PartitionReport selected_unselected_gap(std::span<const ModelParams> members,
                                        const LabeledPool& pool, const SubsetState& state) {
  std::vector<SampleId> selected;
  std::vector<SampleId> unselected;
  for (SampleId id : pool.ids()) {
    (state.contains(id) ? selected : unselected).push_back(id);
  }
  for (const auto& [id, m] : state.counts()) {
    if (!pool.contains(id)) {
      throw std::out_of_range("unknown sample id " + std::to_string(id));
    }
  }
  if (selected.empty() || unselected.empty()) {
    throw std::invalid_argument("empty partition");
  }
  return {evaluate(members, pool, selected), evaluate(members, pool, unselected)};
}

}  // namespace alsubset
