#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "alsubset/common.hpp"

namespace alsubset {

/// Multiset over sample ids. Multiplicity > 1 only arises under automatic
/// duplication; every other scheme keeps all counts at one.
class SubsetState {
 public:
  SubsetState() = default;
  explicit SubsetState(std::span<const SampleId> ids);

  /// Adds `count` occurrences of `id`. count must be positive.
  void add(SampleId id, std::uint32_t count = 1);

  bool contains(SampleId id) const { return counts_.contains(id); }
  std::uint32_t multiplicity(SampleId id) const;

  std::size_t unique_count() const { return counts_.size(); }
  std::size_t total_count() const { return total_; }
  bool empty() const { return counts_.empty(); }

  /// Unique ids, ascending.
  std::vector<SampleId> ids() const;
  /// Every id repeated by its multiplicity, ascending by id.
  std::vector<SampleId> expanded() const;

  const std::map<SampleId, std::uint32_t>& counts() const { return counts_; }

  /// Order-independent FNV-1a digest of (id, multiplicity) pairs.
  std::uint64_t hash() const;

  bool operator==(const SubsetState&) const = default;

 private:
  std::map<SampleId, std::uint32_t> counts_;
  std::size_t total_ = 0;
};

/// CSV with header `sample_id,multiplicity`.
void write_subset_csv(std::ostream& out, const SubsetState& state);
SubsetState read_subset_csv(std::istream& in);

}  // namespace alsubset
