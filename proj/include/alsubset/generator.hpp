#pragma once

// Seeded Gaussian-mixture pools with controlled redundancy, label noise and
// class imbalance.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "alsubset/learner.hpp"

namespace alsubset {

struct GeneratorSpec {
  int classes = 4;
  std::size_t clusters_per_class = 2;
  std::size_t samples_per_cluster = 250;
  std::size_t dim = 8;
  double redundancy = 0.0;   ///< fraction of the pool that are jittered copies
  double label_noise = 0.0;  ///< fraction of the pool with a re-drawn wrong label
  std::vector<double> imbalance;  ///< relative class sizes; empty = uniform
  double cluster_std = 1.0;
  double center_spread = 2.0;  ///< std of cluster centers around the origin
  std::size_t test_size = 0;   ///< clean, class-balanced held-out samples
  std::uint64_t seed = 0;

  std::size_t pool_size() const {
    return static_cast<std::size_t>(classes) * clusters_per_class * samples_per_cluster;
  }
  void validate() const;
};

inline constexpr double kJitterScale = 0.01;  ///< copies jitter by 0.01 * cluster_std

struct SampleMeta {
  SampleId id = 0;
  ClassIndex true_label = 0;
  std::size_t cluster = 0;  ///< global cluster index, class-major
  bool redundant = false;
  SampleId source = 0;      ///< copied sample, when redundant
  bool noisy = false;
};

struct GeneratedPool {
  LabeledPool pool;
  LabeledPool test;  ///< empty when test_size == 0
  std::vector<SampleMeta> meta;  ///< aligned with pool order
};

GeneratedPool generate_pool(const GeneratorSpec& spec);

/// CSV with header `sample_id,true_label,cluster,redundant,source,noisy`.
void write_meta_csv(std::ostream& out, const std::vector<SampleMeta>& meta);

}  // namespace alsubset
