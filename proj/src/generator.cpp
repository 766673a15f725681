#include "alsubset/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "alsubset/rng.hpp"

namespace alsubset {

void GeneratorSpec::validate() const {
  if (classes <= 0 || clusters_per_class == 0 || samples_per_cluster == 0 || dim == 0) {
    throw ConfigError("generator needs positive classes, clusters, samples and dimension");
  }
  if (!(redundancy >= 0.0 && redundancy < 1.0)) {
    throw ConfigError("generator redundancy must be in [0, 1)");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw ConfigError("generator label noise must be in [0, 1]");
  }
  if (label_noise > 0.0 && classes < 2) {
    throw ConfigError("label noise needs at least two classes");
  }
  if (!imbalance.empty()) {
    if (imbalance.size() != static_cast<std::size_t>(classes)) {
      throw ConfigError("generator imbalance needs one ratio per class");
    }
    for (double r : imbalance) {
      if (!(r > 0.0)) {
        throw ConfigError("generator imbalance ratios must be positive");
      }
    }
  }
  if (!(cluster_std > 0.0) || !(center_spread >= 0.0)) {
    throw ConfigError("generator spreads must be positive");
  }
}

namespace {

// Largest-remainder apportionment of `total` by `weights`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) {
    ++out[remainders[j % remainders.size()].second];
  }
  return out;
}

// Draws `count` distinct indices from [0, n).
std::vector<std::size_t> choose_distinct(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(all[i], all[i + rng.below(n - i)]);
  }
  all.resize(count);
  return all;
}

}  // namespace

GeneratedPool generate_pool(const GeneratorSpec& spec) {
  spec.validate();
  const auto k = static_cast<std::size_t>(spec.classes);
  const std::size_t n = spec.pool_size();
  const std::size_t clusters = k * spec.clusters_per_class;
  Rng rng(derive_seed(spec.seed, {0xD47A}));

  std::vector<double> centers(clusters * spec.dim);
  for (double& c : centers) {
    c = spec.center_spread * rng.normal();
  }

  const std::vector<double> ratios =
      spec.imbalance.empty() ? std::vector<double>(k, 1.0) : spec.imbalance;
  const auto class_counts = apportion(n, ratios);

  // Slots in class-major order; cluster assignment is round-robin.
  struct Slot {
    ClassIndex label;
    std::size_t cluster;
    bool redundant = false;
    std::size_t source = 0;
    bool noisy = false;
    ClassIndex observed;
  };
  std::vector<Slot> slots;
  slots.reserve(n);
  std::vector<std::size_t> class_begin(k + 1, 0);
  for (std::size_t c = 0; c < k; ++c) {
    class_begin[c] = slots.size();
    for (std::size_t j = 0; j < class_counts[c]; ++j) {
      const std::size_t cluster = c * spec.clusters_per_class + j % spec.clusters_per_class;
      slots.push_back({static_cast<ClassIndex>(c), cluster, false, 0, false,
                       static_cast<ClassIndex>(c)});
    }
  }
  class_begin[k] = slots.size();

  // Copies are apportioned by class size and never consume a class's last
  // original sample.
  const auto redundant_total =
      static_cast<std::size_t>(std::llround(spec.redundancy * static_cast<double>(n)));
  std::vector<double> class_weights(class_counts.begin(), class_counts.end());
  auto redundant_per_class = apportion(redundant_total, class_weights);
  for (std::size_t c = 0; c < k; ++c) {
    if (class_counts[c] > 0 && redundant_per_class[c] >= class_counts[c]) {
      throw ConfigError("redundancy leaves class " + std::to_string(c) + " without originals");
    }
  }

  std::vector<double> features(n * spec.dim);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t begin = class_begin[c];
    const std::size_t count = class_counts[c];
    if (count == 0) {
      continue;
    }
    const auto copies = choose_distinct(rng, count, redundant_per_class[c]);
    for (std::size_t j : copies) {
      slots[begin + j].redundant = true;
    }
    std::vector<std::size_t> originals;
    for (std::size_t j = 0; j < count; ++j) {
      if (!slots[begin + j].redundant) {
        originals.push_back(begin + j);
      }
    }
    for (std::size_t s : originals) {
      const double* center = centers.data() + slots[s].cluster * spec.dim;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        features[s * spec.dim + d] = center[d] + spec.cluster_std * rng.normal();
      }
    }
    for (std::size_t j = 0; j < count; ++j) {
      Slot& slot = slots[begin + j];
      if (!slot.redundant) {
        continue;
      }
      slot.source = originals[rng.below(originals.size())];
      slot.cluster = slots[slot.source].cluster;
      const std::size_t s = begin + j;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        features[s * spec.dim + d] = features[slot.source * spec.dim + d] +
                                     kJitterScale * spec.cluster_std * rng.normal();
      }
    }
  }

  const auto noisy_total =
      static_cast<std::size_t>(std::llround(spec.label_noise * static_cast<double>(n)));
  for (std::size_t s : choose_distinct(rng, n, noisy_total)) {
    auto wrong = static_cast<ClassIndex>(rng.below(k - 1));
    if (wrong >= slots[s].label) {
      ++wrong;
    }
    slots[s].noisy = true;
    slots[s].observed = wrong;
  }

  // Ids follow a seeded permutation so id order carries no class structure.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<SampleId> slot_id(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    slot_id[order[pos]] = pos;
  }

  GeneratedPool out;
  std::vector<double> pool_features(n * spec.dim);
  std::vector<ClassIndex> labels(n);
  std::vector<SampleId> ids(n);
  out.meta.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t s = order[pos];
    const Slot& slot = slots[s];
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(s * spec.dim), spec.dim,
                pool_features.begin() + static_cast<std::ptrdiff_t>(pos * spec.dim));
    labels[pos] = slot.observed;
    ids[pos] = pos;
    out.meta[pos] = {pos,          slot.label,
                     slot.cluster, slot.redundant,
                     slot.redundant ? slot_id[slot.source] : 0, slot.noisy};
  }
  out.pool = LabeledPool(spec.dim, spec.classes, std::move(pool_features), std::move(labels),
                         std::move(ids));

  if (spec.test_size > 0) {
    const auto test_counts = apportion(spec.test_size, std::vector<double>(k, 1.0));
    std::vector<double> test_features;
    std::vector<ClassIndex> test_labels;
    std::vector<SampleId> test_ids;
    test_features.reserve(spec.test_size * spec.dim);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < test_counts[c]; ++j) {
        const std::size_t cluster = c * spec.clusters_per_class + j % spec.clusters_per_class;
        const double* center = centers.data() + cluster * spec.dim;
        for (std::size_t d = 0; d < spec.dim; ++d) {
          test_features.push_back(center[d] + spec.cluster_std * rng.normal());
        }
        test_labels.push_back(static_cast<ClassIndex>(c));
        test_ids.push_back(test_ids.size());
      }
    }
    out.test = LabeledPool(spec.dim, spec.classes, std::move(test_features),
                           std::move(test_labels), std::move(test_ids));
  } else {
    out.test = LabeledPool(spec.dim, spec.classes, {}, {}, {});
  }
  return out;
}

void write_meta_csv(std::ostream& out, const std::vector<SampleMeta>& meta) {
  out << "sample_id,true_label,cluster,redundant,source,noisy\n";
  for (const auto& m : meta) {
    out << m.id << ',' << m.true_label << ',' << m.cluster << ',' << (m.redundant ? 1 : 0) << ','
        << m.source << ',' << (m.noisy ? 1 : 0) << '\n';
  }
}

}  // namespace alsubset
