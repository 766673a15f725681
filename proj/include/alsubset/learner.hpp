#pragma once

// Deterministic mini-batch SGD for small classifiers, with per-epoch
// checkpoints from which seed, checkpoint and combined ensembles are built.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alsubset/acquisition.hpp"
#include "alsubset/common.hpp"
#include "alsubset/subset_state.hpp"

namespace alsubset {

class LabeledPool {
 public:
  LabeledPool() = default;
  LabeledPool(std::size_t dim, int classes, std::vector<double> features,
              std::vector<ClassIndex> labels, std::vector<SampleId> ids);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  int classes() const { return classes_; }

  std::span<const double> features(std::size_t index) const {
    return {features_.data() + index * dim_, dim_};
  }
  ClassIndex label(std::size_t index) const { return labels_[index]; }
  SampleId id(std::size_t index) const { return ids_[index]; }

  const std::vector<SampleId>& ids() const { return ids_; }
  const std::vector<ClassIndex>& labels() const { return labels_; }
  const std::vector<double>& feature_matrix() const { return features_; }

  bool contains(SampleId id) const { return index_.contains(id); }
  /// Throws std::out_of_range("unknown sample id ...").
  std::size_t index_of(SampleId id) const;

 private:
  std::size_t dim_ = 0;
  int classes_ = 0;
  std::vector<double> features_;
  std::vector<ClassIndex> labels_;
  std::vector<SampleId> ids_;
  std::unordered_map<SampleId, std::size_t> index_;
};

/// CSV with header `sample_id,label,f0,...,f{D-1}`. The class count is
/// max(label) + 1 unless `classes` is given.
void write_pool_csv(std::ostream& out, const LabeledPool& pool);
LabeledPool read_pool_csv(std::istream& in, int classes = 0);

enum class ArchitectureKind { logistic, mlp };

struct Architecture {
  ArchitectureKind kind = ArchitectureKind::logistic;
  std::size_t hidden = 0;  ///< mlp only

  bool operator==(const Architecture&) const = default;
};

/// "logistic" or "mlp-<H>".
Architecture parse_architecture(std::string_view tag);
std::string to_string(const Architecture& arch);

/// Flat parameter vector. Layout:
///   logistic: W[K][D], b[K]
///   mlp:      W1[H][D], b1[H], W2[K][H], b2[K]
struct ModelParams {
  Architecture arch;
  std::size_t dim = 0;
  int classes = 0;
  std::vector<double> weights;

  bool operator==(const ModelParams&) const = default;
};

std::size_t parameter_count(const Architecture& arch, std::size_t dim, int classes);
ModelParams zero_params(const Architecture& arch, std::size_t dim, int classes);
/// Gaussian weights scaled by 1/sqrt(fan_in); biases zero.
ModelParams init_params(const Architecture& arch, std::size_t dim, int classes, std::uint64_t seed);

std::vector<double> logits(const ModelParams& params, std::span<const double> x);
ProbabilityVector predict_proba(const ModelParams& params, std::span<const double> x);
ProbabilityVector softmax(std::span<const double> z);

/// One training example as seen by the objective.
struct WeightedExample {
  std::span<const double> features;
  ClassIndex label;
  double weight;  ///< class weight, 1 when unweighted
};

/// Batch objective (1/|B|) sum_i w_i CE_i + (decay/2) |W|^2, where the decay
/// term covers weight matrices but not biases. Writes the gradient into
/// `gradient` (resized) when non-null.
double objective(const ModelParams& params, std::span<const WeightedExample> batch,
                 double weight_decay, std::vector<double>* gradient);

/// Inverse-frequency class weights N / (K * n_k) over an id multiset; classes
/// absent from the multiset get weight 0.
std::vector<double> inverse_frequency_weights(const LabeledPool& pool,
                                              std::span<const SampleId> ids);

/// Sum of per-example cross-entropy gradients (no decay, no batch averaging)
/// over one full pass of the subset, each id counted by its multiplicity.
std::vector<double> epoch_gradient(const ModelParams& params, const LabeledPool& pool,
                                   const SubsetState& subset, bool class_weighting);

struct TrainConfig {
  Architecture arch;
  double learning_rate = 0.1;
  double decay_factor = 0.1;
  std::vector<std::size_t> decay_epochs;  ///< rate multiplied by decay_factor after each
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 40;
  /// Epochs without validation improvement before the rate drops; training
  /// stops if 2 * patience epochs pass after a drop with no improvement.
  /// 0 disables plateau handling.
  std::size_t patience = 0;
  double finetune_rate = 1e-3;
  std::size_t finetune_epochs = 10;
  bool class_weighting = false;
  double validation_fraction = 0.1;
  std::size_t harvest_window = 20;  ///< last W epochs kept as checkpoints

  void validate() const;
};

struct Checkpoint {
  ModelParams params;
  std::uint64_t run_seed = 0;
  std::uint32_t epoch = 0;
  std::uint64_t subset_hash = 0;
};

/// One training run. `checkpoints` holds the harvest window in epoch order.
struct TrainRun {
  std::uint64_t seed = 0;
  std::vector<Checkpoint> checkpoints;
  Checkpoint best;   ///< highest validation accuracy, ties to the later epoch
  Checkpoint final;  ///< last completed epoch
  std::vector<double> train_loss;  ///< full objective on the training split, per epoch
  std::vector<double> validation_accuracy;
  std::size_t epochs_run = 0;
};

/// Ids held out for validation: the last `fraction` of the subset's unique
/// ids when ordered by a seed-keyed hash.
std::vector<SampleId> validation_split(const SubsetState& subset, double fraction,
                                       std::uint64_t seed);

TrainRun train(const LabeledPool& pool, const SubsetState& subset, const TrainConfig& config,
               std::uint64_t seed);

/// Same loop as train, starting from `params`, at the fine-tune rate for
/// config.finetune_epochs epochs.
TrainRun fine_tune(const LabeledPool& pool, const SubsetState& subset, const ModelParams& params,
                   const TrainConfig& config, std::uint64_t seed);

enum class EnsembleMode { single, seeds, checkpoints, combined };

std::string_view to_string(EnsembleMode mode);
EnsembleMode parse_ensemble_mode(std::string_view name);

struct EnsembleConfig {
  EnsembleMode mode = EnsembleMode::seeds;
  std::size_t runs = 1;          ///< R
  std::size_t checkpoints = 1;   ///< C, per run
  std::size_t stride = 1;        ///< epoch stride inside the harvest window

  std::size_t member_count() const;
  void validate() const;
};

/// Checkpoints keyed by (run seed, epoch). Inserts may come from several
/// threads.
class CheckpointStore {
 public:
  struct RunInfo {
    std::uint32_t final_epoch = 0;
    std::uint32_t best_epoch = 0;
  };

  CheckpointStore() = default;
  CheckpointStore(const CheckpointStore& other);
  CheckpointStore& operator=(const CheckpointStore& other);

  void add_run(const TrainRun& run);
  void insert(const Checkpoint& checkpoint);
  void set_run_info(std::uint64_t seed, RunInfo info);

  /// Run seeds in ascending order.
  std::vector<std::uint64_t> run_seeds() const;
  RunInfo run_info(std::uint64_t seed) const;
  bool contains(std::uint64_t seed, std::uint32_t epoch) const;
  const Checkpoint& at(std::uint64_t seed, std::uint32_t epoch) const;
  std::size_t size() const;

  /// Directory of `run<seed>_ep<epoch>.alck` files plus `store.meta`.
  void save(const std::filesystem::path& dir) const;
  static CheckpointStore load(const std::filesystem::path& dir);

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::uint64_t, std::uint32_t>, Checkpoint> checkpoints_;
  std::map<std::uint64_t, RunInfo> runs_;
};

/// Members ordered by (run ascending, epoch ascending):
///   single      final checkpoint of the first run
///   seeds       best checkpoint of each of the first R runs
///   checkpoints last C epochs (stride s) of the first run
///   combined    last C epochs (stride s) of each of the first R runs
/// Throws std::out_of_range when a requested checkpoint is missing.
std::vector<ModelParams> build_ensemble(const CheckpointStore& store, const EnsembleConfig& config);

/// N x E x K tensor over `ids`, member order preserved.
PredictionTensor predict_pool(std::span<const ModelParams> members, const LabeledPool& pool,
                              std::span<const SampleId> ids);

// Checkpoint file: "ALCK" | u16 version | u8 arch | u32 D | u32 K | u32 hidden
// | u64 run seed | u32 epoch | weights as f32 in layout order.
inline constexpr std::uint16_t kCheckpointFormatVersion = 1;
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace alsubset
