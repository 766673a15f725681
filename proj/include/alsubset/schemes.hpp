#pragma once

// Subset search: an acquisition ensemble scores the labeled pool and the
// highest-scoring samples form the data subset on which subset models train.
//
//   pretrain   acquisition and subset models train on the whole pool; the
//              subset models are fine-tuned on the selection
//   compress   as pretrain, but subset models train from scratch
//   build_up   start from target/8 random samples and double the subset each
//              round, moving the top-scoring unselected samples in; each
//              round's subset ensemble is the next round's acquisition model
//   automatic_duplication
//              every round scores the entire pool, selected or not, and adds
//              the top-k ids, so important samples may occur several times

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "alsubset/acquisition.hpp"
#include "alsubset/learner.hpp"
#include "alsubset/subset_state.hpp"

namespace alsubset {

enum class Scheme { pretrain, compress, build_up, automatic_duplication };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

/// Which members the intermediate build-up / duplication ensembles use.
enum class IntermediateMembers {
  configured,  ///< the configured EnsembleConfig (checkpoints included)
  final,       ///< final weights of each run only
};

std::string_view to_string(IntermediateMembers members);
IntermediateMembers parse_intermediate_members(std::string_view name);

struct SearchConfig {
  Scheme scheme = Scheme::build_up;
  AcquisitionFunction function = AcquisitionFunction::mutual_information;
  std::size_t target_size = 0;  ///< N_s
  EnsembleConfig ensemble;
  IntermediateMembers intermediate = IntermediateMembers::final;
  double outlier_fraction = 0.0;
  std::size_t acquisition_size = 0;  ///< per-round k (automatic_duplication)
  std::size_t initial_size = 0;      ///< seed set size (automatic_duplication)
  std::size_t iterations = 3;        ///< rounds after the seed set (automatic_duplication)
  std::uint64_t seed = 0;
  /// Subset models trained on the final selection. Pretrain ignores it and
  /// fine-tunes every acquisition run.
  std::size_t subset_runs = 1;
  std::optional<Architecture> subset_arch;  ///< defaults to train.arch
  TrainConfig train;

  /// Throws ConfigError when inconsistent with a pool of `pool_size` samples.
  void validate(std::size_t pool_size) const;
};

struct IterationRecord {
  std::size_t index = 0;  ///< 0 is the initial selection
  std::size_t unique_count = 0;
  std::size_t total_count = 0;
  std::vector<SampleId> added;
  double score_min = 0.0;
  double score_mean = 0.0;
  double score_max = 0.0;
  std::optional<double> eval_accuracy;  ///< subset models on the evaluation pool
};

struct SubsetResult {
  std::vector<IterationRecord> iterations;
  SubsetState state;
  std::vector<TrainRun> subset_runs;
  /// Final weights of each subset run; the subset model ensemble.
  std::vector<ModelParams> subset_members;
  /// Checkpoints of the subset runs, for consensus analysis.
  CheckpointStore subset_store;
};

/// Members of an ensemble assembled from freshly trained runs.
std::vector<ModelParams> ensemble_from_runs(std::span<const TrainRun> runs,
                                            const EnsembleConfig& config);

/// Scores the pool ids with the ensemble. Labels come from the pool.
AcquisitionScores score_ids(std::span<const ModelParams> members, const LabeledPool& pool,
                            std::span<const SampleId> ids, AcquisitionFunction fn,
                            std::uint64_t seed);

// `eval_pool`, when given, is used to record subset-model accuracy per round.
SubsetResult run_pretrain(const LabeledPool& pool, const SearchConfig& config,
                          const LabeledPool* eval_pool = nullptr);
SubsetResult run_compress(const LabeledPool& pool, const SearchConfig& config,
                          const LabeledPool* eval_pool = nullptr);
SubsetResult run_build_up(const LabeledPool& pool, const SearchConfig& config,
                          const LabeledPool* eval_pool = nullptr);
SubsetResult run_automatic_duplication(const LabeledPool& pool, const SearchConfig& config,
                                       const LabeledPool* eval_pool = nullptr);

/// Dispatches on config.scheme.
SubsetResult run_search(const LabeledPool& pool, const SearchConfig& config,
                        const LabeledPool* eval_pool = nullptr);

/// Subset models trained from scratch on `subset`, seeded like a search's
/// final round so baselines are comparable.
std::vector<TrainRun> train_subset_models(const LabeledPool& pool, const SubsetState& subset,
                                          const SearchConfig& config, std::uint64_t tag);

}  // namespace alsubset
