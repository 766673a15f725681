#include "alsubset/schemes.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "alsubset/analysis.hpp"
#include "alsubset/rng.hpp"
#include "alsubset/selection.hpp"

namespace alsubset {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::pretrain:
      return "pretrain";
    case Scheme::compress:
      return "compress";
    case Scheme::build_up:
      return "build_up";
    case Scheme::automatic_duplication:
      return "automatic_duplication";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (auto s : {Scheme::pretrain, Scheme::compress, Scheme::build_up,
                 Scheme::automatic_duplication}) {
    if (to_string(s) == name) {
      return s;
    }
  }
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

std::string_view to_string(IntermediateMembers members) {
  return members == IntermediateMembers::configured ? "configured" : "final";
}

IntermediateMembers parse_intermediate_members(std::string_view name) {
  if (name == "configured") {
    return IntermediateMembers::configured;
  }
  if (name == "final") {
    return IntermediateMembers::final;
  }
  throw ConfigError("unknown intermediate ensemble setting '" + std::string(name) + "'");
}

namespace {

// Seed stream tags.
constexpr std::uint64_t kAcquisitionTag = 1;
constexpr std::uint64_t kSubsetTag = 2;
constexpr std::uint64_t kInitialTag = 3;
constexpr std::uint64_t kScoreTag = 4;

std::size_t runs_required(const EnsembleConfig& ensemble) {
  return (ensemble.mode == EnsembleMode::single || ensemble.mode == EnsembleMode::checkpoints)
             ? 1
             : ensemble.runs;
}

std::vector<TrainRun> train_runs(const LabeledPool& pool, const SubsetState& subset,
                                 const TrainConfig& train_config, std::size_t count,
                                 std::uint64_t base_seed, std::uint64_t tag, std::uint64_t round) {
  std::vector<TrainRun> runs;
  runs.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    runs.push_back(train(pool, subset, train_config, derive_seed(base_seed, {tag, round, r})));
  }
  return runs;
}

std::vector<ModelParams> final_members(std::span<const TrainRun> runs, std::size_t count) {
  std::vector<ModelParams> members;
  for (std::size_t r = 0; r < std::min(count, runs.size()); ++r) {
    members.push_back(runs[r].final.params);
  }
  return members;
}

void fill_score_stats(IterationRecord& record, const AcquisitionScores& scores) {
  if (scores.scores.empty()) {
    return;
  }
  const auto [lo, hi] = std::minmax_element(scores.scores.begin(), scores.scores.end());
  record.score_min = *lo;
  record.score_max = *hi;
  record.score_mean = std::accumulate(scores.scores.begin(), scores.scores.end(), 0.0) /
                      static_cast<double>(scores.scores.size());
}

void record_eval(IterationRecord& record, std::span<const ModelParams> members,
                 const LabeledPool* eval_pool) {
  if (eval_pool && eval_pool->size() > 0) {
    record.eval_accuracy = evaluate(members, *eval_pool).accuracy;
  }
}

std::vector<SampleId> unselected_ids(const LabeledPool& pool, const SubsetState& state) {
  std::vector<SampleId> out;
  out.reserve(pool.size() - std::min(pool.size(), state.unique_count()));
  for (SampleId id : pool.ids()) {
    if (!state.contains(id)) {
      out.push_back(id);
    }
  }
  return out;
}

std::vector<ModelParams> acquisition_members(std::span<const TrainRun> runs,
                                             const SearchConfig& config, bool intermediate) {
  if (intermediate && config.intermediate == IntermediateMembers::final) {
    return final_members(runs, runs_required(config.ensemble));
  }
  return ensemble_from_runs(runs, config.ensemble);
}

SubsetState initial_random_subset(const LabeledPool& pool, std::size_t size,
                                  std::uint64_t seed) {
  const auto scores = random_scores(pool.ids(), derive_seed(seed, {kInitialTag}));
  const auto ids = select_top_k(scores, size);
  return SubsetState(ids);
}

// Shared body of pretrain and compress: acquisition ensemble on the whole
// pool, one-shot selection.
SubsetResult single_shot(const LabeledPool& pool, const SearchConfig& config,
                         const LabeledPool* eval_pool, bool finetune) {
  config.validate(pool.size());
  const std::size_t n_runs = std::max(runs_required(config.ensemble), config.subset_runs);
  const bool needs_pretraining = finetune || config.function != AcquisitionFunction::random;

  std::vector<TrainRun> pretrained;
  if (needs_pretraining) {
    pretrained = train_runs(pool, SubsetState(pool.ids()), config.train, n_runs, config.seed,
                            kAcquisitionTag, 0);
  }
  std::vector<ModelParams> members;
  if (config.function != AcquisitionFunction::random) {
    members = ensemble_from_runs(pretrained, config.ensemble);
  }
  const auto scores =
      score_ids(members, pool, pool.ids(), config.function, derive_seed(config.seed, {kScoreTag, 0}));
  const auto chosen = outlier_window_select(scores, config.target_size, config.outlier_fraction);

  SubsetResult result;
  result.state = SubsetState(chosen);
  if (finetune) {
    // Every pretrained run is fine-tuned and joins the subset ensemble.
    for (std::size_t r = 0; r < pretrained.size(); ++r) {
      result.subset_runs.push_back(fine_tune(pool, result.state, pretrained[r].final.params,
                                             config.train,
                                             derive_seed(config.seed, {kSubsetTag, 0, r})));
    }
  } else {
    result.subset_runs = train_subset_models(pool, result.state, config, 0);
  }
  result.subset_members = final_members(result.subset_runs, result.subset_runs.size());
  for (const auto& run : result.subset_runs) {
    result.subset_store.add_run(run);
  }

  IterationRecord record;
  record.index = 0;
  record.unique_count = result.state.unique_count();
  record.total_count = result.state.total_count();
  record.added = chosen;
  fill_score_stats(record, scores);
  record_eval(record, result.subset_members, eval_pool);
  result.iterations.push_back(std::move(record));
  return result;
}

}  // namespace

void SearchConfig::validate(std::size_t pool_size) const {
  train.validate();
  ensemble.validate();
  if (subset_runs == 0) {
    throw ConfigError("subset_runs must be positive");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw ConfigError("outlier fraction must be in [0, 1)");
  }
  if (ensemble.mode == EnsembleMode::checkpoints || ensemble.mode == EnsembleMode::combined) {
    const std::size_t span = (ensemble.checkpoints - 1) * ensemble.stride + 1;
    if (span > train.harvest_window || span > train.max_epochs) {
      throw ConfigError("ensemble needs " + std::to_string(span) +
                        " harvested epochs per run; harvest window is " +
                        std::to_string(train.harvest_window) + " of " +
                        std::to_string(train.max_epochs) + " epochs");
    }
  }
  if (scheme == Scheme::pretrain && subset_arch && *subset_arch != train.arch) {
    throw ConfigError("pretrain fine-tunes the acquisition models; subset_arch must match");
  }
  if (scheme == Scheme::automatic_duplication) {
    if (acquisition_size == 0 || initial_size == 0) {
      throw ConfigError("automatic duplication needs initial_size and acquisition_size");
    }
    if (initial_size > pool_size || acquisition_size > pool_size) {
      throw ConfigError("automatic duplication sizes exceed the pool");
    }
    if (outlier_fraction != 0.0) {
      throw ConfigError("outlier windows apply to pretrain and compress only");
    }
    return;
  }
  if (target_size == 0 || target_size > pool_size) {
    throw ConfigError("target size " + std::to_string(target_size) + " must be in [1, " +
                      std::to_string(pool_size) + "]");
  }
  if (scheme == Scheme::build_up) {
    if (target_size < 8) {
      throw ConfigError("build_up needs a target size of at least 8");
    }
    if (outlier_fraction != 0.0) {
      throw ConfigError("outlier windows apply to pretrain and compress only");
    }
    return;
  }
  const auto skip = static_cast<std::size_t>(outlier_fraction * static_cast<double>(pool_size));
  if (skip + target_size > pool_size) {
    throw ConfigError("outlier window plus target size exceeds the pool");
  }
}

std::vector<ModelParams> ensemble_from_runs(std::span<const TrainRun> runs,
                                            const EnsembleConfig& config) {
  CheckpointStore store;
  for (const auto& run : runs) {
    store.add_run(run);
  }
  return build_ensemble(store, config);
}

AcquisitionScores score_ids(std::span<const ModelParams> members, const LabeledPool& pool,
                            std::span<const SampleId> ids, AcquisitionFunction fn,
                            std::uint64_t seed) {
  if (fn == AcquisitionFunction::random) {
    return random_scores(ids, seed);
  }
  const auto tensor = predict_pool(members, pool, ids);
  std::vector<ClassIndex> labels;
  if (fn == AcquisitionFunction::error_count) {
    labels.reserve(ids.size());
    for (SampleId id : ids) {
      labels.push_back(pool.label(pool.index_of(id)));
    }
  }
  return score_pool(tensor, fn, labels, seed);
}

std::vector<TrainRun> train_subset_models(const LabeledPool& pool, const SubsetState& subset,
                                          const SearchConfig& config, std::uint64_t tag) {
  TrainConfig tc = config.train;
  tc.arch = config.subset_arch.value_or(config.train.arch);
  return train_runs(pool, subset, tc, config.subset_runs, config.seed, kSubsetTag, tag);
}

SubsetResult run_pretrain(const LabeledPool& pool, const SearchConfig& config,
                          const LabeledPool* eval_pool) {
  if (config.scheme != Scheme::pretrain) {
    throw std::invalid_argument("run_pretrain called with scheme " +
                                std::string(to_string(config.scheme)));
  }
  return single_shot(pool, config, eval_pool, true);
}

SubsetResult run_compress(const LabeledPool& pool, const SearchConfig& config,
                          const LabeledPool* eval_pool) {
  if (config.scheme != Scheme::compress) {
    throw std::invalid_argument("run_compress called with scheme " +
                                std::string(to_string(config.scheme)));
  }
  return single_shot(pool, config, eval_pool, false);
}

SubsetResult run_build_up(const LabeledPool& pool, const SearchConfig& config,
                          const LabeledPool* eval_pool) {
  if (config.scheme != Scheme::build_up) {
    throw std::invalid_argument("run_build_up called with scheme " +
                                std::string(to_string(config.scheme)));
  }
  config.validate(pool.size());
  const auto schedule = growth_schedule(config.target_size);
  const std::size_t n_runs = std::max(runs_required(config.ensemble), config.subset_runs);
  TrainConfig tc = config.train;
  tc.arch = config.subset_arch.value_or(config.train.arch);
  // Round 0 trains the acquisition architecture; later rounds train subset
  // ensembles, which double as the next acquisition model.
  const bool shared_arch = tc.arch == config.train.arch;

  SubsetResult result;
  result.state = initial_random_subset(pool, schedule.front(), config.seed);
  std::vector<TrainRun> runs =
      train_runs(pool, result.state, config.train, n_runs, config.seed, kSubsetTag, 0);
  {
    IterationRecord record;
    record.index = 0;
    record.unique_count = result.state.unique_count();
    record.total_count = result.state.total_count();
    record.added = result.state.ids();
    record_eval(record, final_members(runs, config.subset_runs), eval_pool);
    result.iterations.push_back(std::move(record));
  }

  for (std::size_t round = 1; round < schedule.size(); ++round) {
    const auto members = acquisition_members(runs, config, true);
    const auto candidates = unselected_ids(pool, result.state);
    const auto scores = score_ids(members, pool, candidates, config.function,
                                  derive_seed(config.seed, {kScoreTag, round}));
    const std::size_t move = schedule[round] - result.state.unique_count();
    const auto chosen = select_top_k(scores, move);
    for (SampleId id : chosen) {
      result.state.add(id);
    }
    const bool last = round + 1 == schedule.size();
    // Intermediate subset ensembles act as acquisition models, so they keep
    // the acquisition architecture unless this is the final round.
    const TrainConfig& round_config = (last || shared_arch) ? tc : config.train;
    runs = train_runs(pool, result.state, round_config, n_runs, config.seed, kSubsetTag, round);

    IterationRecord record;
    record.index = round;
    record.unique_count = result.state.unique_count();
    record.total_count = result.state.total_count();
    record.added = chosen;
    fill_score_stats(record, scores);
    record_eval(record, final_members(runs, config.subset_runs), eval_pool);
    result.iterations.push_back(std::move(record));
  }

  runs.resize(config.subset_runs);
  result.subset_runs = std::move(runs);
  result.subset_members = final_members(result.subset_runs, result.subset_runs.size());
  for (const auto& run : result.subset_runs) {
    result.subset_store.add_run(run);
  }
  return result;
}

SubsetResult run_automatic_duplication(const LabeledPool& pool, const SearchConfig& config,
                                       const LabeledPool* eval_pool) {
  if (config.scheme != Scheme::automatic_duplication) {
    throw std::invalid_argument("run_automatic_duplication called with scheme " +
                                std::string(to_string(config.scheme)));
  }
  config.validate(pool.size());
  const std::size_t n_runs = std::max(runs_required(config.ensemble), config.subset_runs);
  TrainConfig tc = config.train;
  tc.arch = config.subset_arch.value_or(config.train.arch);
  const bool shared_arch = tc.arch == config.train.arch;

  SubsetResult result;
  result.state = initial_random_subset(pool, config.initial_size, config.seed);
  std::vector<TrainRun> runs = train_runs(pool, result.state,
                                          (config.iterations == 0 ? tc : config.train), n_runs,
                                          config.seed, kSubsetTag, 0);
  {
    IterationRecord record;
    record.index = 0;
    record.unique_count = result.state.unique_count();
    record.total_count = result.state.total_count();
    record.added = result.state.ids();
    record_eval(record, final_members(runs, config.subset_runs), eval_pool);
    result.iterations.push_back(std::move(record));
  }

  for (std::size_t round = 1; round <= config.iterations; ++round) {
    const auto members = acquisition_members(runs, config, true);
    const auto scores = score_ids(members, pool, pool.ids(), config.function,
                                  derive_seed(config.seed, {kScoreTag, round}));
    const auto chosen = select_top_k(scores, config.acquisition_size);
    for (SampleId id : chosen) {
      result.state.add(id);
    }
    const bool last = round == config.iterations;
    const TrainConfig& round_config = (last || shared_arch) ? tc : config.train;
    runs = train_runs(pool, result.state, round_config, n_runs, config.seed, kSubsetTag, round);

    IterationRecord record;
    record.index = round;
    record.unique_count = result.state.unique_count();
    record.total_count = result.state.total_count();
    record.added = chosen;
    fill_score_stats(record, scores);
    record_eval(record, final_members(runs, config.subset_runs), eval_pool);
    result.iterations.push_back(std::move(record));
  }

  runs.resize(config.subset_runs);
  result.subset_runs = std::move(runs);
  result.subset_members = final_members(result.subset_runs, result.subset_runs.size());
  for (const auto& run : result.subset_runs) {
    result.subset_store.add_run(run);
  }
  return result;
}

SubsetResult run_search(const LabeledPool& pool, const SearchConfig& config,
                        const LabeledPool* eval_pool) {
  switch (config.scheme) {
    case Scheme::pretrain:
      return run_pretrain(pool, config, eval_pool);
    case Scheme::compress:
      return run_compress(pool, config, eval_pool);
    case Scheme::build_up:
      return run_build_up(pool, config, eval_pool);
    case Scheme::automatic_duplication:
      return run_automatic_duplication(pool, config, eval_pool);
  }
  throw std::invalid_argument("unknown scheme");
}

}  // namespace alsubset
