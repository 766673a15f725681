#pragma once

// End-to-end experiments over trial seeds: build the pool, run a scheme,
// evaluate against baselines, aggregate, persist.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alsubset/analysis.hpp"
#include "alsubset/config.hpp"
#include "alsubset/generator.hpp"
#include "alsubset/schemes.hpp"

namespace alsubset {

inline constexpr int kResultsSchemaVersion = 1;

struct ExperimentConfig {
  std::string name = "experiment";
  /// Pool file (CSV); when empty the generator builds one pool per trial.
  std::filesystem::path pool_path;
  std::filesystem::path test_path;
  GeneratorSpec generator;
  SearchConfig search;
  std::vector<std::uint64_t> seeds;
  bool random_baseline = true;
  bool full_baseline = false;
  std::size_t consensus_members = 0;  ///< 0 skips the consensus analysis
  /// Canonical `key = value` text the config was built from.
  std::string canonical;

  std::uint64_t hash() const { return fnv1a64(canonical); }
};

/// Throws ConfigError on unknown keys or invalid values.
ExperimentConfig parse_experiment_config(const KeyValueConfig& kv);

struct TrialRecord {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<IterationRecord> iterations;
  double accuracy = 0.0;  ///< final subset models on the test pool
  std::optional<double> random_accuracy;
  std::optional<double> full_accuracy;
  std::optional<double> selected_accuracy;
  std::optional<double> unselected_accuracy;
  DuplicationHistogram histogram;
  std::optional<ConsensusReport> consensus;
  double wall_time_s = 0.0;
  /// Final selection and subset-model checkpoints; not part of the results
  /// document.
  SubsetState subset;
  CheckpointStore subset_store;
};

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation, 0 for one value
};

Summary summarize(std::span<const double> values);

struct ResultsRecord {
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::string name;
  std::string scheme;
  std::string function;
  std::size_t target_size = 0;
  std::vector<TrialRecord> trials;
  Summary accuracy;
  Summary random_accuracy;
  Summary full_accuracy;
};

/// Runs every trial (up to `jobs` in parallel) and aggregates. Trial failures
/// are recorded, not thrown.
ResultsRecord run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

/// Single trial; exposed for tests.
TrialRecord run_trial(const ExperimentConfig& config, std::uint64_t seed);

/// One self-describing JSON document. `timestamp` is stored under "created".
std::string results_document(const ResultsRecord& record, std::string_view timestamp);
ResultsRecord parse_results_document(std::string_view text);

/// Appends the document as one line to `<dir>/results_<hash>.jsonl`. Throws
/// std::runtime_error when that file already holds a different config.
std::filesystem::path append_results(const std::filesystem::path& dir, const ResultsRecord& record,
                                     std::string_view timestamp);

/// Every document in every `results_*.jsonl` under `dir`, in file order.
std::vector<ResultsRecord> load_results(const std::filesystem::path& dir);

enum class PlotKind { learning_curve, consensus, histogram, scheme_comparison };

std::string_view to_string(PlotKind kind);
/// Throws ConfigError on unknown kinds.
PlotKind parse_plot_kind(std::string_view name);

/// Tidy CSV: a `# columns:` comment, a header row, one observation per row.
std::string export_plot_data(std::span<const ResultsRecord> records, PlotKind kind);

/// Header row and data rows of an exported CSV, comments dropped.
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text);

}  // namespace alsubset
