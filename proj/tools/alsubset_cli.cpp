// alsubset: generate pools, score them, run subset searches, analyze stored
// artifacts and export plot tables.
//
// Exit codes: 0 success, 1 config error, 2 runtime failure.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "alsubset/acquisition.hpp"
#include "alsubset/analysis.hpp"
#include "alsubset/config.hpp"
#include "alsubset/experiment.hpp"
#include "alsubset/generator.hpp"
#include "alsubset/learner.hpp"
#include "alsubset/prediction_io.hpp"
#include "alsubset/rng.hpp"
#include "alsubset/selection.hpp"
#include "alsubset/subset_state.hpp"
#include "alsubset/text_util.hpp"

namespace fs = std::filesystem;
using namespace alsubset;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
};

KeyValueConfig load_kv(const GlobalOptions& g) {
  return g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LabeledPool read_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read pool file " + path);
  }
  return read_pool_csv(in);
}

SubsetState read_subset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read subset file " + path);
  }
  return read_subset_csv(in);
}

EnsembleConfig ensemble_from(const KeyValueConfig& kv) {
  EnsembleConfig e;
  e.mode = parse_ensemble_mode(kv.get_string("ensemble.mode", to_string(e.mode)));
  e.runs = kv.get_size("ensemble.runs", e.runs);
  e.checkpoints = kv.get_size("ensemble.checkpoints", e.checkpoints);
  e.stride = kv.get_size("ensemble.stride", e.stride);
  e.validate();
  return e;
}

// Writes to <out>/<name> when an output directory is set, otherwise stdout.
void emit(const GlobalOptions& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  const auto path = fs::path(g.out) / name;
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
  std::cerr << "wrote " << path.string() << '\n';
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const GlobalOptions& g) {
  const auto config = parse_experiment_config(load_kv(g));
  GeneratorSpec spec = config.generator;
  spec.seed = derive_seed(spec.seed, {g.seed.value_or(config.seeds.front())});
  const auto generated = generate_pool(spec);

  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "pool.csv");
    write_pool_csv(out, generated.pool);
  }
  if (generated.test.size() > 0) {
    std::ofstream out(dir / "test.csv");
    write_pool_csv(out, generated.test);
  }
  {
    std::ofstream out(dir / "meta.csv");
    write_meta_csv(out, generated.meta);
  }
  std::cout << "pool " << generated.pool.size() << " samples, test " << generated.test.size()
            << " samples -> " << dir.string() << '\n';
  return 0;
}

struct ScoreOptions {
  std::string pool;
  std::string checkpoints;
  std::string predictions;
  std::string function;
  std::size_t select = 0;
  double outlier_fraction = 0.0;
  std::string save_predictions;
};

int cmd_score(const GlobalOptions& g, const ScoreOptions& o) {
  const auto kv = load_kv(g);
  const auto fn =
      parse_acquisition_function(o.function.empty() ? kv.get_string("search.function", "entropy")
                                                    : o.function);
  if (o.checkpoints.empty() == o.predictions.empty()) {
    throw ConfigError("score needs exactly one of --checkpoints or --predictions");
  }

  std::optional<LabeledPool> pool;
  if (!o.pool.empty()) {
    pool = read_pool(o.pool);
  }
  PredictionTensor tensor;
  if (!o.checkpoints.empty()) {
    if (!pool) {
      throw ConfigError("--checkpoints needs --pool");
    }
    const auto store = CheckpointStore::load(o.checkpoints);
    const auto members = build_ensemble(store, ensemble_from(kv));
    tensor = predict_pool(members, *pool, pool->ids());
  } else {
    tensor = load_predictions(o.predictions);
  }
  if (!o.save_predictions.empty()) {
    write_prediction_tensor(o.save_predictions, tensor);
  }

  std::vector<ClassIndex> labels;
  if (fn == AcquisitionFunction::error_count) {
    if (!pool) {
      throw ConfigError("error_count needs --pool for labels");
    }
    for (SampleId id : tensor.sample_ids()) {
      labels.push_back(pool->label(pool->index_of(id)));
    }
  }
  const auto scores = score_pool(tensor, fn, labels, g.seed.value_or(0));

  std::ostringstream csv;
  csv << "sample_id,score\n";
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    csv << scores.sample_ids[i] << ',' << detail::format_double(scores.scores[i]) << '\n';
  }
  emit(g, "scores.csv", csv.str());

  if (o.select > 0) {
    const auto ids = o.outlier_fraction > 0.0
                         ? outlier_window_select(scores, o.select, o.outlier_fraction)
                         : select_top_k(scores, o.select);
    std::ostringstream subset;
    write_subset_csv(subset, SubsetState(ids));
    emit(g, "subset.csv", subset.str());
  }
  return 0;
}

int cmd_search(const GlobalOptions& g) {
  if (g.config.empty()) {
    throw ConfigError("search needs --config");
  }
  auto config = parse_experiment_config(load_kv(g));
  if (g.seed) {
    config.seeds = {*g.seed};
  }
  const auto record = run_experiment(config, g.jobs);
  const fs::path dir = g.out.empty() ? fs::path("results") : fs::path(g.out);
  const auto path = append_results(dir, record, utc_timestamp());

  bool failed = false;
  for (const auto& t : record.trials) {
    if (!t.ok) {
      failed = true;
      std::cerr << "trial seed " << t.seed << " failed: " << t.error << '\n';
      continue;
    }
    const auto stem = "seed" + std::to_string(t.seed);
    std::ofstream subset(dir / ("subset_" + stem + ".csv"));
    write_subset_csv(subset, t.subset);
    t.subset_store.save(dir / ("store_" + stem));
    std::cout << "seed " << t.seed << ": accuracy " << t.accuracy;
    if (t.random_accuracy) {
      std::cout << ", random " << *t.random_accuracy;
    }
    if (t.full_accuracy) {
      std::cout << ", full " << *t.full_accuracy;
    }
    std::cout << ", subset " << t.subset.unique_count() << " unique / " << t.subset.total_count()
              << " total\n";
  }
  std::cout << record.name << ": mean " << record.accuracy.mean << " +- " << record.accuracy.std
            << " over " << record.accuracy.count << " trials -> " << path.string() << '\n';
  return failed ? kExitRuntime : 0;
}

struct AnalyzeOptions {
  std::string what;
  std::string predictions;
  std::string subset;
  std::string pool;
  std::string checkpoints;
  std::size_t n_max = 0;
  bool csv = false;
};

nlohmann::json eval_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (double a : r.per_class) {
    per_class.push_back(std::isnan(a) ? nlohmann::json(nullptr) : nlohmann::json(a));
  }
  return {{"size", r.size}, {"correct", r.correct}, {"accuracy", r.accuracy},
          {"per_class", per_class}};
}

int cmd_analyze(const GlobalOptions& g, const AnalyzeOptions& o) {
  const auto kv = load_kv(g);
  if (o.what == "consensus") {
    if (o.predictions.empty()) {
      throw ConfigError("consensus needs --predictions (members in epoch order)");
    }
    const auto tensor = load_predictions(o.predictions);
    const auto report = consensus_counts(tensor, o.n_max == 0 ? tensor.members() : o.n_max);
    if (o.csv) {
      std::ostringstream out;
      out << "# columns: group size n, samples on which the n latest checkpoints agree, "
             "evaluation-set size\n";
      out << "n,agreeing,eval_size\n";
      for (std::size_t n = 0; n < report.cumulative.size(); ++n) {
        out << n + 1 << ',' << report.cumulative[n] << ',' << report.eval_size << '\n';
      }
      emit(g, "consensus.csv", out.str());
    } else {
      emit(g, "consensus.json",
           nlohmann::json{{"eval_size", report.eval_size},
                          {"cumulative", report.cumulative},
                          {"pairwise", report.pairwise}}
                   .dump(2) +
               "\n");
    }
    return 0;
  }
  if (o.what == "histogram") {
    if (o.subset.empty()) {
      throw ConfigError("histogram needs --subset");
    }
    const auto hist = duplication_histogram(read_subset(o.subset));
    if (o.csv) {
      std::ostringstream out;
      out << "# columns: multiplicity, frames with that multiplicity\n";
      out << "multiplicity,frames\n";
      for (const auto& [m, count] : hist.frames) {
        out << m << ',' << count << '\n';
      }
      emit(g, "histogram.csv", out.str());
    } else {
      nlohmann::json frames = nlohmann::json::array();
      for (const auto& [m, count] : hist.frames) {
        frames.push_back({m, count});
      }
      emit(g, "histogram.json",
           nlohmann::json{{"unique_count", hist.unique_count()},
                          {"total_count", hist.total_count()},
                          {"frames", frames}}
                   .dump(2) +
               "\n");
    }
    return 0;
  }
  if (o.what == "eval" || o.what == "gap") {
    if (o.pool.empty() || o.checkpoints.empty()) {
      throw ConfigError(o.what + " needs --pool and --checkpoints");
    }
    const auto pool = read_pool(o.pool);
    const auto members = build_ensemble(CheckpointStore::load(o.checkpoints), ensemble_from(kv));
    nlohmann::json doc;
    if (o.what == "eval") {
      doc = eval_json(evaluate(members, pool));
    } else {
      if (o.subset.empty()) {
        throw ConfigError("gap needs --subset");
      }
      const auto gap = selected_unselected_gap(members, pool, read_subset(o.subset));
      doc = {{"selected", eval_json(gap.selected)}, {"unselected", eval_json(gap.unselected)}};
    }
    emit(g, o.what + ".json", doc.dump(2) + "\n");
    return 0;
  }
  throw ConfigError("unknown analysis '" + o.what + "'");
}

int cmd_export(const GlobalOptions& g, const std::string& results, const std::string& kind_name) {
  const auto kind = parse_plot_kind(kind_name);
  const auto records = load_results(results);
  emit(g, std::string(to_string(kind)) + ".csv", export_plot_data(records, kind));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data subset selection with ensemble active learning"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config file (key = value)");
  app.add_option("--seed", g.seed, "Trial seed; overrides experiment.seeds");
  app.add_option("--jobs", g.jobs, "Parallel trials")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic pool, test set and metadata");

  ScoreOptions so;
  auto* score = app.add_subcommand("score", "Score a pool with an acquisition ensemble");
  score->add_option("--pool", so.pool, "Pool CSV");
  score->add_option("--checkpoints", so.checkpoints, "Checkpoint store directory");
  score->add_option("--predictions", so.predictions, "Prediction tensor (ALPT or CSV)");
  score->add_option("--function", so.function, "Acquisition function");
  score->add_option("--select", so.select, "Also write the top-k subset");
  score->add_option("--outlier-fraction", so.outlier_fraction, "Skip this top fraction");
  score->add_option("--save-predictions", so.save_predictions, "Write the ALPT tensor here");

  auto* search = app.add_subcommand("search", "Run a subset search over the configured seeds");

  AnalyzeOptions ao;
  auto* analyze = app.add_subcommand("analyze", "Consensus, histogram or evaluation reports");
  analyze->add_option("--what", ao.what, "consensus | histogram | eval | gap")->required();
  analyze->add_option("--predictions", ao.predictions, "Prediction tensor, members by epoch");
  analyze->add_option("--subset", ao.subset, "Subset CSV");
  analyze->add_option("--pool", ao.pool, "Pool CSV");
  analyze->add_option("--checkpoints", ao.checkpoints, "Checkpoint store directory");
  analyze->add_option("--n-max", ao.n_max, "Largest consensus group");
  analyze->add_flag("--csv", ao.csv, "Emit a plot-ready table");

  std::string results_dir = "results";
  std::string kind;
  auto* exp = app.add_subcommand("export", "Plot CSVs from stored results");
  exp->add_option("--results", results_dir, "Results directory or .jsonl file");
  exp->add_option("--kind", kind, "learning_curve | consensus | histogram | scheme_comparison")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      return cmd_gen_data(g);
    }
    if (*score) {
      return cmd_score(g, so);
    }
    if (*search) {
      return cmd_search(g);
    }
    if (*analyze) {
      return cmd_analyze(g, ao);
    }
    return cmd_export(g, results_dir, kind);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
