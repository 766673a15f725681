#include "alsubset/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "alsubset/rng.hpp"
#include "alsubset/selection.hpp"
#include "alsubset/text_util.hpp"

namespace alsubset {

using nlohmann::json;

ExperimentConfig parse_experiment_config(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.name = kv.get_string("experiment.name", c.name);
  c.seeds = kv.get_u64s("experiment.seeds");
  if (c.seeds.empty()) {
    c.seeds = {0};
  }
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < c.seeds.size(); ++j) {
      if (c.seeds[i] == c.seeds[j]) {
        throw ConfigError("experiment.seeds must be distinct");
      }
    }
  }
  c.random_baseline = kv.get_bool("experiment.random_baseline", c.random_baseline);
  c.full_baseline = kv.get_bool("experiment.full_baseline", c.full_baseline);
  c.consensus_members = kv.get_size("experiment.consensus_members", c.consensus_members);

  c.pool_path = kv.get_string("pool.path", "");
  c.test_path = kv.get_string("pool.test_path", "");

  auto& g = c.generator;
  g.classes = static_cast<int>(kv.get_int("generator.classes", g.classes));
  g.clusters_per_class = kv.get_size("generator.clusters_per_class", g.clusters_per_class);
  g.samples_per_cluster = kv.get_size("generator.samples_per_cluster", g.samples_per_cluster);
  g.dim = kv.get_size("generator.dim", g.dim);
  g.redundancy = kv.get_double("generator.redundancy", g.redundancy);
  g.label_noise = kv.get_double("generator.label_noise", g.label_noise);
  g.imbalance = kv.get_doubles("generator.imbalance");
  g.cluster_std = kv.get_double("generator.cluster_std", g.cluster_std);
  g.center_spread = kv.get_double("generator.center_spread", g.center_spread);
  g.test_size = kv.get_size("generator.test_size", g.test_size);
  g.seed = kv.get_u64("generator.seed", g.seed);

  auto& t = c.search.train;
  t.arch = parse_architecture(kv.get_string("train.arch", "logistic"));
  t.learning_rate = kv.get_double("train.lr", t.learning_rate);
  t.decay_factor = kv.get_double("train.decay_factor", t.decay_factor);
  for (auto e : kv.get_u64s("train.decay_epochs")) {
    t.decay_epochs.push_back(static_cast<std::size_t>(e));
  }
  t.momentum = kv.get_double("train.momentum", t.momentum);
  t.weight_decay = kv.get_double("train.weight_decay", t.weight_decay);
  t.batch_size = kv.get_size("train.batch_size", t.batch_size);
  t.max_epochs = kv.get_size("train.max_epochs", t.max_epochs);
  t.patience = kv.get_size("train.patience", t.patience);
  t.finetune_rate = kv.get_double("train.finetune_rate", t.finetune_rate);
  t.finetune_epochs = kv.get_size("train.finetune_epochs", t.finetune_epochs);
  t.class_weighting = kv.get_bool("train.class_weighting", t.class_weighting);
  t.validation_fraction = kv.get_double("train.validation_fraction", t.validation_fraction);
  t.harvest_window = kv.get_size("train.harvest_window", t.harvest_window);

  auto& e = c.search.ensemble;
  e.mode = parse_ensemble_mode(kv.get_string("ensemble.mode", to_string(e.mode)));
  e.runs = kv.get_size("ensemble.runs", e.runs);
  e.checkpoints = kv.get_size("ensemble.checkpoints", e.checkpoints);
  e.stride = kv.get_size("ensemble.stride", e.stride);

  auto& s = c.search;
  s.scheme = parse_scheme(kv.get_string("search.scheme", to_string(s.scheme)));
  s.function = parse_acquisition_function(kv.get_string("search.function", to_string(s.function)));
  s.target_size = kv.get_size("search.target_size", s.target_size);
  s.outlier_fraction = kv.get_double("search.outlier_fraction", s.outlier_fraction);
  s.acquisition_size = kv.get_size("search.acquisition_size", s.acquisition_size);
  s.initial_size = kv.get_size("search.initial_size", s.initial_size);
  s.iterations = kv.get_size("search.iterations", s.iterations);
  s.subset_runs = kv.get_size("search.subset_runs", s.subset_runs);
  if (kv.has("search.subset_arch")) {
    s.subset_arch = parse_architecture(kv.get_string("search.subset_arch", "logistic"));
  }
  s.intermediate =
      parse_intermediate_members(kv.get_string("search.intermediate", to_string(s.intermediate)));

  if (const auto unused = kv.unused_keys(); !unused.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& key : unused) {
      msg += " " + key;
    }
    throw ConfigError(msg);
  }
  if (c.pool_path.empty()) {
    g.validate();
    s.validate(g.pool_size());
  } else {
    s.train.validate();
    s.ensemble.validate();
  }
  c.canonical = kv.canonical_text();
  return c;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) {
    return s;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) {
      sq += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace {

constexpr std::uint64_t kFullBaselineTag = 1000;
constexpr std::uint64_t kRandomBaselineTag = 2000;

LabeledPool load_pool_file(const std::filesystem::path& path, int classes = 0) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read pool file " + path.string());
  }
  return read_pool_csv(in, classes);
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& config, std::uint64_t seed) {
  TrialRecord trial;
  trial.seed = seed;
  const auto started = std::chrono::steady_clock::now();
  try {
    LabeledPool pool;
    LabeledPool test;
    if (config.pool_path.empty()) {
      GeneratorSpec spec = config.generator;
      spec.seed = derive_seed(config.generator.seed, {seed});
      auto generated = generate_pool(spec);
      pool = std::move(generated.pool);
      test = std::move(generated.test);
    } else {
      pool = load_pool_file(config.pool_path);
      test = config.test_path.empty() ? pool : load_pool_file(config.test_path, pool.classes());
      config.search.validate(pool.size());
    }
    const LabeledPool& eval_pool = test.size() > 0 ? test : pool;

    SearchConfig search = config.search;
    search.seed = seed;
    const auto result = run_search(pool, search, &eval_pool);
    trial.iterations = result.iterations;
    trial.accuracy = evaluate(result.subset_members, eval_pool).accuracy;
    trial.histogram = duplication_histogram(result.state);
    trial.subset = result.state;
    trial.subset_store = result.subset_store;

    if (result.state.unique_count() < pool.size()) {
      const auto gap = selected_unselected_gap(result.subset_members, pool, result.state);
      trial.selected_accuracy = gap.selected.accuracy;
      trial.unselected_accuracy = gap.unselected.accuracy;
    }

    if (config.random_baseline) {
      const std::size_t size = std::min(pool.size(), result.state.total_count());
      const auto scores = random_scores(pool.ids(), derive_seed(seed, {kRandomBaselineTag}));
      const SubsetState random_subset(select_top_k(scores, size));
      const auto runs = train_subset_models(pool, random_subset, search, kRandomBaselineTag);
      std::vector<ModelParams> members;
      for (const auto& run : runs) {
        members.push_back(run.final.params);
      }
      trial.random_accuracy = evaluate(members, eval_pool).accuracy;
    }
    if (config.full_baseline) {
      const auto runs =
          train_subset_models(pool, SubsetState(pool.ids()), search, kFullBaselineTag);
      std::vector<ModelParams> members;
      for (const auto& run : runs) {
        members.push_back(run.final.params);
      }
      trial.full_accuracy = evaluate(members, eval_pool).accuracy;
    }
    if (config.consensus_members > 0 && !result.subset_runs.empty()) {
      const auto& run = result.subset_runs.front();
      if (run.checkpoints.size() < config.consensus_members) {
        throw ConfigError("consensus needs " + std::to_string(config.consensus_members) +
                          " harvested checkpoints, run has " +
                          std::to_string(run.checkpoints.size()));
      }
      std::vector<ModelParams> members;
      for (std::size_t i = run.checkpoints.size() - config.consensus_members;
           i < run.checkpoints.size(); ++i) {
        members.push_back(run.checkpoints[i].params);
      }
      std::vector<SampleId> ids;
      for (SampleId id : pool.ids()) {
        if (!result.state.contains(id)) {
          ids.push_back(id);
        }
      }
      const auto tensor =
          ids.empty() ? predict_pool(members, eval_pool, eval_pool.ids())
                      : predict_pool(members, pool, ids);
      trial.consensus = consensus_counts(tensor, config.consensus_members);
    }
  } catch (const std::exception& ex) {
    trial.ok = false;
    trial.error = ex.what();
  }
  trial.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return trial;
}

ResultsRecord run_experiment(const ExperimentConfig& config, std::size_t jobs) {
  ResultsRecord record;
  record.config_hash = config.hash();
  record.config_text = config.canonical;
  record.name = config.name;
  record.scheme = std::string(to_string(config.search.scheme));
  record.function = std::string(to_string(config.search.function));
  record.target_size = config.search.target_size;
  record.trials.resize(config.seeds.size());

  jobs = std::max<std::size_t>(1, std::min(jobs, config.seeds.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      record.trials[i] = run_trial(config, config.seeds[i]);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t j = 0; j < jobs; ++j) {
      threads.emplace_back(worker);
    }
  }

  std::vector<double> acc;
  std::vector<double> random_acc;
  std::vector<double> full_acc;
  for (const auto& t : record.trials) {
    if (!t.ok) {
      continue;
    }
    acc.push_back(t.accuracy);
    if (t.random_accuracy) {
      random_acc.push_back(*t.random_accuracy);
    }
    if (t.full_accuracy) {
      full_acc.push_back(*t.full_accuracy);
    }
  }
  record.accuracy = summarize(acc);
  record.random_accuracy = summarize(random_acc);
  record.full_accuracy = summarize(full_acc);
  return record;
}

// ---------------------------------------------------------------------------
// Results documents

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t parse_hash_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) {
    return std::nullopt;
  }
  return j.get<double>();
}

json summary_json(const Summary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", s.std}};
}

Summary summary_from(const json& j) {
  return {j.at("count").get<std::size_t>(), j.at("mean").get<double>(), j.at("std").get<double>()};
}

json trial_json(const TrialRecord& t) {
  json iterations = json::array();
  for (const auto& it : t.iterations) {
    iterations.push_back({{"index", it.index},
                          {"unique_count", it.unique_count},
                          {"total_count", it.total_count},
                          {"added", it.added},
                          {"score_min", it.score_min},
                          {"score_mean", it.score_mean},
                          {"score_max", it.score_max},
                          {"eval_accuracy", optional_json(it.eval_accuracy)}});
  }
  json histogram = json::array();
  for (const auto& [m, count] : t.histogram.frames) {
    histogram.push_back({m, count});
  }
  json consensus = nullptr;
  if (t.consensus) {
    consensus = {{"eval_size", t.consensus->eval_size},
                 {"cumulative", t.consensus->cumulative},
                 {"pairwise", t.consensus->pairwise}};
  }
  return {{"seed", t.seed},
          {"ok", t.ok},
          {"error", t.error},
          {"accuracy", t.accuracy},
          {"random_accuracy", optional_json(t.random_accuracy)},
          {"full_accuracy", optional_json(t.full_accuracy)},
          {"selected_accuracy", optional_json(t.selected_accuracy)},
          {"unselected_accuracy", optional_json(t.unselected_accuracy)},
          {"iterations", iterations},
          {"histogram", histogram},
          {"consensus", consensus},
          {"wall_time_s", t.wall_time_s}};
}

TrialRecord trial_from(const json& j) {
  TrialRecord t;
  t.seed = j.at("seed").get<std::uint64_t>();
  t.ok = j.at("ok").get<bool>();
  t.error = j.at("error").get<std::string>();
  t.accuracy = j.at("accuracy").get<double>();
  t.random_accuracy = optional_from(j.at("random_accuracy"));
  t.full_accuracy = optional_from(j.at("full_accuracy"));
  t.selected_accuracy = optional_from(j.at("selected_accuracy"));
  t.unselected_accuracy = optional_from(j.at("unselected_accuracy"));
  for (const auto& it : j.at("iterations")) {
    IterationRecord r;
    r.index = it.at("index").get<std::size_t>();
    r.unique_count = it.at("unique_count").get<std::size_t>();
    r.total_count = it.at("total_count").get<std::size_t>();
    r.added = it.at("added").get<std::vector<SampleId>>();
    r.score_min = it.at("score_min").get<double>();
    r.score_mean = it.at("score_mean").get<double>();
    r.score_max = it.at("score_max").get<double>();
    r.eval_accuracy = optional_from(it.at("eval_accuracy"));
    t.iterations.push_back(std::move(r));
  }
  for (const auto& pair : j.at("histogram")) {
    t.histogram.frames[pair.at(0).get<std::uint32_t>()] = pair.at(1).get<std::size_t>();
  }
  if (!j.at("consensus").is_null()) {
    const auto& c = j.at("consensus");
    t.consensus = ConsensusReport{c.at("eval_size").get<std::size_t>(),
                                  c.at("cumulative").get<std::vector<std::size_t>>(),
                                  c.at("pairwise").get<std::vector<std::size_t>>()};
  }
  t.wall_time_s = j.at("wall_time_s").get<double>();
  return t;
}

}  // namespace

std::string results_document(const ResultsRecord& record, std::string_view timestamp) {
  json trials = json::array();
  for (const auto& t : record.trials) {
    trials.push_back(trial_json(t));
  }
  const json doc = {{"schema_version", kResultsSchemaVersion},
                    {"created", std::string(timestamp)},
                    {"name", record.name},
                    {"config_hash", hash_hex(record.config_hash)},
                    {"config", record.config_text},
                    {"scheme", record.scheme},
                    {"function", record.function},
                    {"target_size", record.target_size},
                    {"trials", trials},
                    {"aggregate",
                     {{"accuracy", summary_json(record.accuracy)},
                      {"random_accuracy", summary_json(record.random_accuracy)},
                      {"full_accuracy", summary_json(record.full_accuracy)}}}};
  return doc.dump();
}

ResultsRecord parse_results_document(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& ex) {
    throw std::runtime_error(std::string("malformed results document: ") + ex.what());
  }
  const auto version = doc.at("schema_version").get<int>();
  if (version != kResultsSchemaVersion) {
    throw std::runtime_error("unsupported results schema version " + std::to_string(version));
  }
  ResultsRecord r;
  r.name = doc.at("name").get<std::string>();
  r.config_hash = parse_hash_hex(doc.at("config_hash").get<std::string>());
  r.config_text = doc.at("config").get<std::string>();
  r.scheme = doc.at("scheme").get<std::string>();
  r.function = doc.at("function").get<std::string>();
  r.target_size = doc.at("target_size").get<std::size_t>();
  for (const auto& t : doc.at("trials")) {
    r.trials.push_back(trial_from(t));
  }
  const auto& agg = doc.at("aggregate");
  r.accuracy = summary_from(agg.at("accuracy"));
  r.random_accuracy = summary_from(agg.at("random_accuracy"));
  r.full_accuracy = summary_from(agg.at("full_accuracy"));
  return r;
}

std::filesystem::path append_results(const std::filesystem::path& dir, const ResultsRecord& record,
                                     std::string_view timestamp) {
  static std::mutex write_mutex;
  std::lock_guard lock(write_mutex);
  std::filesystem::create_directories(dir);
  const auto path = dir / ("results_" + hash_hex(record.config_hash) + ".jsonl");
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string first;
    if (std::getline(in, first) && !first.empty()) {
      const auto existing = parse_results_document(first);
      if (existing.config_text != record.config_text) {
        throw std::runtime_error("config hash collision in " + path.string() +
                                 ": stored config differs");
      }
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out) {
    throw std::runtime_error("cannot append to " + path.string());
  }
  out << results_document(record, timestamp) << '\n';
  return path;
}

std::vector<ResultsRecord> load_results(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.starts_with("results_") && entry.path().extension() == ".jsonl") {
        files.push_back(entry.path());
      }
    }
  } else if (std::filesystem::exists(dir)) {
    files.push_back(dir);
  }
  std::sort(files.begin(), files.end());
  std::vector<ResultsRecord> records;
  for (const auto& path : files) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (!detail::trim(line).empty()) {
        records.push_back(parse_results_document(line));
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Plot data

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::learning_curve:
      return "learning_curve";
    case PlotKind::consensus:
      return "consensus";
    case PlotKind::histogram:
      return "histogram";
    case PlotKind::scheme_comparison:
      return "scheme_comparison";
  }
  return "unknown";
}

PlotKind parse_plot_kind(std::string_view name) {
  for (auto k : {PlotKind::learning_curve, PlotKind::consensus, PlotKind::histogram,
                 PlotKind::scheme_comparison}) {
    if (to_string(k) == name) {
      return k;
    }
  }
  throw ConfigError("unknown plot kind '" + std::string(name) + "'");
}

namespace {

std::string field(double v) { return detail::format_double(v); }
std::string field(const std::optional<double>& v) { return v ? detail::format_double(*v) : ""; }
template <typename T>
  requires std::is_integral_v<T>
std::string field(T v) {
  return std::to_string(v);
}

void write_row(std::ostringstream& out, std::initializer_list<std::string> fields) {
  bool first = true;
  for (const auto& f : fields) {
    if (!first) {
      out << ',';
    }
    out << f;
    first = false;
  }
  out << '\n';
}

}  // namespace

std::string export_plot_data(std::span<const ResultsRecord> records, PlotKind kind) {
  std::ostringstream out;
  switch (kind) {
    case PlotKind::learning_curve:
      out << "# columns: experiment name, scheme, acquisition function, target size, trial seed, "
             "iteration, unique samples, total samples, subset-model accuracy\n";
      out << "name,scheme,function,target_size,seed,iteration,unique_count,total_count,accuracy\n";
      for (const auto& r : records) {
        for (const auto& t : r.trials) {
          for (const auto& it : t.iterations) {
            write_row(out, {r.name, r.scheme, r.function, field(r.target_size), field(t.seed),
                            field(it.index), field(it.unique_count), field(it.total_count),
                            field(it.eval_accuracy)});
          }
        }
      }
      break;
    case PlotKind::consensus:
      out << "# columns: experiment name, trial seed, group size n, samples on which the n "
             "latest checkpoints agree, evaluation-set size\n";
      out << "name,seed,n,agreeing,eval_size\n";
      for (const auto& r : records) {
        for (const auto& t : r.trials) {
          if (!t.consensus) {
            continue;
          }
          for (std::size_t n = 0; n < t.consensus->cumulative.size(); ++n) {
            write_row(out, {r.name, field(t.seed), field(n + 1),
                            field(t.consensus->cumulative[n]), field(t.consensus->eval_size)});
          }
        }
      }
      break;
    case PlotKind::histogram:
      out << "# columns: experiment name, trial seed, multiplicity, frames with that "
             "multiplicity\n";
      out << "name,seed,multiplicity,frames\n";
      for (const auto& r : records) {
        for (const auto& t : r.trials) {
          for (const auto& [m, count] : t.histogram.frames) {
            write_row(out, {r.name, field(t.seed), field(m), field(count)});
          }
        }
      }
      break;
    case PlotKind::scheme_comparison:
      out << "# columns: experiment name, scheme, acquisition function, target size, successful "
             "trials, subset accuracy mean and std, random-subset mean and std, full-pool mean "
             "and std\n";
      out << "name,scheme,function,target_size,trials,al_mean,al_std,random_mean,random_std,"
             "full_mean,full_std\n";
      for (const auto& r : records) {
        auto opt = [](const Summary& s, double v) {
          return s.count > 0 ? detail::format_double(v) : std::string();
        };
        write_row(out, {r.name, r.scheme, r.function, field(r.target_size), field(r.accuracy.count),
                        field(r.accuracy.mean), field(r.accuracy.std),
                        opt(r.random_accuracy, r.random_accuracy.mean),
                        opt(r.random_accuracy, r.random_accuracy.std),
                        opt(r.full_accuracy, r.full_accuracy.mean),
                        opt(r.full_accuracy, r.full_accuracy.std)});
      }
      break;
  }
  return out.str();
}

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.starts_with("#")) {
      continue;
    }
    rows.push_back(detail::split_csv_line(line));
  }
  return rows;
}

}  // namespace alsubset
