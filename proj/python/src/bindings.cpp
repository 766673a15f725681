#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <chrono>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include "alsubset/acquisition.hpp"
#include "alsubset/analysis.hpp"
#include "alsubset/experiment.hpp"
#include "alsubset/generator.hpp"
#include "alsubset/rng.hpp"
#include "alsubset/schemes.hpp"
#include "alsubset/selection.hpp"

namespace py = pybind11;
using namespace alsubset;

namespace {

using Rows = std::vector<std::vector<double>>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using I64Array = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

PredictionTensor to_tensor(const F32Array& probs, std::optional<std::vector<SampleId>> ids) {
  if (probs.ndim() != 3) {
    throw std::invalid_argument("probabilities must have shape (samples, members, classes)");
  }
  const auto n = static_cast<std::size_t>(probs.shape(0));
  std::vector<SampleId> sample_ids;
  if (ids) {
    sample_ids = std::move(*ids);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      sample_ids.push_back(i);
    }
  }
  std::vector<float> data(probs.data(), probs.data() + probs.size());
  return PredictionTensor(static_cast<std::size_t>(probs.shape(1)),
                          static_cast<std::size_t>(probs.shape(2)), std::move(sample_ids),
                          std::move(data));
}

LabeledPool to_pool(const F64Array& features, const I64Array& labels, int classes) {
  if (features.ndim() != 2 || labels.ndim() != 1 || labels.shape(0) != features.shape(0)) {
    throw std::invalid_argument("features must be (n, dim) and labels (n,)");
  }
  const auto n = static_cast<std::size_t>(features.shape(0));
  std::vector<ClassIndex> y(labels.data(), labels.data() + n);
  std::vector<SampleId> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = i;
  }
  return LabeledPool(static_cast<std::size_t>(features.shape(1)), classes,
                     std::vector<double>(features.data(), features.data() + features.size()),
                     std::move(y), std::move(ids));
}

py::dict pool_dict(const LabeledPool& pool, const std::string& prefix, py::dict out) {
  F64Array x({static_cast<py::ssize_t>(pool.size()), static_cast<py::ssize_t>(pool.dim())});
  std::copy(pool.feature_matrix().begin(), pool.feature_matrix().end(), x.mutable_data());
  out[(prefix + "features").c_str()] = x;
  out[(prefix + "labels").c_str()] = py::array(py::cast(pool.labels()));
  out[(prefix + "ids").c_str()] = py::array(py::cast(pool.ids()));
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  return parse_experiment_config(KeyValueConfig::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ensemble active-learning subset search";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("p"));
  m.def(
      "predictive_mean",
      [](const Rows& rows) { return predictive_mean(EnsemblePrediction::from_rows(rows)); },
      py::arg("rows"));
  m.def(
      "mutual_information",
      [](const Rows& rows) { return mutual_information(EnsemblePrediction::from_rows(rows)); },
      py::arg("rows"));
  m.def(
      "variation_ratios",
      [](const Rows& rows) { return variation_ratios(EnsemblePrediction::from_rows(rows)); },
      py::arg("rows"));
  m.def(
      "error_count",
      [](const Rows& rows, ClassIndex label) {
        return error_count(EnsemblePrediction::from_rows(rows), label);
      },
      py::arg("rows"), py::arg("label"));

  m.def(
      "score",
      [](const F32Array& probs, const std::string& function,
         std::optional<std::vector<ClassIndex>> labels, std::optional<std::uint64_t> seed,
         std::optional<std::vector<SampleId>> ids) {
        const auto tensor = to_tensor(probs, std::move(ids));
        const auto fn = parse_acquisition_function(function);
        const std::vector<ClassIndex> y = labels.value_or(std::vector<ClassIndex>{});
        const auto s = score_pool(tensor, fn, y, seed);
        return py::make_tuple(py::array(py::cast(s.sample_ids)), py::array(py::cast(s.scores)));
      },
      py::arg("probs"), py::arg("function"), py::arg("labels") = py::none(),
      py::arg("seed") = py::none(), py::arg("ids") = py::none(),
      "Scores an (N, E, K) probability array. Returns (ids, scores).");

  m.def(
      "select_top_k",
      [](std::vector<SampleId> ids, std::vector<double> scores, std::size_t k,
         double outlier_fraction, const std::vector<SampleId>& exclude) {
        AcquisitionScores s;
        s.sample_ids = std::move(ids);
        s.scores = std::move(scores);
        if (s.sample_ids.size() != s.scores.size()) {
          throw std::invalid_argument("ids and scores differ in length");
        }
        const IdSet excluded(exclude.begin(), exclude.end());
        return outlier_fraction > 0.0 ? outlier_window_select(s, k, outlier_fraction, excluded)
                                      : select_top_k(s, k, excluded);
      },
      py::arg("ids"), py::arg("scores"), py::arg("k"), py::arg("outlier_fraction") = 0.0,
      py::arg("exclude") = std::vector<SampleId>{});

  m.def("growth_schedule", &growth_schedule, py::arg("target_size"));

  m.def(
      "consensus_counts",
      [](const F32Array& probs, std::size_t n_max) {
        const auto r = consensus_counts(to_tensor(probs, std::nullopt), n_max);
        py::dict out;
        out["eval_size"] = r.eval_size;
        out["cumulative"] = r.cumulative;
        out["pairwise"] = r.pairwise;
        return out;
      },
      py::arg("probs"), py::arg("n_max"),
      "Agreement counts for (N, E, K) probabilities with members in epoch order.");

  m.def(
      "duplication_histogram",
      [](const std::map<SampleId, std::uint32_t>& counts) {
        SubsetState state;
        for (const auto& [id, c] : counts) {
          state.add(id, c);
        }
        return duplication_histogram(state).frames;
      },
      py::arg("counts"), "Maps {id: multiplicity} to {multiplicity: frames}.");

  m.def(
      "generate_pool",
      [](const std::string& config_text, std::uint64_t seed) {
        const auto config = parse_config(config_text);
        auto spec = config.generator;
        spec.seed = derive_seed(config.generator.seed, {seed});
        GeneratedPool g;
        {
          py::gil_scoped_release release;
          g = generate_pool(spec);
        }
        py::dict out;
        pool_dict(g.pool, "", out);
        pool_dict(g.test, "test_", out);
        std::vector<std::uint8_t> redundant;
        std::vector<std::uint8_t> noisy;
        for (const auto& meta : g.meta) {
          redundant.push_back(meta.redundant ? 1 : 0);
          noisy.push_back(meta.noisy ? 1 : 0);
        }
        out["redundant"] = py::array(py::cast(redundant)).attr("astype")("bool");
        out["noisy"] = py::array(py::cast(noisy)).attr("astype")("bool");
        return out;
      },
      py::arg("config_text"), py::arg("seed"),
      "Synthetic pool from the generator.* keys of a config.");

  m.def(
      "search",
      [](const F64Array& features, const I64Array& labels, const std::string& config_text,
         std::uint64_t seed, std::optional<F64Array> eval_features,
         std::optional<I64Array> eval_labels) {
        const auto config = parse_config(config_text);
        auto search = config.search;
        search.seed = seed;
        const auto pool = to_pool(features, labels, config.generator.classes);
        std::optional<LabeledPool> eval;
        if (eval_features && eval_labels) {
          eval = to_pool(*eval_features, *eval_labels, config.generator.classes);
        }
        SubsetResult r;
        {
          py::gil_scoped_release release;
          r = run_search(pool, search, eval ? &*eval : nullptr);
        }
        py::list iterations;
        for (const auto& it : r.iterations) {
          py::dict d;
          d["index"] = it.index;
          d["unique_count"] = it.unique_count;
          d["total_count"] = it.total_count;
          d["added"] = it.added;
          d["score_min"] = it.score_min;
          d["score_mean"] = it.score_mean;
          d["score_max"] = it.score_max;
          d["eval_accuracy"] = it.eval_accuracy;
          iterations.append(d);
        }
        py::dict out;
        out["subset"] = r.state.counts();
        out["iterations"] = iterations;
        if (eval) {
          out["accuracy"] = evaluate(r.subset_members, *eval).accuracy;
        }
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("config_text"), py::arg("seed"),
      py::arg("eval_features") = py::none(), py::arg("eval_labels") = py::none(),
      "Runs the configured scheme on a pool given as arrays; ids are row indices.");

  m.def(
      "run_experiment",
      [](const std::string& config_text, std::size_t jobs) {
        const auto config = parse_config(config_text);
        ResultsRecord record;
        {
          py::gil_scoped_release release;
          record = run_experiment(config, jobs);
        }
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        return results_document(record, stamp);
      },
      py::arg("config_text"), py::arg("jobs") = 1);

  m.def(
      "export_plot_data",
      [](const std::filesystem::path& results, const std::string& kind) {
        const auto records = load_results(results);
        return export_plot_data(records, parse_plot_kind(kind));
      },
      py::arg("results"), py::arg("kind"),
      "CSV for one plot kind from a results directory or file.");
}
