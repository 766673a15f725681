#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "alsubset/experiment.hpp"
#include "alsubset/text_util.hpp"

using namespace alsubset;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"(# small end-to-end run
experiment.name = small
experiment.seeds = 1, 2, 3
experiment.consensus_members = 4
generator.classes = 3
generator.clusters_per_class = 1
generator.samples_per_cluster = 60
generator.dim = 4
generator.test_size = 90
generator.redundancy = 0.2
search.scheme = build_up
search.function = entropy
search.target_size = 80
ensemble.mode = combined
ensemble.runs = 2
ensemble.checkpoints = 3
train.max_epochs = 10
train.harvest_window = 5
)";

std::string strip_volatile(std::string doc) {
  doc = std::regex_replace(doc, std::regex(R"("created":"[^"]*")"), "");
  return std::regex_replace(doc, std::regex(R"("wall_time_s":[-0-9.eE+]+)"), "");
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("alsubset_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("key value parsing") {
    const auto kv = KeyValueConfig::parse("a.b = 1  # note\n\n c = x, y ,z\nflag = on\n");
    CHECK(kv.get_int("a.b", 0) == 1);
    CHECK(kv.get_strings("c") == std::vector<std::string>{"x", "y", "z"});
    CHECK(kv.get_bool("flag", false));
    CHECK(kv.get_double("missing", 2.5) == 2.5);
    CHECK(kv.canonical_text() == "a.b = 1\nc = x, y ,z\nflag = on\n");
    CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("novalue\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("n = abc\n").get_int("n", 0), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("n = maybe\n").get_bool("n", false), ConfigError);
  }

  TEST_CASE("experiment config") {
    const auto c = parse_experiment_config(KeyValueConfig::parse(kSmallConfig));
    CHECK(c.name == "small");
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(c.search.scheme == Scheme::build_up);
    CHECK(c.search.ensemble.member_count() == 6);
    CHECK(c.generator.pool_size() == 180);
    CHECK(c.hash() == fnv1a64(c.canonical));

    // Comments and ordering do not change the hash.
    const auto reordered = parse_experiment_config(KeyValueConfig::parse(
        std::string("train.harvest_window = 5\n") + std::regex_replace(
            kSmallConfig, std::regex("train.harvest_window = 5\n"), "")));
    CHECK(reordered.hash() == c.hash());

    CHECK_THROWS_AS(parse_experiment_config(KeyValueConfig::parse("search.sheme = build_up\n")),
                    ConfigError);
    CHECK_THROWS_AS(
        parse_experiment_config(KeyValueConfig::parse(std::string(kSmallConfig) + "x = 1\n")),
        ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(KeyValueConfig::parse(
                        std::regex_replace(kSmallConfig, std::regex("1, 2, 3"), "1, 1"))),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(KeyValueConfig::parse(
                        std::regex_replace(kSmallConfig, std::regex("redundancy = 0.2"),
                                           "redundancy = 1.5"))),
                    ConfigError);
  }
}

TEST_SUITE("generator") {
  TEST_CASE("clean pool") {
    GeneratorSpec spec;
    spec.classes = 3;
    spec.samples_per_cluster = 20;
    spec.test_size = 31;
    const auto g = generate_pool(spec);
    CHECK(g.pool.size() == 120);
    CHECK(g.test.size() == 31);
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < g.pool.size(); ++i) {
      const auto f = g.pool.features(i);
      rows.insert({f.begin(), f.end()});
      const auto& m = g.meta[i];
      CHECK(m.id == g.pool.id(i));
      CHECK(!m.redundant);
      CHECK(!m.noisy);
      CHECK(g.pool.label(i) == m.true_label);
      CHECK(static_cast<int>(m.cluster / spec.clusters_per_class) == m.true_label);
    }
    CHECK(rows.size() == 120);
  }

  TEST_CASE("redundancy and noise accounting") {
    GeneratorSpec spec;
    spec.classes = 4;
    spec.clusters_per_class = 5;
    spec.samples_per_cluster = 50;
    spec.redundancy = 0.5;
    spec.label_noise = 0.1;
    const auto g = generate_pool(spec);
    REQUIRE(g.pool.size() == 1000);
    std::size_t copies = 0;
    std::size_t noisy = 0;
    for (std::size_t i = 0; i < g.pool.size(); ++i) {
      const auto& m = g.meta[i];
      copies += m.redundant ? 1 : 0;
      noisy += m.noisy ? 1 : 0;
      CHECK((g.pool.label(i) != m.true_label) == m.noisy);
      if (m.redundant) {
        const auto& src = g.meta[g.pool.index_of(m.source)];
        CHECK(!src.redundant);
        CHECK(src.true_label == m.true_label);
        const auto a = g.pool.features(i);
        const auto b = g.pool.features(g.pool.index_of(m.source));
        for (std::size_t d = 0; d < spec.dim; ++d) {
          CHECK(std::abs(a[d] - b[d]) < 0.1);
        }
      }
    }
    CHECK(copies == 500);
    CHECK(noisy == 100);
  }

  TEST_CASE("imbalance and determinism") {
    GeneratorSpec spec;
    spec.classes = 2;
    spec.clusters_per_class = 1;
    spec.samples_per_cluster = 100;
    spec.imbalance = {3.0, 1.0};
    spec.seed = 9;
    const auto a = generate_pool(spec);
    const auto b = generate_pool(spec);
    CHECK(a.pool.feature_matrix() == b.pool.feature_matrix());
    CHECK(a.pool.labels() == b.pool.labels());
    CHECK(std::count(a.pool.labels().begin(), a.pool.labels().end(), 0) == 150);
    spec.seed = 10;
    CHECK(generate_pool(spec).pool.feature_matrix() != a.pool.feature_matrix());

    spec.imbalance = {1.0};
    CHECK_THROWS_AS(generate_pool(spec), ConfigError);
    spec.imbalance = {1.0, 0.0};
    CHECK_THROWS_AS(generate_pool(spec), ConfigError);
    spec.imbalance.clear();
    spec.samples_per_cluster = 0;
    CHECK_THROWS_AS(generate_pool(spec), ConfigError);
  }
}

TEST_SUITE("experiment") {
  TEST_CASE("run, persist, reload") {
    const auto config = parse_experiment_config(KeyValueConfig::parse(kSmallConfig));
    const auto record = run_experiment(config, 2);
    REQUIRE(record.trials.size() == 3);
    for (const auto& t : record.trials) {
      CHECK(t.ok);
      CHECK(t.iterations.size() == 4);
      CHECK(t.random_accuracy.has_value());
      CHECK(!t.full_accuracy.has_value());
      REQUIRE(t.consensus.has_value());
      CHECK(t.consensus->cumulative.size() == 4);
      CHECK(t.consensus->cumulative.front() == t.consensus->eval_size);
      CHECK(t.histogram.total_count() == 80);
    }
    CHECK(record.accuracy.count == 3);

    // Identical documents apart from timestamps and timings, for any job count.
    const auto again = run_experiment(config, 1);
    CHECK(strip_volatile(results_document(record, "t1")) ==
          strip_volatile(results_document(again, "t2")));

    const auto doc = results_document(record, "2026-01-01T00:00:00Z");
    CHECK(doc.find("\"schema_version\":1") != std::string::npos);
    const auto parsed = parse_results_document(doc);
    CHECK(results_document(parsed, "2026-01-01T00:00:00Z") == doc);

    const auto dir = temp_dir("results");
    const auto path = append_results(dir, record, "a");
    append_results(dir, again, "b");
    CHECK(path.filename().string().starts_with("results_"));
    const auto loaded = load_results(dir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].accuracy.mean == record.accuracy.mean);

    // Same hash, different config text.
    auto forged = record;
    forged.config_text += "extra = 1\n";
    CHECK_THROWS_AS(append_results(dir, forged, "c"), std::runtime_error);
    fs::remove_all(dir);
  }

  TEST_CASE("failed trials are recorded") {
    auto config = parse_experiment_config(KeyValueConfig::parse(kSmallConfig));
    config.pool_path = "/nonexistent/pool.csv";
    const auto record = run_experiment(config);
    for (const auto& t : record.trials) {
      CHECK(!t.ok);
      CHECK(!t.error.empty());
    }
    CHECK(record.accuracy.count == 0);
  }

  TEST_CASE("summary statistics") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto s = summarize(v);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    CHECK(summarize(std::vector<double>{7.0}).std == 0.0);
  }

  TEST_CASE("plot export") {
    CHECK_THROWS_AS(parse_plot_kind("bars"), ConfigError);
    const std::vector<ResultsRecord> none;
    for (auto kind : {PlotKind::learning_curve, PlotKind::consensus, PlotKind::histogram,
                      PlotKind::scheme_comparison}) {
      const auto csv = export_plot_data(none, kind);
      CHECK(csv.starts_with("# columns:"));
      CHECK(parse_csv_rows(csv).size() == 1);
    }

    std::vector<ResultsRecord> records;
    for (const auto* scheme : {"pretrain", "compress", "build_up", "automatic_duplication"}) {
      for (std::size_t size : {100u, 200u, 400u}) {
        ResultsRecord r;
        r.name = "grid";
        r.scheme = scheme;
        r.function = "entropy";
        r.target_size = size;
        r.accuracy = {3, 0.1 + static_cast<double>(size) / 1000.0, 1.0 / 3.0};
        r.random_accuracy = {3, 0.123456789012345678, 0.01};
        records.push_back(r);
      }
    }
    const auto rows = parse_csv_rows(export_plot_data(records, PlotKind::scheme_comparison));
    REQUIRE(rows.size() == 13);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& row = rows[i + 1];
      CHECK(row[1] == records[i].scheme);
      CHECK(detail::parse_number<std::size_t>(row[3]) == records[i].target_size);
      CHECK(detail::parse_number<double>(row[5]) == records[i].accuracy.mean);
      CHECK(detail::parse_number<double>(row[6]) == records[i].accuracy.std);
      CHECK(detail::parse_number<double>(row[7]) == records[i].random_accuracy.mean);
      CHECK(row[9].empty());
    }
  }

  TEST_CASE("learning curve and histogram export round trip") {
    const auto config = parse_experiment_config(KeyValueConfig::parse(kSmallConfig));
    const std::vector<ResultsRecord> records{run_experiment(config)};
    const auto curve = parse_csv_rows(export_plot_data(records, PlotKind::learning_curve));
    REQUIRE(curve.size() == 1 + 3 * 4);
    std::size_t row = 1;
    for (const auto& t : records[0].trials) {
      for (const auto& it : t.iterations) {
        CHECK(detail::parse_number<std::uint64_t>(curve[row][4]) == t.seed);
        CHECK(detail::parse_number<std::size_t>(curve[row][6]) == it.unique_count);
        CHECK(detail::parse_number<double>(curve[row][8]) == *it.eval_accuracy);
        ++row;
      }
    }
    const auto hist = parse_csv_rows(export_plot_data(records, PlotKind::histogram));
    CHECK(hist.size() == 1 + 3);
    const auto cons = parse_csv_rows(export_plot_data(records, PlotKind::consensus));
    CHECK(cons.size() == 1 + 3 * 4);
  }
}
