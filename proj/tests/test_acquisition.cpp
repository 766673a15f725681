#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "alsubset/acquisition.hpp"
#include "oracle.hpp"

using namespace alsubset;

namespace {

EnsemblePrediction ens(const oracle::Rows& rows) { return EnsemblePrediction::from_rows(rows); }

// Rows whose argmaxes are the given classes, K classes, no ties.
oracle::Rows votes_rows(const std::vector<int>& votes, std::size_t k) {
  oracle::Rows rows;
  for (int v : votes) {
    std::vector<double> r(k, 0.1 / static_cast<double>(k - 1));
    r[static_cast<std::size_t>(v)] = 0.9;
    rows.push_back(r);
  }
  return rows;
}

PredictionTensor tensor_from(const std::vector<oracle::Rows>& samples) {
  const std::size_t e = samples.front().size();
  const std::size_t k = samples.front().front().size();
  std::vector<float> data;
  std::vector<SampleId> ids;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    ids.push_back(100 + n);
    for (const auto& r : samples[n]) {
      for (double v : r) {
        data.push_back(static_cast<float>(v));
      }
    }
  }
  return PredictionTensor(e, k, ids, data);
}

oracle::Rows rows_of(const PredictionTensor& t, std::size_t n) {
  oracle::Rows rows(t.members(), std::vector<double>(t.classes()));
  const auto s = t.slice(n);
  for (std::size_t e = 0; e < t.members(); ++e) {
    for (std::size_t k = 0; k < t.classes(); ++k) {
      rows[e][k] = s[e * t.classes() + k];
    }
  }
  return rows;
}

}  // namespace

TEST_SUITE("acquisition") {
  TEST_CASE("predictive mean") {
    CHECK(predictive_mean(ens({{0.3, 0.7}, {0.3, 0.7}})) == std::vector<double>{0.3, 0.7});
    CHECK(predictive_mean(ens({{1, 0}, {0, 1}})) == std::vector<double>{0.5, 0.5});
    const auto m = predictive_mean(ens({{0.6, 0.4}, {0.2, 0.8}}));
    CHECK(m[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(m[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK_THROWS_WITH(predictive_mean(EnsemblePrediction(0, 2, std::vector<double>{})),
                      "empty ensemble");
  }

  TEST_CASE("entropy values and errors") {
    CHECK(entropy(std::vector<double>{1, 0, 0}) == 0.0);
    CHECK(entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(entropy(std::vector<double>{0.7, 0.2, 0.1}) == doctest::Approx(0.801818).epsilon(1e-6));
    CHECK_THROWS_WITH(entropy(std::vector<double>{0.6, 0.6}), "invalid distribution");
    CHECK_THROWS_WITH(entropy(std::vector<double>{1.2, -0.2}), "invalid distribution");
  }

  TEST_CASE("mutual information") {
    CHECK(mutual_information(ens({{0.2, 0.8}, {0.2, 0.8}, {0.2, 0.8}})) == 0.0);
    CHECK(mutual_information(ens({{1, 0}, {0, 1}})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(mutual_information(ens({{0.5, 0.5}, {0.5, 0.5}})) == 0.0);
  }

  TEST_CASE("variation ratios") {
    CHECK(variation_ratios(ens(votes_rows({1, 1, 1}, 3))) == 0.0);
    CHECK(variation_ratios(ens(votes_rows({0, 0, 0, 1, 2}, 3))) == doctest::Approx(0.4));
    const auto two = ens(votes_rows({0, 1}, 2));
    CHECK(variation_ratios(two) == 0.5);
    CHECK(two.mode_vote() == 0);
    // Per-member argmax tie goes to the lower class.
    CHECK(ens({{0.5, 0.5}}).votes() == std::vector<ClassIndex>{0});
  }

  TEST_CASE("error count") {
    CHECK(error_count(ens(votes_rows({2, 2}, 3)), 2) == 0.0);
    CHECK(error_count(ens(votes_rows({0, 0, 1}, 2)), 0) == doctest::Approx(1.0 / 3.0));
    CHECK(error_count(ens(votes_rows({1, 1}, 2)), 0) == 1.0);
    CHECK_THROWS_AS(error_count(ens(votes_rows({1, 1}, 2)), 2), std::out_of_range);
    CHECK_THROWS_AS(error_count(ens(votes_rows({1, 1}, 2)), -1), std::out_of_range);
  }

  TEST_CASE("score_pool matches the oracle on a toy tensor") {
    const auto t = tensor_from({{{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}},
                                {{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}},
                                {{0.25, 0.25, 0.5}, {0.4, 0.4, 0.2}}});
    const std::vector<ClassIndex> labels{1, 0, 2};
    for (std::size_t n = 0; n < 3; ++n) {
      const auto rows = rows_of(t, n);
      CHECK(score_pool(t, AcquisitionFunction::entropy).scores[n] ==
            doctest::Approx(static_cast<double>(oracle::predictive_entropy(rows))).epsilon(1e-9));
      CHECK(std::abs(score_pool(t, AcquisitionFunction::mutual_information).scores[n] -
                     static_cast<double>(oracle::mutual_information(rows))) < 1e-9);
      CHECK(std::abs(score_pool(t, AcquisitionFunction::variation_ratios).scores[n] -
                     static_cast<double>(oracle::variation_ratios(rows))) < 1e-12);
      CHECK(std::abs(score_pool(t, AcquisitionFunction::error_count, labels).scores[n] -
                     static_cast<double>(oracle::error_count(
                         rows, static_cast<std::size_t>(labels[n])))) < 1e-12);
    }
    CHECK(score_pool(t, AcquisitionFunction::entropy).sample_ids ==
          std::vector<SampleId>{100, 101, 102});
  }

  TEST_CASE("score_pool single sample and preconditions") {
    const auto t = tensor_from({{{0.6, 0.4}, {0.2, 0.8}}});
    const auto s = score_pool(t, AcquisitionFunction::entropy);
    REQUIRE(s.scores.size() == 1);
    CHECK(s.scores[0] == entropy(predictive_mean(t.ensemble(0))));
    CHECK_THROWS(score_pool(t, AcquisitionFunction::error_count));
    CHECK_THROWS(score_pool(t, AcquisitionFunction::random));
  }

  TEST_CASE("random scores are seeded") {
    std::mt19937_64 gen(3);
    std::vector<oracle::Rows> samples;
    for (int i = 0; i < 20; ++i) {
      samples.push_back(oracle::random_rows(gen, 3, 4));
    }
    const auto t = tensor_from(samples);
    const auto a = score_pool(t, AcquisitionFunction::random, {}, 42);
    const auto b = score_pool(t, AcquisitionFunction::random, {}, 42);
    const auto c = score_pool(t, AcquisitionFunction::random, {}, 43);
    CHECK(a.scores == b.scores);
    CHECK(a.scores != c.scores);
  }

  TEST_CASE("invariants on random ensembles") {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t e = 1 + gen() % 8;
      const std::size_t k = 2 + gen() % 4;
      const auto rows = oracle::random_rows(gen, e, k);
      const auto base = ens(rows);
      const double h = entropy(predictive_mean(base));
      const double j = mutual_information(base);
      const double v = variation_ratios(base);
      const ClassIndex label = static_cast<ClassIndex>(gen() % k);
      const double err = error_count(base, label);
      CHECK(j >= 0.0);
      CHECK(j <= h + 1e-12);
      CHECK(h <= std::log(static_cast<double>(k)) + 1e-12);

      // Member permutation.
      auto perm = rows;
      std::shuffle(perm.begin(), perm.end(), gen);
      const auto p = ens(perm);
      CHECK(entropy(predictive_mean(p)) == doctest::Approx(h).epsilon(1e-12));
      CHECK(std::abs(mutual_information(p) - j) < 1e-12);
      CHECK(variation_ratios(p) == v);
      CHECK(error_count(p, label) == err);

      // Member duplication.
      auto twice = rows;
      twice.insert(twice.end(), rows.begin(), rows.end());
      const auto d = ens(twice);
      CHECK(entropy(predictive_mean(d)) == doctest::Approx(h).epsilon(1e-12));
      CHECK(std::abs(mutual_information(d) - j) < 1e-12);
      CHECK(variation_ratios(d) == v);
      CHECK(error_count(d, label) == err);

      // Simultaneous class permutation.
      std::vector<std::size_t> sigma(k);
      std::iota(sigma.begin(), sigma.end(), std::size_t{0});
      std::shuffle(sigma.begin(), sigma.end(), gen);
      oracle::Rows moved(e, std::vector<double>(k));
      for (std::size_t m = 0; m < e; ++m) {
        for (std::size_t c = 0; c < k; ++c) {
          moved[m][sigma[c]] = rows[m][c];
        }
      }
      const auto q = ens(moved);
      CHECK(entropy(predictive_mean(q)) == doctest::Approx(h).epsilon(1e-12));
      CHECK(std::abs(mutual_information(q) - j) < 1e-12);
    }
  }

  TEST_CASE("variation ratios is class-permutation invariant without vote ties") {
    const auto rows = votes_rows({0, 2, 2, 1, 2}, 3);
    oracle::Rows moved = rows;
    for (auto& r : moved) {
      std::rotate(r.begin(), r.begin() + 1, r.end());
    }
    CHECK(variation_ratios(ens(rows)) == variation_ratios(ens(moved)));
  }

  TEST_CASE("detection image score") {
    using Maps = std::vector<std::vector<std::vector<double>>>;
    const auto single = make_heatmap_set(Maps{{{0.3}}, {{0.6}}}, 1, 1);
    const auto cell = ens({{0.3, 0.7}, {0.6, 0.4}});
    CHECK(detection_image_score(single, AcquisitionFunction::mutual_information).score ==
          doctest::Approx(mutual_information(cell)).epsilon(1e-12));

    // Score maps with entropy of [q, 1-q]; per-cell values picked so the max
    // is known: H(0.5) is the largest binary entropy.
    const auto one_class = make_heatmap_set(Maps{{{0.95, 0.5, 0.8}}}, 1, 3);
    const auto r = detection_image_score(one_class, AcquisitionFunction::entropy);
    CHECK(r.score == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(r.heatmaps.size() == 3);
    CHECK(r.heatmaps[1] == r.score);

    // Two classes: class 0 peaks lower than class 1.
    const auto two = make_heatmap_set(Maps{{{0.9, 0.95}, {0.99, 0.7}}}, 1, 2);
    const auto s = detection_image_score(two, AcquisitionFunction::entropy);
    CHECK(s.score == doctest::Approx(entropy(std::vector<double>{0.7, 0.3})).epsilon(1e-12));
    CHECK(s.classes == 2);

    CHECK_THROWS(detection_image_score(two, AcquisitionFunction::error_count));
    CHECK_THROWS(make_heatmap_set(Maps{{{0.1, 0.2}}, {{0.1}}}, 1, 2));
  }

  TEST_CASE("detection score is monotone in added cells") {
    using Maps = std::vector<std::vector<std::vector<double>>>;
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> a;
    std::vector<double> b;
    double last = 0.0;
    for (std::size_t w = 1; w <= 12; ++w) {
      a.push_back(u(gen));
      b.push_back(u(gen));
      const auto maps = make_heatmap_set(Maps{{a}, {b}}, 1, w);
      const double s = detection_image_score(maps, AcquisitionFunction::mutual_information).score;
      CHECK(s >= last);
      last = s;
    }
  }

  TEST_CASE("prediction tensor validation") {
    CHECK_THROWS(PredictionTensor(1, 2, {1, 1}, {0.5f, 0.5f, 0.5f, 0.5f}));
    CHECK_THROWS(PredictionTensor(1, 2, {1}, {0.5f, 0.5f, 0.5f}));
  }
}
