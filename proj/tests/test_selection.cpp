#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "alsubset/analysis.hpp"
#include "alsubset/selection.hpp"
#include "alsubset/subset_state.hpp"

using namespace alsubset;

namespace {

AcquisitionScores make_scores(std::vector<double> scores) {
  AcquisitionScores s;
  s.function = AcquisitionFunction::entropy;
  s.scores = std::move(scores);
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    s.sample_ids.push_back(i);
  }
  return s;
}

AcquisitionScores random_score_set(std::mt19937_64& gen, std::size_t n, bool ties) {
  AcquisitionScores s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.sample_ids.push_back(gen() % 100000);
    s.scores.push_back(ties ? std::floor(u(gen) * 5.0) : u(gen));
  }
  std::sort(s.sample_ids.begin(), s.sample_ids.end());
  s.sample_ids.erase(std::unique(s.sample_ids.begin(), s.sample_ids.end()), s.sample_ids.end());
  s.scores.resize(s.sample_ids.size());
  return s;
}

}  // namespace

TEST_SUITE("selection") {
  TEST_CASE("top-k with ties and edge sizes") {
    const auto s = make_scores({0.9, 0.1, 0.5, 0.5});
    CHECK(select_top_k(s, 2) == std::vector<SampleId>{0, 2});
    CHECK(select_top_k(s, 4) == std::vector<SampleId>{0, 2, 3, 1});
    CHECK(select_top_k(s, 0).empty());
    CHECK_THROWS_AS(select_top_k(s, 5), std::invalid_argument);
    CHECK(select_top_k(s, 2, {0}) == std::vector<SampleId>{2, 3});
    CHECK_THROWS(select_top_k(s, 4, {0}));
  }

  TEST_CASE("non-finite scores are rejected") {
    CHECK_THROWS(select_top_k(make_scores({0.1, NAN}), 1));
    CHECK_THROWS(select_top_k(make_scores({0.1, INFINITY}), 1));
  }

  TEST_CASE("exclusion equals restriction") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = random_score_set(gen, 60, trial % 2 == 0);
      IdSet excluded;
      AcquisitionScores restricted;
      for (std::size_t i = 0; i < s.sample_ids.size(); ++i) {
        if (gen() % 3 == 0) {
          excluded.insert(s.sample_ids[i]);
        } else {
          restricted.sample_ids.push_back(s.sample_ids[i]);
          restricted.scores.push_back(s.scores[i]);
        }
      }
      const std::size_t k = restricted.sample_ids.size() / 2;
      CHECK(select_top_k(s, k, excluded) == select_top_k(restricted, k));
    }
  }

  TEST_CASE("selection depends only on score order") {
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 50; ++trial) {
      const auto s = random_score_set(gen, 40, trial % 2 == 1);
      auto t = s;
      for (auto& v : t.scores) {
        v = std::exp(3.0 * v) - 7.0;
      }
      CHECK(select_top_k(s, 15) == select_top_k(t, 15));
      CHECK(outlier_window_select(s, 10, 0.2) == outlier_window_select(t, 10, 0.2));
    }
  }

  TEST_CASE("outlier window") {
    const auto s = make_scores({0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1});
    CHECK(outlier_window_select(s, 4, 0.25) == std::vector<SampleId>{2, 3, 4, 5});
    CHECK(outlier_window_select(s, 4, 0.0) == select_top_k(s, 4));
    CHECK_THROWS(outlier_window_select(s, 3, 0.75));
    CHECK_THROWS(outlier_window_select(s, 1, 1.0));
    CHECK_THROWS(outlier_window_select(s, 1, -0.1));
  }

  TEST_CASE("growth schedule") {
    CHECK(growth_schedule(400) == std::vector<std::size_t>{50, 100, 200, 400});
    CHECK(growth_schedule(8) == std::vector<std::size_t>{1, 2, 4, 8});
    CHECK(growth_schedule(25) == std::vector<std::size_t>{3, 6, 12, 25});
    CHECK(growth_schedule(25000) == std::vector<std::size_t>{3125, 6250, 12500, 25000});
    CHECK_THROWS(growth_schedule(7));
  }
}

TEST_SUITE("subset_state") {
  TEST_CASE("counts and multiplicities") {
    SubsetState s;
    CHECK(s.empty());
    s.add(5);
    s.add(3, 2);
    s.add(5);
    CHECK(s.unique_count() == 2);
    CHECK(s.total_count() == 4);
    CHECK(s.multiplicity(5) == 2);
    CHECK(s.multiplicity(9) == 0);
    CHECK(s.ids() == std::vector<SampleId>{3, 5});
    CHECK(s.expanded() == std::vector<SampleId>{3, 3, 5, 5});
    CHECK_THROWS(s.add(1, 0));
  }

  TEST_CASE("hash is insertion-order independent") {
    SubsetState a;
    a.add(1);
    a.add(2, 3);
    SubsetState b;
    b.add(2);
    b.add(1);
    b.add(2, 2);
    CHECK(a == b);
    CHECK(a.hash() == b.hash());
    b.add(7);
    CHECK(a.hash() != b.hash());
  }

  TEST_CASE("csv round trip") {
    SubsetState s;
    s.add(10, 3);
    s.add(2);
    std::stringstream io;
    write_subset_csv(io, s);
    CHECK(io.str() == "sample_id,multiplicity\n2,1\n10,3\n");
    CHECK(read_subset_csv(io) == s);
    std::stringstream bad("sample_id,multiplicity\n1,0\n");
    CHECK_THROWS(read_subset_csv(bad));
  }

  TEST_CASE("histogram accounting and inversion") {
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 50; ++trial) {
      SubsetState s;
      for (int i = 0; i < 200; ++i) {
        s.add(gen() % 80, 1 + static_cast<std::uint32_t>(gen() % 3));
      }
      const auto h = duplication_histogram(s);
      std::size_t weighted = 0;
      for (const auto& [m, count] : h.frames) {
        weighted += m * count;
      }
      CHECK(weighted == s.total_count());
      CHECK(h.total_count() == s.total_count());
      CHECK(h.unique_count() == s.unique_count());

      SubsetState rebuilt;
      SampleId next = 0;
      for (const auto& [m, count] : h.frames) {
        for (std::size_t i = 0; i < count; ++i) {
          rebuilt.add(next++, m);
        }
      }
      CHECK(duplication_histogram(rebuilt).frames == h.frames);
    }
  }

  TEST_CASE("duplication table arithmetic") {
    // Frames in thousands per multiplicity, one row per iteration.
    struct Row {
      std::map<std::uint32_t, std::size_t> frames;
      std::size_t unique;
      std::size_t total;
    };
    const std::vector<Row> rows{
        {{{1, 100}}, 100, 100},
        {{{1, 254}, {2, 23}}, 277, 300},
        {{{1, 223}, {2, 119}, {3, 13}}, 355, 500},
    };
    for (const auto& row : rows) {
      DuplicationHistogram h{row.frames};
      CHECK(h.unique_count() == row.unique);
      CHECK(h.total_count() == row.total);
    }
    // The last reported row is rounded in the table: 702k against 700k.
    DuplicationHistogram last{{{1, 207}, {2, 103}, {3, 83}, {4, 9}}};
    CHECK(last.unique_count() == 402);
    CHECK(last.total_count() == 698);
  }
}
