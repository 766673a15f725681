#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "alsubset/learner.hpp"
#include "alsubset/subset_state.hpp"

using namespace alsubset;

namespace {

LabeledPool random_pool(std::mt19937_64& gen, std::size_t n, std::size_t d, int k) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n * d);
  for (auto& v : x) {
    v = normal(gen);
  }
  std::vector<ClassIndex> y(n);
  std::vector<SampleId> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<ClassIndex>(gen() % static_cast<std::uint64_t>(k));
    ids[i] = 1000 + i;
  }
  return LabeledPool(d, k, x, y, ids);
}

// Two well-separated Gaussian blobs.
LabeledPool blobs(std::uint64_t seed, std::size_t per_class) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<double> x;
  std::vector<ClassIndex> y;
  std::vector<SampleId> ids;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int c = static_cast<int>(i % 2);
    x.push_back((c == 0 ? -1.5 : 1.5) + normal(gen));
    x.push_back(normal(gen));
    y.push_back(c);
    ids.push_back(i);
  }
  return LabeledPool(2, 2, x, y, ids);
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

TrainConfig small_config() {
  TrainConfig c;
  c.max_epochs = 15;
  c.harvest_window = 5;
  c.batch_size = 8;
  return c;
}

}  // namespace

TEST_SUITE("learner") {
  TEST_CASE("architecture tags") {
    CHECK(parse_architecture("logistic").kind == ArchitectureKind::logistic);
    CHECK(parse_architecture("mlp-16").hidden == 16);
    CHECK(to_string(parse_architecture("mlp-16")) == "mlp-16");
    CHECK_THROWS_AS(parse_architecture("mlp-"), ConfigError);
    CHECK_THROWS_AS(parse_architecture("cnn"), ConfigError);
    CHECK(parameter_count(parse_architecture("logistic"), 3, 4) == 16);
    CHECK(parameter_count(parse_architecture("mlp-5"), 3, 4) == 5 * 3 + 5 + 4 * 5 + 4);
  }

  TEST_CASE("predict_proba") {
    const auto zero = zero_params(parse_architecture("logistic"), 3, 4);
    for (double p : predict_proba(zero, std::vector<double>{1.0, -2.0, 5.0})) {
      CHECK(p == 0.25);
    }
    const auto zmlp = zero_params(parse_architecture("mlp-4"), 3, 5);
    for (double p : predict_proba(zmlp, std::vector<double>{1.0, -2.0, 5.0})) {
      CHECK(p == doctest::Approx(0.2));
    }

    // Two classes, one feature: logit difference ln 3 at x = 1.
    auto m = zero_params(parse_architecture("logistic"), 1, 2);
    m.weights[0] = std::log(3.0);
    const auto p = predict_proba(m, std::vector<double>{1.0});
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));

    // Shifting every logit by a constant (through the biases).
    auto shifted = m;
    shifted.weights[2] += 40.0;
    shifted.weights[3] += 40.0;
    const auto q = predict_proba(shifted, std::vector<double>{1.0});
    CHECK(q[0] == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS(predict_proba(m, std::vector<double>{1.0, 2.0}));

    std::mt19937_64 gen(4);
    for (int i = 0; i < 50; ++i) {
      const auto r = init_params(parse_architecture("mlp-7"), 5, 3, gen());
      std::vector<double> x(5);
      for (auto& v : x) {
        v = static_cast<double>(gen() % 2000) / 100.0 - 10.0;
      }
      const auto probs = predict_proba(r, x);
      double sum = 0.0;
      for (double v : probs) {
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }

  TEST_CASE("gradient matches finite differences") {
    std::mt19937_64 gen(8);
    for (const auto* tag : {"logistic", "mlp-6"}) {
      for (int trial = 0; trial < 10; ++trial) {
        const auto pool = random_pool(gen, 7, 4, 3);
        auto params = init_params(parse_architecture(tag), 4, 3, gen());
        for (auto& w : params.weights) {
          w += 0.1 * static_cast<double>(static_cast<int>(gen() % 21) - 10) / 10.0;
        }
        std::vector<WeightedExample> batch;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          batch.push_back({pool.features(i), pool.label(i), 0.5 + static_cast<double>(i % 3)});
        }
        std::vector<double> grad;
        objective(params, batch, 1e-3, &grad);
        for (std::size_t i = 0; i < params.weights.size(); ++i) {
          auto plus = params;
          auto minus = params;
          plus.weights[i] += 1e-5;
          minus.weights[i] -= 1e-5;
          const double fd = (objective(plus, batch, 1e-3, nullptr) -
                             objective(minus, batch, 1e-3, nullptr)) /
                            2e-5;
          CHECK(relative_error(grad[i], fd) < 1e-4);
        }
      }
    }
  }

  TEST_CASE("uniform class frequencies make weighting a no-op") {
    LabeledPool pool(1, 2, {0.1, 0.2, 0.3, 0.4}, {0, 1, 1, 0}, {1, 2, 3, 4});
    const std::vector<SampleId> ids{1, 2, 3, 4};
    const auto w = inverse_frequency_weights(pool, ids);
    CHECK(w == std::vector<double>{1.0, 1.0});
    const auto params = init_params(parse_architecture("logistic"), 1, 2, 3);
    SubsetState all(ids);
    CHECK(epoch_gradient(params, pool, all, true) == epoch_gradient(params, pool, all, false));

    const std::vector<SampleId> skewed{1, 2, 3};
    const auto v = inverse_frequency_weights(pool, skewed);
    CHECK(v[0] == doctest::Approx(1.5));
    CHECK(v[1] == doctest::Approx(0.75));
  }

  TEST_CASE("multiplicity two doubles the epoch gradient") {
    std::mt19937_64 gen(12);
    const auto pool = random_pool(gen, 10, 3, 3);
    for (const auto* tag : {"logistic", "mlp-4"}) {
      const auto params = init_params(parse_architecture(tag), 3, 3, 5);
      SubsetState once;
      once.add(1004);
      SubsetState twice;
      twice.add(1004, 2);
      const auto g1 = epoch_gradient(params, pool, once, false);
      const auto g2 = epoch_gradient(params, pool, twice, false);
      for (std::size_t i = 0; i < g1.size(); ++i) {
        CHECK(g2[i] == 2.0 * g1[i]);
      }
    }
  }

  TEST_CASE("linearly separable points are fit") {
    LabeledPool pool(2, 2, {0.0, 0.0, 1.0, 0.0, 3.0, 3.0, 4.0, 3.0}, {0, 0, 1, 1}, {0, 1, 2, 3});
    // Independent check: a perceptron with bias converges on these points.
    double w0 = 0.0, w1 = 0.0, b = 0.0;
    bool converged = false;
    for (int pass = 0; pass < 100 && !converged; ++pass) {
      converged = true;
      for (std::size_t i = 0; i < 4; ++i) {
        const double s = pool.label(i) == 1 ? 1.0 : -1.0;
        const auto x = pool.features(i);
        if (s * (w0 * x[0] + w1 * x[1] + b) <= 0.0) {
          w0 += s * x[0];
          w1 += s * x[1];
          b += s;
          converged = false;
        }
      }
    }
    REQUIRE(converged);

    TrainConfig config;
    config.max_epochs = 200;
    config.validation_fraction = 0.0;
    config.batch_size = 2;
    const auto run = train(pool, SubsetState(pool.ids()), config, 3);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(argmax(predict_proba(run.final.params, pool.features(i))) == pool.label(i));
    }
  }

  TEST_CASE("training is deterministic") {
    const auto pool = blobs(1, 40);
    for (const auto* tag : {"logistic", "mlp-8"}) {
      auto config = small_config();
      config.arch = parse_architecture(tag);
      SubsetState subset(pool.ids());
      subset.add(3, 2);
      const auto a = train(pool, subset, config, 77);
      const auto b = train(pool, subset, config, 77);
      CHECK(a.final.params.weights == b.final.params.weights);
      CHECK(a.train_loss == b.train_loss);
      const auto c = train(pool, subset, config, 78);
      CHECK(a.final.params.weights != c.final.params.weights);
    }
  }

  TEST_CASE("harvest window and best checkpoint") {
    const auto pool = blobs(2, 40);
    auto config = small_config();
    const auto run = train(pool, SubsetState(pool.ids()), config, 5);
    REQUIRE(run.checkpoints.size() == 5);
    CHECK(run.checkpoints.front().epoch == 11);
    CHECK(run.checkpoints.back().epoch == 15);
    CHECK(run.final.epoch == 15);
    CHECK(run.epochs_run == 15);
    const double best_acc = *std::max_element(run.validation_accuracy.begin(),
                                              run.validation_accuracy.end());
    // Ties go to the later epoch.
    std::uint32_t last_best = 0;
    for (std::size_t e = 0; e < run.validation_accuracy.size(); ++e) {
      if (run.validation_accuracy[e] == best_acc) {
        last_best = static_cast<std::uint32_t>(e + 1);
      }
    }
    CHECK(run.best.epoch == last_best);
    CHECK(run.final.subset_hash == SubsetState(pool.ids()).hash());
  }

  TEST_CASE("validation split") {
    std::vector<SampleId> ids(100);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ids[i] = i * 7;
    }
    SubsetState s(ids);
    const auto a = validation_split(s, 0.1, 1);
    CHECK(a.size() == 10);
    CHECK(a == validation_split(s, 0.1, 1));
    CHECK(a != validation_split(s, 0.1, 2));
    CHECK(validation_split(s, 0.0, 1).empty());
    for (SampleId id : a) {
      CHECK(s.contains(id));
    }
  }

  TEST_CASE("patience stops a stalled run") {
    const auto pool = blobs(3, 30);
    auto config = small_config();
    config.max_epochs = 200;
    config.patience = 3;
    const auto run = train(pool, SubsetState(pool.ids()), config, 1);
    CHECK(run.epochs_run < 200);
    CHECK(run.train_loss.size() == run.epochs_run);
  }

  TEST_CASE("loss is non-increasing without momentum at a small rate") {
    const auto pool = blobs(4, 30);
    auto config = small_config();
    config.momentum = 0.0;
    config.learning_rate = 0.01;
    config.max_epochs = 30;
    config.validation_fraction = 0.0;
    config.batch_size = 60;
    const auto run = train(pool, SubsetState(pool.ids()), config, 2);
    for (std::size_t e = 1; e < run.train_loss.size(); ++e) {
      CHECK(run.train_loss[e] <= run.train_loss[e - 1]);
    }
  }

  TEST_CASE("fine tuning") {
    const auto pool = blobs(5, 40);
    auto config = small_config();
    const auto base = train(pool, SubsetState(pool.ids()), config, 9);

    std::vector<SampleId> half(pool.ids().begin(), pool.ids().begin() + 40);
    SubsetState subset(half);

    auto zero_epochs = config;
    zero_epochs.finetune_epochs = 0;
    const auto none = fine_tune(pool, subset, base.final.params, zero_epochs, 1);
    CHECK(none.final.params == base.final.params);

    auto zero_rate = config;
    zero_rate.finetune_rate = 0.0;
    const auto still = fine_tune(pool, subset, base.final.params, zero_rate, 1);
    CHECK(still.final.params == base.final.params);

    auto tune = config;
    tune.finetune_epochs = 10;
    tune.finetune_rate = 1e-2;
    const auto tuned = fine_tune(pool, subset, init_params(config.arch, 2, 2, 4), tune, 1);
    CHECK(tuned.train_loss.back() < tuned.train_loss.front());

    const auto wrong = zero_params(config.arch, 3, 2);
    CHECK_THROWS(fine_tune(pool, subset, wrong, config, 1));
  }

  TEST_CASE("training errors") {
    const auto pool = blobs(6, 10);
    CHECK_THROWS(train(pool, SubsetState{}, small_config(), 1));
    auto bad = small_config();
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(pool, SubsetState(pool.ids()), bad, 1), ConfigError);

    LabeledPool wild(1, 2, {1e150, 1e150}, {0, 1}, {1, 2});
    auto hot = small_config();
    hot.learning_rate = 1e10;
    hot.validation_fraction = 0.0;
    hot.weight_decay = 0.0;
    CHECK_THROWS_AS(train(wild, SubsetState(wild.ids()), hot, 1), std::runtime_error);
  }

  TEST_CASE("ensemble assembly") {
    const auto pool = blobs(7, 20);
    auto config = small_config();
    config.harvest_window = 20;
    config.max_epochs = 20;
    CheckpointStore store;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      store.add_run(train(pool, SubsetState(pool.ids()), config, seed * 10));
    }
    EnsembleConfig seeds{EnsembleMode::seeds, 5, 1, 1};
    CHECK(build_ensemble(store, seeds).size() == 5);
    EnsembleConfig combined{EnsembleMode::combined, 5, 20, 1};
    CHECK(combined.member_count() == 100);
    CHECK(build_ensemble(store, combined).size() == 100);
    EnsembleConfig one{EnsembleMode::checkpoints, 1, 1, 1};
    EnsembleConfig single{EnsembleMode::single, 1, 1, 1};
    CHECK(build_ensemble(store, one) == build_ensemble(store, single));

    EnsembleConfig strided{EnsembleMode::checkpoints, 1, 4, 5};
    const auto members = build_ensemble(store, strided);
    REQUIRE(members.size() == 4);
    CHECK(members[0] == store.at(10, 5).params);
    CHECK(members[3] == store.at(10, 20).params);

    CHECK_THROWS_AS(build_ensemble(store, EnsembleConfig{EnsembleMode::seeds, 6, 1, 1}),
                    std::out_of_range);
    CHECK_THROWS_AS(build_ensemble(store, EnsembleConfig{EnsembleMode::checkpoints, 1, 21, 1}),
                    std::out_of_range);
  }

  TEST_CASE("predict_pool") {
    const auto pool = blobs(8, 10);
    const auto a = init_params(parse_architecture("logistic"), 2, 2, 1);
    const auto b = init_params(parse_architecture("logistic"), 2, 2, 2);
    const std::vector<SampleId> ids{3, 0, 7};
    const std::vector<ModelParams> one{a};
    const auto t1 = predict_pool(one, pool, ids);
    for (std::size_t n = 0; n < ids.size(); ++n) {
      const auto p = predict_proba(a, pool.features(pool.index_of(ids[n])));
      CHECK(t1.slice(n)[0] == static_cast<float>(p[0]));
      CHECK(t1.slice(n)[1] == static_cast<float>(p[1]));
    }
    const std::vector<ModelParams> ab{a, b};
    const std::vector<ModelParams> ba{b, a};
    const auto tab = predict_pool(ab, pool, ids);
    const auto tba = predict_pool(ba, pool, ids);
    for (std::size_t n = 0; n < ids.size(); ++n) {
      CHECK(tab.slice(n)[0] == tba.slice(n)[2]);
      CHECK(tab.slice(n)[3] == tba.slice(n)[1]);
    }
    const std::vector<ModelParams> mismatched{zero_params(parse_architecture("logistic"), 3, 2)};
    CHECK_THROWS(predict_pool(mismatched, pool, ids));
    const std::vector<SampleId> unknown{999};
    CHECK_THROWS_AS(predict_pool(one, pool, unknown), std::out_of_range);
  }
}
