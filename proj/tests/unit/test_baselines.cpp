#include "doctest.h"

#include <chrono>
#include <cmath>
#include <iostream>

#include "../support/gradcheck.hpp"
#include "selfcf/baselines.hpp"
#include "selfcf/errors.hpp"

using namespace selfcf;
using namespace selfcf::testing;

TEST_CASE("sampler single valid outcome and exhaustion") {
  std::vector<std::size_t> all_but_7;
  for (std::size_t i = 0; i < 10; ++i) {
    if (i != 7) all_but_7.push_back(i);
  }
  NegativeSampler s({all_but_7, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, 10, 1);
  for (int k = 0; k < 50; ++k) CHECK(s.sample(0) == 7);
  CHECK_THROWS_AS(s.sample(1), ExhaustedSampler);
  CHECK_THROWS_AS(s.sample(2), InvalidIndex);
}

TEST_CASE("sampler frequencies within 3 sigma") {
  // 10 candidate negatives among 25 items.
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < 25; ++i) {
    if (i % 5 != 0 && i % 5 != 3) pos.push_back(i);
  }
  NegativeSampler s({pos}, 25, 99);
  std::vector<int> counts(25, 0);
  for (int k = 0; k < 10000; ++k) ++counts[s.sample(0)];
  const double sigma = std::sqrt(10000 * 0.1 * 0.9);
  for (std::size_t i = 0; i < 25; ++i) {
    if (s.is_positive(0, i)) {
      CHECK(counts[i] == 0);
    } else {
      CHECK(std::abs(counts[i] - 1000) < 3.0 * sigma);
    }
  }
}

TEST_CASE("sampler reseed is deterministic") {
  NegativeSampler a({{1, 2}}, 50, 3), b({{1, 2}}, 50, 4);
  a.reseed(11);
  b.reseed(11);
  for (int k = 0; k < 100; ++k) CHECK(a.sample(0) == b.sample(0));
}

TEST_CASE("sampling cost grows with positive-set size") {
  const std::size_t items = 2000;
  for (std::size_t degree : {10, 500, 1500}) {
    std::vector<std::size_t> pos(degree);
    for (std::size_t k = 0; k < degree; ++k) pos[k] = k;
    NegativeSampler s({pos}, items, 5);
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 0; k < 100000; ++k) s.sample(0);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double expected = 100000.0 * static_cast<double>(degree) / static_cast<double>(items - degree);
    MESSAGE("degree " << degree << ": " << s.rejections() << " rejections, " << ms << " ms");
    CHECK(std::abs(static_cast<double>(s.rejections()) / expected - 1.0) < 0.1);
  }
}

TEST_CASE("bpr pair loss") {
  CHECK(bpr_pair_loss(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(bpr_pair_loss(800.0) == doctest::Approx(0.0));
  CHECK(bpr_pair_loss(-800.0) == doctest::Approx(800.0));
  double prev = bpr_pair_loss(-10.0);
  for (double m = -9.5; m <= 30.0; m += 0.5) {
    const double v = bpr_pair_loss(m);
    CHECK(v > 0.0);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("bpr gradients match finite differences") {
  const auto ds = tiny_dataset();
  const auto batch = tiny_batch();
  for (auto backbone : {Backbone::mf, Backbone::lightgcn}) {
    BprConfig cfg;
    cfg.backbone = backbone;
    cfg.dim = 4;
    cfg.layers = 2;
    cfg.train.l2 = 0.05;
    BprTrainer t(ds, cfg);
    t.sampler().reseed(4);
    const auto neg = t.sampler().sample(batch.users);
    for (std::size_t b = 0; b < batch.size(); ++b) CHECK_FALSE(t.sampler().is_positive(batch.users[b], neg[b]));
    CHECK(bpr_gradient_errors(t, batch, neg).max() < 1e-4);
    CHECK(t.gradients(t.encoder(), batch, neg).loss == doctest::Approx(t.loss(t.encoder(), batch, neg)).epsilon(1e-13));
  }
}

TEST_CASE("bpr equal scores give ln 2") {
  const auto ds = tiny_dataset();
  BprConfig cfg;
  cfg.dim = 4;
  BprTrainer t(ds, cfg);
  auto p = t.encoder();
  p.items.fill(0.5);
  const Batch b{{0, 1}, {0, 2}};
  const std::vector<std::size_t> neg{4, 6};
  CHECK(t.loss(p, b, neg) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("bpr training improves ranking") {
  const auto ds = remap_and_split(make_block_interactions({}));
  BprConfig cfg;
  cfg.dim = 16;
  cfg.train.batch_size = 256;
  cfg.train.learning_rate = 0.01;
  cfg.train.max_epochs = 20;
  cfg.train.seed = 1;
  const auto fit = fit_bpr(ds, cfg);
  CHECK(fit.result.best_val_recall > fit.result.initial_val_recall);
  BprTrainer probe(ds, cfg);
  probe.encoder() = fit.encoder;
  const auto rep = evaluate_supervised(ds, probe.encode());
  const auto pop = evaluate_most_popular(ds);
  CHECK(rep.recall_at(20) > pop.recall_at(20));
  for (double v : rep.recall) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto again = fit_bpr(ds, cfg);
  CHECK(again.encoder == fit.encoder);
}
