#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support/gradcheck.hpp"
#include "selfcf/errors.hpp"
#include "selfcf/eval.hpp"
#include "selfcf/graph.hpp"
#include "selfcf/rng.hpp"
#include "selfcf/selfcf.hpp"

using namespace selfcf;
using namespace selfcf::testing;

namespace {

DenseMatrix random_dense(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

DenseMatrix identity(std::size_t d) {
  DenseMatrix m(d, d);
  for (std::size_t k = 0; k < d; ++k) m(k, k) = 1.0;
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("predictor_forward examples") {
  Predictor id;
  id.layers.push_back({identity(3), DenseMatrix(1, 3)});
  const auto e = random_dense(4, 3, 1);
  CHECK(predictor_forward(id, e) == e);
  CHECK(predictor_forward(Predictor::identity(), e) == e);

  const auto p = Predictor::linear(3, 5);
  CHECK(p.layers[0].bias == DenseMatrix(1, 3));
  const DenseMatrix one_hot{{0.0, 1.0, 0.0}};
  const auto row = predictor_forward(p, one_hot);
  for (std::size_t c = 0; c < 3; ++c) CHECK(row(0, c) == p.layers[0].weight(1, c));

  auto biased = p;
  for (double& v : biased.layers[0].bias.values()) v = 0.25;
  const auto out = predictor_forward(biased, e);
  const auto ref = matmul(e, biased.layers[0].weight);
  for (std::size_t k = 0; k < out.size(); ++k) {
    CHECK(std::abs(out.values()[k] - ref.values()[k] - 0.25) <= 1e-12);
  }
  CHECK_THROWS_AS(predictor_forward(p, DenseMatrix(2, 4)), InvalidDimension);
  CHECK(p.parameter_count() == 12);
  CHECK(Predictor::two_layer(3, 1).parameter_count() == 24);
}

TEST_CASE("predictor_backward matches finite differences") {
  for (const auto& p : {Predictor::linear(4, 3), Predictor::two_layer(4, 3)}) {
    const auto x = random_dense(5, 4, 7);
    const auto w = random_dense(5, 4, 8);
    const auto obj = [&](const Predictor& h, const DenseMatrix& in) {
      return frobenius_dot(predictor_forward(h, in), w);
    };
    PredictorCache cache;
    predictor_forward(p, x, cache);
    auto grad = PredictorGrad::zeros_like(p);
    const auto gx = predictor_backward(p, cache, w, grad);
    CHECK(max_rel_err(gx, finite_diff_grad([&](const DenseMatrix& m) { return obj(p, m); }, x, 1e-5)) < 1e-6);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      const auto nw = finite_diff_grad(
          [&](const DenseMatrix& m) {
            auto h = p;
            h.layers[k].weight = m;
            return obj(h, x);
          },
          p.layers[k].weight, 1e-5);
      CHECK(max_rel_err(grad.layers[k].weight, nw) < 1e-6);
    }
  }
}

TEST_CASE("historical perturbation") {
  const Batch batch{{0, 1}, {0, 0}};
  SUBCASE("first touch returns the input and marks rows seen") {
    HistoricalStore store(3, 2, 2, 0.5);
    const DenseMatrix u{{1.0, 2.0}, {3.0, 4.0}};
    const DenseMatrix i{{5.0, 6.0}, {5.0, 6.0}};
    const auto t = perturb_historical(store, u, i, batch);
    CHECK(t.users == u);
    CHECK(t.items == i);
    CHECK(store.user_seen == std::vector<char>{1, 1, 0});
    CHECK(store.item_seen == std::vector<char>{1, 0});
  }
  SUBCASE("tau 0.5 example") {
    HistoricalStore store(1, 1, 2, 0.5);
    const Batch one{{0}, {0}};
    perturb_historical(store, DenseMatrix{{2.0, 0.0}}, DenseMatrix{{2.0, 0.0}}, one);
    const auto t = perturb_historical(store, DenseMatrix{{0.0, 2.0}}, DenseMatrix{{0.0, 2.0}}, one);
    CHECK(t.users == DenseMatrix{{1.0, 1.0}});
    // Mixed values are stored by default.
    CHECK(store.users == DenseMatrix{{1.0, 1.0}});
  }
  SUBCASE("tau 0 and tau 1") {
    const Batch one{{0}, {0}};
    HistoricalStore zero(1, 1, 2, 0.0);
    perturb_historical(zero, DenseMatrix{{9.0, 9.0}}, DenseMatrix{{9.0, 9.0}}, one);
    CHECK(perturb_historical(zero, DenseMatrix{{1.0, 2.0}}, DenseMatrix{{3.0, 4.0}}, one).users ==
          DenseMatrix{{1.0, 2.0}});
    HistoricalStore full(1, 1, 2, 1.0);
    perturb_historical(full, DenseMatrix{{9.0, 8.0}}, DenseMatrix{{7.0, 6.0}}, one);
    const auto t = perturb_historical(full, DenseMatrix{{1.0, 2.0}}, DenseMatrix{{3.0, 4.0}}, one);
    CHECK(t.users == DenseMatrix{{9.0, 8.0}});
    CHECK(t.items == DenseMatrix{{7.0, 6.0}});
  }
  SUBCASE("raw storage option") {
    HistoricalStore store(1, 1, 1, 0.5, false);
    const Batch one{{0}, {0}};
    perturb_historical(store, DenseMatrix{{2.0}}, DenseMatrix{{2.0}}, one);
    const auto t = perturb_historical(store, DenseMatrix{{4.0}}, DenseMatrix{{4.0}}, one);
    CHECK(t.users(0, 0) == 3.0);
    CHECK(store.users(0, 0) == 4.0);
  }
}

TEST_CASE("dropout perturbation") {
  const auto e = random_dense(200, 64, 3);
  const auto same = perturb_dropout(e, 0.0, DropoutGranularity::element, 1);
  CHECK(same.output == e);
  CHECK_THROWS_AS(perturb_dropout(e, 1.0, DropoutGranularity::element, 1), InvalidParameter);
  CHECK_THROWS_AS(perturb_dropout(e, -0.1, DropoutGranularity::element, 1), InvalidParameter);

  const auto d = perturb_dropout(e, 0.05, DropoutGranularity::element, 9);
  std::size_t zeros = 0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (d.mask.values()[k] == 0.0) {
      ++zeros;
      CHECK(d.output.values()[k] == 0.0);
    } else {
      CHECK(d.output.values()[k] == doctest::Approx(e.values()[k] / 0.95).epsilon(1e-15));
    }
  }
  const double n = static_cast<double>(e.size());
  CHECK(std::abs(static_cast<double>(zeros) - 0.05 * n) < 3.0 * std::sqrt(n * 0.05 * 0.95));
  CHECK(perturb_dropout(e, 0.05, DropoutGranularity::element, 9).output == d.output);

  const auto rows = perturb_dropout(e, 0.3, DropoutGranularity::row, 4);
  for (std::size_t r = 0; r < e.rows(); ++r) {
    const double first = rows.mask(r, 0);
    for (std::size_t c = 0; c < e.cols(); ++c) CHECK(rows.mask(r, c) == first);
  }

  const DenseMatrix small{{0.5, -1.0, 2.0}, {1.5, 0.25, -0.75}};
  DenseMatrix mean(2, 3);
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    axpy(mean, perturb_dropout(small, 0.05, DropoutGranularity::element, static_cast<std::uint64_t>(s)).output);
  }
  scale_inplace(mean, 1.0 / draws);
  for (std::size_t k = 0; k < small.size(); ++k) {
    CHECK(std::abs(mean.values()[k] / small.values()[k] - 1.0) < 0.02);
  }
}

TEST_CASE("edge-prune perturbation") {
  const auto ds = tiny_dataset();
  const auto adj = build_normalized_adjacency(ds);
  const auto params = EncoderParams::xavier(5, 7, 4, 2, 3);
  const auto batch = tiny_batch();
  ForwardContext ctx;
  const auto out = lightgcn_forward(params, adj.matrix, batch, ctx);

  const auto zero = perturb_edge_prune(Backbone::lightgcn, out, adj, 0.0, 1, batch);
  const auto extra = spmm(adj.matrix, vstack(out.users, out.items));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(zero.target.users(b, c) == extra(batch.users[b], c));
      CHECK(zero.target.items(b, c) == extra(5 + batch.items[b], c));
    }
  }

  auto scaled = out;
  scale_inplace(scaled.users, 3.0);
  scale_inplace(scaled.items, 3.0);
  const auto a = perturb_edge_prune(Backbone::lightgcn, out, adj, 0.4, 8, batch);
  const auto b = perturb_edge_prune(Backbone::lightgcn, scaled, adj, 0.4, 8, batch);
  for (std::size_t k = 0; k < a.target.users.size(); ++k) {
    CHECK(b.target.users.values()[k] == doctest::Approx(3.0 * a.target.users.values()[k]));
  }

  CHECK_THROWS_AS(perturb_edge_prune(Backbone::mf, out, adj, 0.1, 1, batch), UnsupportedConfiguration);

  const auto single = build_normalized_adjacency(InteractionDataset(1, 1, {{0, 0, 0}}, {}, {}));
  EncoderParams p1{DenseMatrix{{1.0, 2.0}}, DenseMatrix{{3.0, 4.0}}, 1};
  ForwardContext c1;
  const Batch one{{0}, {0}};
  const auto o1 = lightgcn_forward(p1, single.matrix, one, c1);
  bool dropped = false;
  for (std::uint64_t seed = 0; seed < 64 && !dropped; ++seed) {
    const auto d = perturb_edge_prune(Backbone::lightgcn, o1, single, 0.5, seed, one);
    if (d.pruned.nnz() == 0) {
      dropped = true;
      CHECK(d.target.users == DenseMatrix(1, 2));
      CHECK(d.target.items == DenseMatrix(1, 2));
    }
  }
  CHECK(dropped);
}

TEST_CASE("cosine loss examples") {
  const DenseMatrix a{{0.6, 0.8}};
  const DenseMatrix b{{1.0, 0.0}};
  CHECK(cosine_loss(a, b, b, a).value == doctest::Approx(-1.0));

  const DenseMatrix e1{{1.0, 0.0, 0.0, 0.0}}, e2{{0.0, 1.0, 0.0, 0.0}};
  const DenseMatrix e3{{0.0, 0.0, 1.0, 0.0}}, e4{{0.0, 0.0, 0.0, 1.0}};
  CHECK(cosine_loss(e1, e2, e3, e4).value == 0.0);

  const DenseMatrix x{{1.0, 0.0}}, y{{1.0, 1.0}};
  CHECK(cosine_loss(x, y, x, y).value == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(negative_cosine(std::vector<double>{2.0, 0.0}, std::vector<double>{3.0, 3.0}) ==
        doctest::Approx(-1.0 / std::sqrt(2.0)));

  const auto r = cosine_loss(x, y, x, y);
  CHECK(r.grad_tilde_u.empty());
  CHECK(r.grad_tilde_i.empty());

  DenseMatrix bad = x;
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(cosine_loss(bad, y, x, y), NumericError);
  CHECK_THROWS_AS(cosine_loss(x, DenseMatrix(2, 2), x, y), InvalidDimension);
}

TEST_CASE("cosine loss invariants and gradients") {
  const auto du = random_dense(6, 5, 1);
  const auto di = random_dense(6, 5, 2);
  const auto tu = random_dense(6, 5, 3);
  const auto ti = random_dense(6, 5, 4);
  const auto base = cosine_loss(du, di, tu, ti);
  CHECK(base.value >= -1.0);
  CHECK(base.value <= 1.0);

  auto su = du;
  scale_inplace(su, 3.5);
  auto sti = ti;
  scale_inplace(sti, 0.2);
  CHECK(std::abs(cosine_loss(su, di, tu, sti).value - base.value) < 1e-12);

  for (bool sg : {true, false}) {
    const auto r = cosine_loss(du, di, tu, ti, sg);
    const auto f_du = [&](const DenseMatrix& m) { return cosine_loss(m, di, tu, ti).value; };
    const auto f_di = [&](const DenseMatrix& m) { return cosine_loss(du, m, tu, ti).value; };
    CHECK(max_rel_err(r.grad_dot_u, finite_diff_grad(f_du, du, 1e-5)) < 1e-6);
    CHECK(max_rel_err(r.grad_dot_i, finite_diff_grad(f_di, di, 1e-5)) < 1e-6);
    if (!sg) {
      const auto f_tu = [&](const DenseMatrix& m) { return cosine_loss(du, di, m, ti).value; };
      const auto f_ti = [&](const DenseMatrix& m) { return cosine_loss(du, di, tu, m).value; };
      CHECK(max_rel_err(r.grad_tilde_u, finite_diff_grad(f_tu, tu, 1e-5)) < 1e-6);
      CHECK(max_rel_err(r.grad_tilde_i, finite_diff_grad(f_ti, ti, 1e-5)) < 1e-6);
    }
  }
}

TEST_CASE("cross-entropy loss") {
  CHECK(softmax_cross_entropy(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}) ==
        doctest::Approx(std::log(2.0)));
  CHECK(softmax_cross_entropy(std::vector<double>{50.0, 0.0}, std::vector<double>{50.0, 0.0}) <
        1e-20);
  const DenseMatrix z(1, 2);
  CHECK(cross_entropy_loss(z, z, z, z).value == doctest::Approx(std::log(2.0)));

  const auto du = random_dense(4, 3, 5);
  const auto di = random_dense(4, 3, 6);
  const auto tu = random_dense(4, 3, 7);
  const auto ti = random_dense(4, 3, 8);
  const auto r = cross_entropy_loss(du, di, tu, ti, false);
  const auto f = [&](int which) {
    return [&, which](const DenseMatrix& m) {
      return cross_entropy_loss(which == 0 ? m : du, which == 1 ? m : di, which == 2 ? m : tu,
                                which == 3 ? m : ti)
          .value;
    };
  };
  CHECK(max_rel_err(r.grad_dot_u, finite_diff_grad(f(0), du, 1e-5)) < 1e-6);
  CHECK(max_rel_err(r.grad_dot_i, finite_diff_grad(f(1), di, 1e-5)) < 1e-6);
  CHECK(max_rel_err(r.grad_tilde_u, finite_diff_grad(f(2), tu, 1e-5)) < 1e-6);
  CHECK(max_rel_err(r.grad_tilde_i, finite_diff_grad(f(3), ti, 1e-5)) < 1e-6);
  DenseMatrix bad = du;
  bad(0, 0) = INFINITY;
  CHECK_THROWS_AS(cross_entropy_loss(bad, di, tu, ti), NumericError);
}

TEST_CASE("config validation") {
  SelfCFConfig c;
  c.backbone = Backbone::mf;
  c.perturbation.kind = PerturbationKind::edge_prune;
  CHECK_THROWS_AS(c.validate(), UnsupportedConfiguration);
  SelfCFConfig d;
  d.perturbation.dropout = 1.0;
  CHECK_THROWS(d.validate());
  SelfCFConfig e;
  e.perturbation.tau = 1.5;
  CHECK_THROWS(e.validate());
  SelfCFConfig f;
  f.layers = 0;
  CHECK_THROWS_AS(f.validate(), ConfigError);
}

TEST_CASE("trainer gradients match finite differences") {
  const auto ds = tiny_dataset();
  const auto batch = tiny_batch();
  for (auto kind : {PerturbationKind::historical, PerturbationKind::dropout, PerturbationKind::edge_prune}) {
    for (auto backbone : {Backbone::mf, Backbone::lightgcn}) {
      if (kind == PerturbationKind::edge_prune && backbone == Backbone::mf) continue;
      for (bool no_sg : {false, true}) {
        auto cfg = tiny_config(kind, backbone);
        cfg.ablation.no_stop_gradient = no_sg;
        SelfCFTrainer t(ds, cfg);
        fill_store(t.store(), 5);
        const auto err = selfcf_gradient_errors(t, batch, 1234, !no_sg);
        INFO("kind " << static_cast<int>(kind) << " backbone " << to_string(backbone) << " no_sg " << no_sg);
        CHECK(err.max() < 1e-4);
      }
    }
  }
}

TEST_CASE("first touch historical gradient") {
  // Empty store: the target equals the online output.
  auto cfg = tiny_config(PerturbationKind::historical);
  cfg.ablation.no_stop_gradient = true;
  SelfCFTrainer t(tiny_dataset(), cfg);
  CHECK(selfcf_gradient_errors(t, tiny_batch(), 1, false).max() < 1e-4);
}

TEST_CASE("stop-gradient differs from the unfrozen gradient") {
  auto cfg = tiny_config(PerturbationKind::dropout);
  SelfCFTrainer sg(tiny_dataset(), cfg);
  cfg.ablation.no_stop_gradient = true;
  SelfCFTrainer nsg(tiny_dataset(), cfg);
  const auto a = sg.gradients(sg.encoder(), sg.predictor(), tiny_batch(), 3);
  const auto b = nsg.gradients(nsg.encoder(), nsg.predictor(), tiny_batch(), 3);
  CHECK(a.loss == b.loss);
  CHECK_FALSE(a.encoder.users == b.encoder.users);
  // The predictor sits on the online branch only, so its gradient is shared.
  CHECK(a.predictor.layers[0].weight == b.predictor.layers[0].weight);
}

TEST_CASE("train_step") {
  const auto ds = tiny_dataset();
  const auto batch = tiny_batch();
  SUBCASE("learning rate 0 leaves parameters unchanged") {
    auto cfg = tiny_config(PerturbationKind::dropout);
    cfg.train.learning_rate = 0.0;
    SelfCFTrainer t(ds, cfg);
    const auto before = t.encoder();
    const auto pred = t.predictor();
    const double loss = t.train_step(batch, 5);
    CHECK(std::isfinite(loss));
    CHECK(t.encoder() == before);
    CHECK(t.predictor() == pred);
  }
  SUBCASE("fixed batch and draw: loss does not increase") {
    auto cfg = tiny_config(PerturbationKind::dropout);
    cfg.train.learning_rate = 1e-3;
    cfg.train.l2 = 0.0;
    SelfCFTrainer t(ds, cfg);
    double prev = t.loss(t.encoder(), t.predictor(), batch, 77);
    for (int step = 0; step < 50; ++step) {
      t.train_step(batch, 77);
      const double now = t.loss(t.encoder(), t.predictor(), batch, 77);
      CHECK(now <= prev + 1e-6);
      prev = now;
    }
  }
  SUBCASE("fixed predictor is never updated") {
    auto cfg = tiny_config(PerturbationKind::dropout);
    cfg.ablation.fixed_predictor = true;
    SelfCFTrainer t(ds, cfg);
    const auto pred = t.predictor();
    const auto enc = t.encoder();
    t.train_step(batch, 1);
    CHECK(t.predictor() == pred);
    CHECK_FALSE(t.encoder() == enc);
  }
  SUBCASE("no predictor means identity") {
    auto cfg = tiny_config(PerturbationKind::dropout);
    cfg.ablation.no_predictor = true;
    SelfCFTrainer t(ds, cfg);
    CHECK(t.predictor().is_identity());
    CHECK(t.parameter_count() == (5 + 7) * 4);
  }
  SUBCASE("switches off reproduce the baseline exactly") {
    const auto cfg = tiny_config(PerturbationKind::historical);
    SelfCFTrainer a(ds, cfg), b(ds, cfg);
    for (int s = 0; s < 3; ++s) {
      CHECK(a.train_step(batch, s) == b.train_step(batch, s));
    }
    CHECK(a.encoder() == b.encoder());
    CHECK(a.store().users == b.store().users);
  }
  SUBCASE("historical store only touches batch rows") {
    SelfCFTrainer t(ds, tiny_config(PerturbationKind::historical));
    t.train_step(Batch{{0, 2}, {1, 1}}, 3);
    CHECK(t.store().user_seen == std::vector<char>{1, 0, 1, 0, 0});
    CHECK(t.store().item_seen == std::vector<char>{0, 1, 0, 0, 0, 0, 0});
  }
}

TEST_CASE("embedding_std") {
  DenseMatrix collapsed(10, 4, 0.3);
  CHECK(embedding_std(collapsed) == doctest::Approx(0.0).epsilon(1e-12));
  const auto spread = random_dense(50, 4, 2);
  CHECK(embedding_std(spread) > 0.1);
  auto scaled = spread;
  scale_inplace(scaled, 7.0);
  CHECK(embedding_std(scaled) == doctest::Approx(embedding_std(spread)));
}

TEST_CASE("fit") {
  const auto ds = remap_and_split(make_block_interactions({.users = 40, .items = 24, .blocks = 3,
                                                           .interactions_per_user = 10}));
  SelfCFConfig cfg;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.train.batch_size = 64;
  cfg.train.learning_rate = 0.01;
  cfg.train.max_epochs = 15;
  cfg.train.patience = 100;
  cfg.train.seed = 3;
  cfg.train.validation_k = 3;

  const auto a = fit(ds, cfg);
  const auto b = fit(ds, cfg);
  CHECK(format_epoch_log(a.result.log) == format_epoch_log(b.result.log));
  CHECK(a.model.encoder == b.model.encoder);
  CHECK(a.model.predictor == b.model.predictor);
  CHECK(a.result.epochs_run == 15);
  CHECK(a.result.best_val_recall > a.result.initial_val_recall);

  // The returned model is the best-validation one.
  SelfCFTrainer probe(ds, cfg);
  probe.encoder() = a.model.encoder;
  probe.predictor() = a.model.predictor;
  const auto out = probe.encode();
  CHECK(validation_recall(ds, cross_prediction_scorer(out.users, out.items, a.model.predictor), 3) ==
        a.result.best_val_recall);

  cfg.train.patience = 0;
  const auto c = fit(ds, cfg);
  // Stops at the first epoch that fails to improve.
  REQUIRE(c.result.epochs_run >= 1);
  const auto& log = c.result.log;
  double best = -1.0;
  for (std::size_t k = 0; k + 1 < log.size(); ++k) {
    CHECK(log[k].val_recall > best);
    best = log[k].val_recall;
  }
  if (c.result.epochs_run < cfg.train.max_epochs) CHECK(log.back().val_recall <= best);

  cfg.train.max_epochs = 0;
  const auto z = fit(ds, cfg);
  CHECK(z.result.epochs_run == 0);
  CHECK(z.result.log.empty());
}

TEST_CASE("epoch log format") {
  const std::vector<EpochRecord> log{{1, -0.5, 0.25, 0.1, 0.0}, {2, -0.75, 0.5, 0.2, 0.0}};
  const auto text = format_epoch_log(log);
  CHECK(text ==
        "{\"epoch\":1,\"loss\":-0.5,\"val_recall@20\":0.25,\"embed_std\":0.1,\"seconds\":0.0}\n"
        "{\"epoch\":2,\"loss\":-0.75,\"val_recall@20\":0.5,\"embed_std\":0.2,\"seconds\":0.0}\n");
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "selfcf_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto enc = EncoderParams::xavier(4, 6, 3, 2, 9);
  auto pred = Predictor::two_layer(3, 2);
  pred.layers[1].bias(0, 2) = 0.1;
  write_checkpoint(dir / "a.bin", enc, pred);
  const auto back = read_checkpoint(dir / "a.bin");
  CHECK(back.encoder == enc);
  CHECK(back.predictor == pred);
  write_checkpoint(dir / "b.bin", back.encoder, back.predictor);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.bin"), IoError);
}

TEST_CASE("parameter accounting") {
  CHECK(count_parameters(6040, 3706, 64, 1) == 627904);
  const struct {
    std::size_t users, items;
    double reported;
  } rows[] = {{6040, 3706, 0.58e6}, {82536, 1303, 5.15e6}, {50677, 16897, 3.98e6}};
  for (const auto& r : rows) {
    const double n = static_cast<double>(count_parameters(r.users, r.items, 64, 1));
    CHECK(std::abs(n / r.reported - 1.0) <= 0.10);
  }
}
