#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "coupled/data.hpp"
#include "coupled/training.hpp"

using namespace coupled;

namespace {

ModelConfig toy_config(const PairDataset& ds, std::size_t hidden) {
  ModelConfig cfg;
  cfg.architecture = Architecture::clstm;
  cfg.cell = CellKind::tc;
  cfg.hidden = hidden;
  cfg.embed_dim = 4;
  cfg.vocab_size = ds.vocab.size();
  cfg.classes = ds.labels.size();
  cfg.pool = {1, 1};
  return cfg;
}

PairDataset single_example() {
  PairDataset ds;
  ds.labels = {"no", "yes"};
  for (const char* w : {"a", "b", "c", "d"}) ds.vocab.add(w);
  ds.samples.push_back({{2, 3, 4}, {3, 4, 5}, 1, {}});
  ds.splits.train = {0};
  ds.splits.dev = {0};
  return ds;
}

double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

}  // namespace

TEST_CASE("margin loss examples") {
  CHECK(margin_loss(1.0, 0.0) == 0.0);
  CHECK(margin_loss(0.5, 0.5) == 1.0);
  CHECK(margin_loss(0.0, 2.0) == 3.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 100; ++k) CHECK(margin_loss(u(rng), u(rng)) >= 0.0);
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy(1, Tensor::vector({0.0, 1.0, 0.0})) == 0.0);
  CHECK(cross_entropy(0, Tensor::vector({1.0 / 3, 1.0 / 3, 1.0 / 3})) == doctest::Approx(std::log(3.0)));
  CHECK(cross_entropy(2, Tensor::vector({0.25, 0.25, 0.5})) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(Tensor::vector({0, 0, 1}), Tensor::vector({0.25, 0.25, 0.5})) ==
        doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(cross_entropy(0, Tensor::vector({0.0, 1.0}))));
}

TEST_CASE("clip examples") {
  std::vector<double> g = {3.0, 4.0};
  CHECK(clip(g, 5.0) == 1.0);
  CHECK(g == std::vector<double>{3.0, 4.0});
  clip(g, 1.0);
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
  std::vector<double> zero(3, 0.0);
  clip(zero, 1.0);
  CHECK(zero == std::vector<double>(3, 0.0));
}

TEST_CASE("clipped norm never exceeds the threshold") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> g(len(rng));
    for (auto& v : g) v = u(rng);
    const double threshold = std::abs(u(rng)) + 1e-3;
    clip(g, threshold);
    CHECK(norm(g) <= threshold + 1e-12);
  }
}

TEST_CASE("global clipping spans every tensor") {
  Tensor a = Tensor::vector({3.0}), b = Tensor::vector({4.0});
  ParamRegistry r;
  r.add("a", a, false);
  r.add("b", b, false);
  CHECK(clip_gradients(r, 1.0) == doctest::Approx(0.2));
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(b[0] == doctest::Approx(0.8));
}

TEST_CASE("adagrad examples") {
  std::vector<double> theta = {0.0}, accum = {0.0};
  const std::vector<double> g = {3.0};
  adagrad_update(theta, g, accum, 0.1, 0.0);
  CHECK(theta[0] == doctest::Approx(-0.1));
  adagrad_update(theta, g, accum, 0.1, 0.0);
  CHECK(theta[0] + 0.1 == doctest::Approx(-0.1 * 3.0 / std::sqrt(18.0)));
  CHECK(-0.1 * 3.0 / std::sqrt(18.0) == doctest::Approx(-0.0707).epsilon(1e-3));

  const std::vector<double> zero = {0.0};
  const double before = theta[0];
  adagrad_update(theta, zero, accum, 0.1, 1e-8);
  CHECK(theta[0] == before);
}

TEST_CASE("adagrad step size never grows") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> theta = {0.0}, accum = {0.0};
  double last = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> g = {n(rng)};
    adagrad_update(theta, g, accum, 0.1, 1e-8);
    const double step = 0.1 / (std::sqrt(accum[0]) + 1e-8);
    CHECK(step <= last);
    last = step;
  }
}

TEST_CASE("l2 applies to non-embedding parameters only") {
  Tensor w = Tensor::vector({1.0}), e = Tensor::vector({1.0});
  Tensor gw({1}), ge({1});
  ParamRegistry params, grads;
  params.add("w", w, false);
  params.add("e", e, true);
  grads.add("w", gw, false);
  grads.add("e", ge, true);
  OptimizerState state({0.1, 0.5, 10.0, 1e-12}, params);
  adagrad_step(state, params, grads);
  CHECK(w[0] == doctest::Approx(0.9));
  CHECK(e[0] == 1.0);
}

TEST_CASE("optimizer config validation") {
  CHECK_THROWS_AS(OptimizerConfig({-1.0, 0.0, 1.0, 1e-8}).validate(), ConfigError);
  CHECK_THROWS_AS(OptimizerConfig({0.1, -1.0, 1.0, 1e-8}).validate(), ConfigError);
  CHECK_THROWS_AS(OptimizerConfig({0.1, 0.0, 0.0, 1e-8}).validate(), ConfigError);
  CHECK_NOTHROW(OptimizerConfig{}.validate());
}

TEST_CASE("metric lines are JSON") {
  CHECK(format_metric({3, "dev", "accuracy", 0.5}) ==
        R"({"epoch":3,"metric":"accuracy","split":"dev","value":0.5})");
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const PairDataset ds = synth_tasks(SynthTask::same_seq, 40, 4);
  const Model m = Model::initialize(toy_config(ds, 3), 5);
  TrainOptions opt;
  opt.optimizer.lr = 0.0;
  opt.epochs = 2;
  const auto result = train(m, ds, opt);
  CHECK(result.best == m);
}

TEST_CASE("training is deterministic") {
  const PairDataset ds = synth_tasks(SynthTask::same_seq, 40, 6);
  const Model m = Model::initialize(toy_config(ds, 3), 7);
  TrainOptions opt;
  opt.epochs = 3;
  std::vector<std::string> a, b;
  const auto r1 = train(m, ds, opt);
  const auto r2 = train(m, ds, opt);
  for (const auto& rec : r1.log) a.push_back(format_metric(rec));
  for (const auto& rec : r2.log) b.push_back(format_metric(rec));
  CHECK(a == b);
  CHECK(r1.best == r2.best);
  CHECK(r1.best_epoch >= 1);
  CHECK(r1.log.back().split == "test");
}

TEST_CASE("loss is nonincreasing on a repeated example") {
  const PairDataset ds = single_example();
  const Model m = Model::initialize(toy_config(ds, 4), 8);
  TrainOptions opt;
  opt.optimizer.l2 = 0.0;
  opt.optimizer.lr = 0.05;
  opt.epochs = 10;
  std::vector<double> losses;
  opt.on_record = [&](const MetricRecord& r) {
    if (r.split == "train" && r.metric == "loss") losses.push_back(r.value);
  };
  train(m, ds, opt);
  REQUIRE(losses.size() == 10);
  for (std::size_t k = 1; k < losses.size(); ++k) CHECK(losses[k] <= losses[k - 1]);
}

TEST_CASE("toy matching task is learned") {
  const PairDataset ds = synth_tasks(SynthTask::same_seq, 40, 9);
  const Model m = Model::initialize(toy_config(ds, 4), 10);
  TrainOptions opt;
  opt.optimizer.lr = 0.05;
  opt.optimizer.l2 = 0.0;
  opt.epochs = 200;
  const auto result = train(m, ds, opt);
  double best_train = 0.0;
  for (const auto& r : result.log) {
    if (r.split == "train" && r.metric == "accuracy") best_train = std::max(best_train, r.value);
  }
  CHECK(best_train == 1.0);
}

TEST_CASE("ranking training and p@1") {
  PairDataset ds;
  ds.task = TaskKind::ranking;
  for (const char* w : {"a", "b", "c", "d", "e", "f"}) ds.vocab.add(w);
  for (std::size_t k = 0; k < 6; ++k) {
    const std::size_t s = 2 + k % 6;
    ds.samples.push_back({{s, 2 + (s + 1) % 6, 2 + (s + 2) % 6}, {s, s}, 0,
                          {{2 + (s + 3) % 6, 2 + (s + 4) % 6}, {2 + (s + 5) % 6, 2 + (s + 3) % 6}}});
  }
  ds.splits.train = {0, 1, 2, 3};
  ds.splits.dev = {4, 5};
  ModelConfig cfg = toy_config(ds, 3);
  cfg.head = HeadKind::ranking;
  cfg.classes = 2;
  const Model m = Model::initialize(cfg, 11);
  const double p1 = evaluate(m, ds, ds.splits.dev);
  CHECK(p1 >= 0.0);
  CHECK(p1 <= 1.0);
  TrainOptions opt;
  opt.optimizer.lr = 0.05;
  opt.epochs = 30;
  const auto result = train(m, ds, opt);
  CHECK(evaluate(result.best, ds, ds.splits.train) >= 0.75);

  // Tied scores count as wrong.
  Model flat = m;
  const auto reg = flat.registry();
  for (const auto& e : reg.entries()) e.tensor->fill(0.0);
  CHECK(evaluate(flat, ds, ds.splits.train) == 0.0);

  ModelConfig wrong = cfg;
  wrong.head = HeadKind::classification;
  wrong.classes = 2;
  CHECK_THROWS_AS(train(Model::initialize(wrong, 1), ds, opt), ConfigError);
}

TEST_CASE("non-finite loss aborts training") {
  const PairDataset ds = single_example();
  Model m = Model::initialize(toy_config(ds, 2), 12);
  m.params().out_bias[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(m, ds, TrainOptions{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("grid search covers every combination") {
  const PairDataset ds = synth_tasks(SynthTask::same_seq, 40, 13);
  const Model m = Model::initialize(toy_config(ds, 2), 14);
  TrainOptions opt;
  opt.epochs = 1;
  const auto points = grid_search(m, ds, opt, {0.05, 0.0005}, {0.0, 1e-5}, {5.0});
  CHECK(points.size() == 4);
  CHECK(points[1].optimizer.l2 == 1e-5);
}
