#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "coupled/gradcheck.hpp"
#include "coupled/model.hpp"
#include "coupled/training.hpp"
#include "oracles.hpp"

using namespace coupled;

namespace {

ModelConfig small_config(Architecture arch, CellKind cell = CellKind::tc) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.cell = cell;
  cfg.blocks = 2;
  cfg.hidden = 2;
  cfg.embed_dim = 3;
  cfg.vocab_size = 12;
  cfg.classes = 3;
  cfg.pool = {2, 2};
  return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("coupled_test_model_" + name);
}

}  // namespace

TEST_CASE("embedding lookup") {
  const Tensor e = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Tensor out = embed({2}, e);
  CHECK(out.shape() == Shape{1, 3});
  CHECK(out.at(0, 2) == 1.0);
  CHECK(embed({7}, e).at(0, 0) == 1.0);  // unknown id reads the UNK row
  CHECK_THROWS_AS(embed({}, e), InputError);
}

TEST_CASE("softmax properties") {
  const Tensor z = Tensor::vector({0.3, -2.0, 1.7});
  const Tensor p = softmax(z);
  double sum = 0.0;
  for (double v : p.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  const Tensor shifted = softmax(Tensor::vector({100.3, 98.0, 101.7}));
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(shifted[k] - p[k]) < 1e-12);
  CHECK(softmax(Tensor::vector({1000.0, 0.0}))[0] == 1.0);
}

TEST_CASE("classification head output is a distribution") {
  for (Architecture arch : {Architecture::clstm, Architecture::nbow, Architecture::parallel_lstm}) {
    const Model m = Model::initialize(small_config(arch), 4);
    const Tensor out = m.forward({2, 3, 4, 5}, {6, 7, 8});
    double sum = 0.0;
    for (double v : out.values()) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(m.forward({2, 3, 4, 5}, {6, 7, 8}) == out);
  }
}

TEST_CASE("zero non-bias parameters give a uniform distribution") {
  ModelConfig cfg = small_config(Architecture::clstm);
  Model m = Model::initialize(cfg, 5);
  const auto reg = m.registry();
  for (const auto& e : reg.entries()) {
    if (e.name.find("bias") == std::string::npos || e.name == "output.bias") e.tensor->fill(0.0);
  }
  const Tensor out = m.forward({2, 3, 4}, {5, 6});
  for (double v : out.values()) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("initialization bounds") {
  const Model m = Model::initialize(small_config(Architecture::clstm), 6);
  Model copy = m;
  const auto reg = copy.registry();
  for (const auto& e : reg.entries()) {
    for (double v : e.tensor->values()) {
      CHECK(v >= -0.1);
      CHECK(v <= 0.1);
    }
  }
  CHECK(Model::initialize(small_config(Architecture::clstm), 6) == m);
  CHECK_FALSE(Model::initialize(small_config(Architecture::clstm), 7) == m);
}

TEST_CASE("parameter counts") {
  ModelConfig cfg;
  cfg.architecture = Architecture::clstm;
  cfg.cell = CellKind::tc;
  cfg.hidden = 50;
  cfg.embed_dim = 100;
  CHECK(core_param_count(cfg) == 75'250);
  cfg.blocks = 4;
  CHECK(core_param_count(cfg) == 188'500);
  cfg.cell = CellKind::lc;
  CHECK(core_param_count(cfg) == 130'800);
  cfg.blocks = 1;
  CHECK(core_param_count(cfg) == 40'200);
  CHECK(count_params(ParamRegistry{}, true) == 0);

  ModelParams p = ModelParams::zeros(cfg);
  const auto reg = make_registry(p, cfg);
  CHECK(count_params(reg, true) - count_params(reg, false) == cfg.vocab_size * 100);

  const auto refs = reference_counts();
  REQUIRE(refs.size() == 4);
  for (const auto& r : refs) CHECK(std::abs(r.deviation) <= 0.15);
  CHECK(refs[1].total == 75'250 + 2'703);
}

TEST_CASE("registry rejects duplicate names") {
  Tensor a({1}), b({1});
  ParamRegistry r;
  r.add("w", a, false);
  CHECK_THROWS_AS(r.add("w", b, false), ConfigError);
  CHECK(r.find("w")->tensor == &a);
  CHECK(r.find("missing") == nullptr);
}

TEST_CASE("models reject mismatched parameters") {
  const ModelConfig cfg = small_config(Architecture::clstm);
  ModelParams p = ModelParams::zeros(cfg);
  p.fc_bias = Tensor({7});
  CHECK_THROWS_AS(Model(cfg, p), DimensionError);
  ModelParams q = ModelParams::zeros(cfg);
  q.blocks.pop_back();
  CHECK_THROWS_AS(Model(cfg, q), ConfigError);
  ModelConfig bad = cfg;
  bad.classes = 1;
  CHECK_THROWS_AS(ModelParams::zeros(bad), ConfigError);
}

TEST_CASE("baselines") {
  ModelConfig cfg = small_config(Architecture::nbow);
  Model nbow = Model::initialize(cfg, 8);
  CHECK(nbow.forward({2, 3, 4}, {5, 6}) == nbow.forward({4, 2, 3}, {6, 5}));
  nbow.params().embedding.fill(0.0);
  ForwardTrace t;
  nbow.forward({2, 3}, {4}, &t);
  for (double v : t.features.values()) CHECK(v == 0.0);

  cfg.architecture = Architecture::parallel_lstm;
  cfg.parallel_shared = true;
  const Model par = Model::initialize(cfg, 9);
  par.forward({2, 3, 4}, {2, 3, 4}, &t);
  for (std::size_t k = 0; k < cfg.hidden; ++k) CHECK(t.features[k] == t.features[cfg.hidden + k]);
}

TEST_CASE("end-to-end gradients on a 5x6 pair") {
  for (CellKind cell : {CellKind::lc, CellKind::tc}) {
    for (HeadKind head : {HeadKind::classification, HeadKind::ranking}) {
      ModelConfig cfg = small_config(Architecture::clstm, cell);
      cfg.head = head;
      Model m = Model::initialize(cfg, cell == CellKind::tc ? 21 : 23, 0.5);
      const Tokens x = {2, 3, 4, 5, 6};
      const Tokens y = {7, 8, 9, 2, 3, 4};
      ForwardTrace trace;
      const Tensor out = m.forward(x, y, &trace);
      ModelParams grads = ModelParams::zeros(cfg);
      Tensor d = out;
      if (head == HeadKind::classification) {
        d[1] -= 1.0;
      } else {
        d[0] = 1.0;
      }
      m.backward(trace, d, grads);
      auto f = [&] {
        const Tensor o = m.forward(x, y);
        return head == HeadKind::classification ? cross_entropy(1, o) : o[0];
      };
      auto params = m.registry();
      auto g = make_registry(grads, cfg);
      std::vector<GradCheckTarget> targets;
      for (std::size_t k = 0; k < params.size(); ++k) {
        targets.push_back({params.entries()[k].name, params.entries()[k].tensor, g.entries()[k].tensor});
      }
      const auto report = finite_diff_check(f, targets, 1e-5, 1e-5);
      CHECK_MESSAGE(report.passed(), to_string(cell) << " " << to_string(head) << " worst "
                                                     << report.max_rel_error());
      // Rows never looked up get no gradient.
      for (std::size_t r : {0, 1, 10, 11}) {
        for (double v : grads.embedding.row(r)) CHECK(v == 0.0);
      }
    }
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  for (Architecture arch : {Architecture::clstm, Architecture::nbow, Architecture::parallel_lstm}) {
    ModelConfig cfg = small_config(arch, CellKind::lc);
    cfg.lc_shared = false;
    const Checkpoint ckpt{Model::initialize(cfg, 31), {"<unk>", "<pad>", "a", "b"}};
    const auto path = temp_path("roundtrip.bin");
    save_checkpoint(path, ckpt);
    CHECK(load_checkpoint(path) == ckpt);
    std::filesystem::remove(path);
  }
}

TEST_CASE("damaged checkpoints are format errors") {
  const auto path = temp_path("damaged.bin");
  save_checkpoint(path, {Model::initialize(small_config(Architecture::nbow), 1), {}});
  const auto size = std::filesystem::file_size(path);

  std::filesystem::resize_file(path, size - 3);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  save_checkpoint(path, {Model::initialize(small_config(Architecture::nbow), 1), {}});
  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << "x";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
