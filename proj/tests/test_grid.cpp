#include <doctest.h>

#include <random>

#include "coupled/gradcheck.hpp"
#include "coupled/grid.hpp"
#include "oracles.hpp"

using namespace coupled;

namespace {

std::pair<bool, bool> flips(Direction d) {
  switch (d) {
    case Direction::forward_forward: return {false, false};
    case Direction::forward_backward: return {false, true};
    case Direction::backward_backward: return {true, true};
    case Direction::backward_forward: return {true, false};
  }
  return {false, false};
}

std::size_t first_width(CellKind kind, std::size_t e) { return kind == CellKind::tc ? 2 * e : e; }

}  // namespace

TEST_CASE("all directions agree on a single position") {
  std::mt19937_64 rng(1);
  for (CellKind kind : {CellKind::lc, CellKind::tc}) {
    const auto params = oracle::random_block(kind, first_width(kind, 3), 4, true, rng);
    const Tensor x = oracle::random_tensor({1, 3}, rng);
    const Tensor y = oracle::random_tensor({1, 3}, rng);
    const GridTensor ref = scan(params, Direction::forward_forward, x, y);
    for (Direction d : kAllDirections) CHECK(scan(params, d, x, y) == ref);

    std::vector<GridTensor> four(4, ref);
    const GridTensor agg = aggregate(four);
    for (std::size_t k = 0; k < 4; ++k) CHECK(agg.at(0, 0, k) == 4.0 * ref.at(0, 0, k));
  }
}

TEST_CASE("directions equal the canonical scan on reversed inputs") {
  std::mt19937_64 rng(2);
  for (CellKind kind : {CellKind::lc, CellKind::tc}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto params = oracle::random_block(kind, first_width(kind, 2), 3, trial % 2 == 0, rng);
      const Tensor x = oracle::random_tensor({3 + static_cast<std::size_t>(trial), 2}, rng);
      const Tensor y = oracle::random_tensor({4, 2}, rng);
      for (Direction d : kAllDirections) {
        const auto [fi, fj] = flips(d);
        const GridTensor canon = scan(params, Direction::forward_forward, fi ? oracle::reverse_rows(x) : x,
                                      fj ? oracle::reverse_rows(y) : y);
        CHECK(scan(params, d, x, y) == oracle::flip(canon, fi, fj));
      }
    }
  }
}

TEST_CASE("zero parameters give a zero grid") {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({3, 2}, rng);
  const Tensor y = oracle::random_tensor({2, 2}, rng);
  for (const BlockParams& p : {BlockParams(TcParams::zeros(4, 3)), BlockParams(LcParams::zeros(2, 3, true))}) {
    for (Direction d : kAllDirections) CHECK(scan(p, d, x, y) == GridTensor(3, 2, 3));
  }
}

TEST_CASE("aggregate examples") {
  std::mt19937_64 rng(4);
  const GridTensor g(oracle::random_tensor({2, 3, 2}, rng));
  GridTensor neg = g;
  for (auto& v : neg.tensor().values()) v = -v;
  const std::vector<GridTensor> mixed = {g, neg, g, neg};
  CHECK(aggregate(mixed) == GridTensor(2, 3, 2));
  const std::vector<GridTensor> bad = {g, GridTensor(2, 2, 2)};
  CHECK_THROWS_AS(aggregate(bad), DimensionError);
}

TEST_CASE("scan outputs depend only on reachable prefixes") {
  std::mt19937_64 rng(5);
  for (CellKind kind : {CellKind::lc, CellKind::tc}) {
    const auto params = oracle::random_block(kind, first_width(kind, 2), 3, true, rng);
    Tensor x = oracle::random_tensor({4, 2}, rng);
    Tensor y = oracle::random_tensor({3, 2}, rng);
    const GridTensor before = scan(params, Direction::forward_forward, x, y);
    x.at(2, 0) += 0.5;
    y.at(2, 1) -= 0.5;
    const GridTensor after = scan(params, Direction::forward_forward, x, y);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        const bool reachable = i >= 2 || j >= 2;
        for (std::size_t k = 0; k < 3; ++k) {
          if (reachable) continue;
          CHECK(before.at(i, j, k) == after.at(i, j, k));
        }
      }
    }
    CHECK(before.at(3, 2, 0) != after.at(3, 2, 0));
  }
}

TEST_CASE("stacking") {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({3, 2}, rng);
  const Tensor y = oracle::random_tensor({4, 2}, rng);
  for (CellKind kind : {CellKind::lc, CellKind::tc}) {
    const auto b1 = oracle::random_block(kind, first_width(kind, 2), 3, true, rng);
    std::vector<GridTensor> scans;
    for (Direction d : kAllDirections) scans.push_back(scan(b1, d, x, y));
    const std::vector<BlockParams> one = {b1};
    CHECK(stacked_forward(one, true, x, y) == aggregate(scans));
    CHECK(stacked_forward(one, false, x, y) == scans[0]);

    const auto b2 = oracle::random_block(kind, 3, 3, true, rng);
    const std::vector<BlockParams> two = {b1, b2};
    CHECK_NOTHROW(validate_stack(two, 2, 2));
    const GridTensor out = stacked_forward(two, true, x, y);
    CHECK(out.n() == 3);
    CHECK(out.m() == 4);
    CHECK(out.d() == 3);

    const auto wrong = oracle::random_block(kind, 5, 3, true, rng);
    const std::vector<BlockParams> bad = {b1, wrong};
    CHECK_THROWS_AS(validate_stack(bad, 2, 2), ConfigError);
    CHECK_THROWS_AS(stacked_forward(bad, true, x, y), ConfigError);
  }
}

TEST_CASE("empty or malformed sentences are rejected") {
  const Tensor x({2, 2});
  CHECK_THROWS_AS(DepthInput::pair(Tensor(), x), InputError);
  CHECK_THROWS_AS(DepthInput::pair(x, Tensor()), InputError);
}

TEST_CASE("end-to-end stack gradient") {
  for (CellKind kind : {CellKind::lc, CellKind::tc}) {
    std::mt19937_64 rng(kind == CellKind::tc ? 70 : 71);
    const std::size_t d = 2, e = 2;
    std::vector<BlockParams> blocks = {oracle::random_block(kind, first_width(kind, e), d, true, rng),
                                       oracle::random_block(kind, d, d, true, rng)};
    Tensor x = oracle::random_tensor({3, e}, rng);
    Tensor y = oracle::random_tensor({4, e}, rng);
    const GridTensor w(oracle::random_tensor({3, 4, d}, rng));

    StackTrace trace;
    stacked_forward(blocks, true, x, y, &trace);
    std::vector<BlockParams> grads = {
        kind == CellKind::tc ? BlockParams(TcParams::zeros(2 * e, d)) : BlockParams(LcParams::zeros(e, d, true)),
        kind == CellKind::tc ? BlockParams(TcParams::zeros(d, d)) : BlockParams(LcParams::zeros(d, d, true))};
    Tensor dx = Tensor::zeros_like(x), dy = Tensor::zeros_like(y);
    stacked_backward(blocks, x, y, trace, w, grads, dx, dy);

    auto f = [&] {
      const GridTensor g = stacked_forward(blocks, true, x, y);
      return dot(g.tensor().values(), w.tensor().values());
    };
    std::vector<GradCheckTarget> targets = {{"x", &x, &dx}, {"y", &y, &dy}};
    for (std::size_t b = 0; b < 2; ++b) {
      if (kind == CellKind::tc) {
        auto& p = std::get<TcParams>(blocks[b]);
        auto& g = std::get<TcParams>(grads[b]);
        targets.push_back({"weight", &p.weight, &g.weight});
        targets.push_back({"bias", &p.bias, &g.bias});
      } else {
        auto& p = std::get<LcParams>(blocks[b]);
        auto& g = std::get<LcParams>(grads[b]);
        targets.push_back({"weight", &p.lstm1.weight, &g.lstm1.weight});
        targets.push_back({"bias", &p.lstm1.bias, &g.lstm1.bias});
      }
    }
    const auto report = finite_diff_check(f, targets, 1e-5, 1e-5);
    CHECK_MESSAGE(report.passed(), to_string(kind) << " worst " << report.max_rel_error());
  }
}
