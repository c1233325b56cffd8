#include <doctest.h>

#include <random>
#include <string>

#include "coupled/pooling.hpp"
#include "oracles.hpp"

using namespace coupled;

namespace {

GridTensor slice(std::initializer_list<std::initializer_list<double>> rows) {
  const Tensor m = Tensor::matrix(rows);
  GridTensor g(m.dim(0), m.dim(1), 1);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) g.at(i, j, 0) = m.at(i, j);
  }
  return g;
}

}  // namespace

TEST_CASE("pooling examples") {
  const auto two = slice({{1, 2}, {3, 4}});
  CHECK(dynamic_pool(two, {1, 1}).values.values()[0] == 4.0);
  const auto id = dynamic_pool(two, {2, 2}).values;
  CHECK(std::vector<double>(id.values().begin(), id.values().end()) == std::vector<double>{1, 2, 3, 4});
  const auto three = dynamic_pool(slice({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}), {2, 2}).values;
  CHECK(std::vector<double>(three.values().begin(), three.values().end()) == std::vector<double>{1, 3, 7, 9});
}

TEST_CASE("partition bounds") {
  CHECK(partition_bounds(3, 2) == std::vector<std::size_t>{0, 1, 3});
  CHECK(partition_bounds(5, 1) == std::vector<std::size_t>{0, 5});
  CHECK(partition_bounds(4, 4) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t p = 1; p <= n; ++p) {
      const auto b = partition_bounds(n, p);
      REQUIRE(b.size() == p + 1);
      CHECK(b.front() == 0);
      CHECK(b.back() == n);
      for (std::size_t a = 0; a < p; ++a) {
        CHECK(b[a + 1] > b[a]);
        CHECK(b[a + 1] - b[a] <= n / p + 1);
      }
    }
  }
}

TEST_CASE("oversized pools are configuration errors") {
  const GridTensor g(2, 3, 1);
  try {
    dynamic_pool(g, {3, 1});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("reduce") != std::string::npos);
  }
  CHECK_THROWS_AS(dynamic_pool(g, {1, 4}), ConfigError);
  CHECK_THROWS_AS(dynamic_pool(g, {0, 1}), ConfigError);
}

TEST_CASE("pooling matches brute force and conserves gradient mass") {
  std::mt19937_64 rng(12);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t m = 1; m <= 8; ++m) {
      const GridTensor g(oracle::random_tensor({n, m, 2}, rng));
      for (std::size_t p = 1; p <= n; ++p) {
        for (std::size_t q = 1; q <= m; ++q) {
          const auto pooled = dynamic_pool(g, {p, q});
          const auto ref = oracle::pool(g, p, q);
          for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t b = 0; b < q; ++b) {
              for (std::size_t k = 0; k < 2; ++k) {
                REQUIRE(pooled.values[(a * q + b) * 2 + k] == ref[a][b][k]);
              }
            }
          }
          const Tensor dv = oracle::random_tensor({p, q, 2}, rng);
          GridTensor dg(n, m, 2);
          dynamic_pool_backward(pooled, dv, dg);
          double in = 0.0, out = 0.0;
          for (double v : dv.values()) in += v;
          for (double v : dg.tensor().values()) out += v;
          CHECK(std::abs(in - out) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("ties route to the first position") {
  GridTensor g(2, 2, 1);
  g.tensor().fill(1.0);
  const auto pooled = dynamic_pool(g, {1, 1});
  CHECK(pooled.argmax[0] == 0);
  GridTensor dg(2, 2, 1);
  dynamic_pool_backward(pooled, Tensor({1, 1, 1}, {2.5}), dg);
  CHECK(dg.at(0, 0, 0) == 2.5);
  CHECK(dg.at(1, 1, 0) == 0.0);
}
