#include "coupled/pooling.hpp"

namespace coupled {

std::vector<std::size_t> partition_bounds(std::size_t length, std::size_t parts) {
  std::vector<std::size_t> bounds(parts + 1);
  for (std::size_t a = 0; a <= parts; ++a) bounds[a] = a * length / parts;
  return bounds;
}

PoolResult dynamic_pool(const GridTensor& grid, const PoolSpec& spec) {
  const std::size_t n = grid.n();
  const std::size_t m = grid.m();
  const std::size_t d = grid.d();
  if (spec.p == 0 || spec.q == 0) throw ConfigError("pooling partitions must be at least 1");
  if (spec.p > n || spec.q > m) {
    throw ConfigError("cannot pool a " + std::to_string(n) + "x" + std::to_string(m) +
                      " grid into " + std::to_string(spec.p) + "x" + std::to_string(spec.q) +
                      " cells; reduce the pooling size (p, q) or use longer sentences");
  }
  const auto rows = partition_bounds(n, spec.p);
  const auto cols = partition_bounds(m, spec.q);

  PoolResult out{Tensor({spec.p, spec.q, d}), std::vector<std::size_t>(spec.p * spec.q * d)};
  for (std::size_t a = 0; a < spec.p; ++a) {
    for (std::size_t b = 0; b < spec.q; ++b) {
      for (std::size_t k = 0; k < d; ++k) {
        std::size_t best_i = rows[a], best_j = cols[b];
        double best = grid.at(best_i, best_j, k);
        for (std::size_t i = rows[a]; i < rows[a + 1]; ++i) {
          for (std::size_t j = cols[b]; j < cols[b + 1]; ++j) {
            const double v = grid.at(i, j, k);
            if (v > best) {
              best = v;
              best_i = i;
              best_j = j;
            }
          }
        }
        const std::size_t o = (a * spec.q + b) * d + k;
        out.values[o] = best;
        out.argmax[o] = (best_i * m + best_j) * d + k;
      }
    }
  }
  return out;
}

void dynamic_pool_backward(const PoolResult& pooled, const Tensor& d_values,
                           GridTensor& d_grid) {
  if (d_values.size() != pooled.argmax.size()) {
    throw DimensionError("pool backward: gradient has " + std::to_string(d_values.size()) +
                         " entries, pooled output has " + std::to_string(pooled.argmax.size()));
  }
  auto& dst = d_grid.tensor();
  for (std::size_t o = 0; o < pooled.argmax.size(); ++o) dst[pooled.argmax[o]] += d_values[o];
}

}  // namespace coupled
