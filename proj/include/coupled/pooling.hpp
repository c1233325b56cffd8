#pragma once

#include <cstddef>
#include <vector>

#include "coupled/grid.hpp"

namespace coupled {

/// Number of row (p) and column (q) partitions of each hidden slice.
struct PoolSpec {
  std::size_t p = 1;
  std::size_t q = 1;

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// Boundaries floor(a * length / parts) for a = 0..parts. Consecutive
/// boundaries delimit the half-open ranges of the partition.
std::vector<std::size_t> partition_bounds(std::size_t length, std::size_t parts);

struct PoolResult {
  Tensor values;                    // [p x q x d]
  std::vector<std::size_t> argmax;  // flat index into the input grid, per output
};

/// Max over each of the p x q grid cells of every hidden slice. Ties go to
/// the lowest (row, column). Throws ConfigError when p > n or q > m.
PoolResult dynamic_pool(const GridTensor& grid, const PoolSpec& spec);

/// Routes each output gradient to its argmax position, adding into `d_grid`.
void dynamic_pool_backward(const PoolResult& pooled, const Tensor& d_values,
                           GridTensor& d_grid);

}  // namespace coupled
