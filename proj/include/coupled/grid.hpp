#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coupled/cells.hpp"
#include "coupled/tensor.hpp"

namespace coupled {

enum class CellKind { lc, tc };

/// Scan order over the (i, j) grid, named by the sense of travel along X
/// and Y. The predecessors of (i, j) are:
///   forward_forward    (i-1, j), (i, j-1)
///   forward_backward   (i-1, j), (i, j+1)
///   backward_backward  (i+1, j), (i, j+1)
///   backward_forward   (i+1, j), (i, j-1)
enum class Direction { forward_forward, forward_backward, backward_backward, backward_forward };

inline constexpr std::array<Direction, 4> kAllDirections = {
    Direction::forward_forward, Direction::forward_backward,
    Direction::backward_backward, Direction::backward_forward};

std::string to_string(CellKind kind);
std::string to_string(Direction direction);

/// n x m x d field of per-position vectors.
class GridTensor {
 public:
  GridTensor() = default;
  GridTensor(std::size_t n, std::size_t m, std::size_t d) : values_({n, m, d}) {}
  explicit GridTensor(Tensor values);

  std::size_t n() const { return values_.dim(0); }
  std::size_t m() const { return values_.dim(1); }
  std::size_t d() const { return values_.dim(2); }

  std::span<double> at(std::size_t i, std::size_t j) {
    return values_.values().subspan((i * m() + j) * d(), d());
  }
  std::span<const double> at(std::size_t i, std::size_t j) const {
    return values_.values().subspan((i * m() + j) * d(), d());
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return values_[(i * m() + j) * d() + k]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return values_[(i * m() + j) * d() + k]; }

  Tensor& tensor() { return values_; }
  const Tensor& tensor() const { return values_; }

  friend bool operator==(const GridTensor&, const GridTensor&) = default;

 private:
  Tensor values_;
};

/// Parameters of one block. All four directional scans of the block share
/// them.
using BlockParams = std::variant<LcParams, TcParams>;

CellKind kind_of(const BlockParams& params);
std::size_t hidden_of(const BlockParams& params);
std::size_t param_count(const BlockParams& params);

/// What a block reads along the depth dimension at (i, j): either the two
/// embedded sentences (first block) or a single fused grid from the block
/// below, which stands in for both x_i and y_j.
class DepthInput {
 public:
  static DepthInput pair(const Tensor& x_seq, const Tensor& y_seq);
  static DepthInput fused(const GridTensor& below);

  bool is_fused() const { return fused_ != nullptr; }
  std::size_t n() const;
  std::size_t m() const;
  std::size_t x_width() const;
  /// Zero for fused input.
  std::size_t y_width() const;

  std::span<const double> x_at(std::size_t i, std::size_t j) const;
  /// Empty for fused input.
  std::span<const double> y_at(std::size_t i, std::size_t j) const;

 private:
  const Tensor* x_seq_ = nullptr;
  const Tensor* y_seq_ = nullptr;
  const GridTensor* fused_ = nullptr;
};

/// Gradient with respect to a DepthInput, shaped like it.
struct DepthGrad {
  Tensor dx_seq;      // pair input
  Tensor dy_seq;      // pair input
  GridTensor dfused;  // fused input

  static DepthGrad zeros_like(const DepthInput& input);
};

/// Per-position cell activations of one directional scan. TC stores one
/// trace per position, LC two (LSTM1 then LSTM2).
struct ScanTrace {
  Direction direction = Direction::forward_forward;
  std::vector<GateTrace> gates;
};

/// Runs one directional scan. Positions are visited in row-major order
/// along the scan's sense of travel, so both predecessors of every position
/// are computed before it; predecessors outside the grid are zero states.
GridTensor scan(const BlockParams& params, Direction direction,
                const DepthInput& input, ScanTrace* trace = nullptr);

/// Convenience overload for a first-block scan over embedded sentences.
GridTensor scan(const BlockParams& params, Direction direction,
                const Tensor& x_seq, const Tensor& y_seq);

/// Accumulates parameter gradients into `grads` (same alternative as
/// `params`) and input gradients into `d_input`.
void scan_backward(const BlockParams& params, const DepthInput& input,
                   const ScanTrace& trace, const GridTensor& d_out,
                   BlockParams& grads, DepthGrad& d_input);

/// Elementwise sum of the directional grids.
GridTensor aggregate(std::span<const GridTensor> grids);

struct BlockTrace {
  std::vector<ScanTrace> scans;
};

/// Directional scans (all four, or only forward_forward when
/// `four_directions` is false) followed by aggregation.
GridTensor block_forward(const BlockParams& params, bool four_directions,
                         const DepthInput& input, BlockTrace* trace = nullptr);

void block_backward(const BlockParams& params, const DepthInput& input,
                    const BlockTrace& trace, const GridTensor& d_out,
                    BlockParams& grads, DepthGrad& d_input);

struct StackTrace {
  std::vector<BlockTrace> blocks;
  std::vector<GridTensor> outputs;
};

/// Checks that block 1 fits the embedding width and every later block
/// consumes the previous block's hidden width. Throws ConfigError.
void validate_stack(std::span<const BlockParams> blocks, std::size_t x_width,
                    std::size_t y_width);

GridTensor stacked_forward(std::span<const BlockParams> blocks, bool four_directions,
                           const Tensor& x_seq, const Tensor& y_seq,
                           StackTrace* trace = nullptr);

/// Backward through the whole stack; adds into `grads`, `dx_seq`, `dy_seq`.
void stacked_backward(std::span<const BlockParams> blocks, const Tensor& x_seq,
                      const Tensor& y_seq, const StackTrace& trace,
                      const GridTensor& d_out, std::span<BlockParams> grads,
                      Tensor& dx_seq, Tensor& dy_seq);

}  // namespace coupled
