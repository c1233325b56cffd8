#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coupled/tensor.hpp"

namespace coupled {

/// Hidden vector and memory cell at one time step or grid position.
struct CellState {
  Tensor h;
  Tensor c;

  static CellState zeros(std::size_t hidden);
  std::size_t hidden() const { return h.size(); }

  friend bool operator==(const CellState&, const CellState&) = default;
};

/// Affine map of a standard LSTM. Rows of `weight` are stacked in four
/// d-high blocks: candidate, output gate, input gate, forget gate. Columns
/// cover the concatenated input [x; h_prev].
struct LstmParams {
  Tensor weight;  // [4d x (w + d)]
  Tensor bias;    // [4d]

  static LstmParams zeros(std::size_t input_width, std::size_t hidden);
  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t input_width() const { return in_dim() - hidden(); }
  std::size_t param_count() const { return weight.size() + bias.size(); }

  friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

/// Affine map of the tightly coupled cell. Five d-high row blocks:
/// candidate, output, input, forget along Y, forget along X. Columns cover
/// [x_i; y_j; h(i, j-1); h(i-1, j)].
struct TcParams {
  Tensor weight;  // [5d x in_dim]
  Tensor bias;    // [5d]

  /// `depth_width` is the total width of the depth inputs (x and y).
  static TcParams zeros(std::size_t depth_width, std::size_t hidden);
  std::size_t hidden() const { return bias.size() / 5; }
  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t depth_width() const { return in_dim() - 2 * hidden(); }
  std::size_t param_count() const { return weight.size() + bias.size(); }

  friend bool operator==(const TcParams&, const TcParams&) = default;
};

/// The two LSTMs of the loosely coupled cell. Each consumes
/// [depth input; h1; h2] of its predecessor. With `shared` set, `lstm2` is
/// left empty and both equations read `lstm1`; gradients of both sum there.
struct LcParams {
  LstmParams lstm1;
  LstmParams lstm2;
  bool shared = true;

  static LcParams zeros(std::size_t input_width, std::size_t hidden, bool shared);
  const LstmParams& first() const { return lstm1; }
  const LstmParams& second() const { return shared ? lstm1 : lstm2; }
  LstmParams& second_mut() { return shared ? lstm1 : lstm2; }
  std::size_t hidden() const { return lstm1.hidden(); }
  std::size_t input_width() const { return lstm1.in_dim() - 2 * hidden(); }
  std::size_t param_count() const {
    return lstm1.param_count() + (shared ? 0 : lstm2.param_count());
  }

  friend bool operator==(const LcParams&, const LcParams&) = default;
};

/// Activations cached by one gated step for its backward pass.
struct GateTrace {
  std::vector<double> input;   // concatenated affine input
  std::vector<double> gates;   // activated gate blocks, (3 + forget) * d
  std::vector<double> c_prev;  // forget * d, one block per forget gate
  std::vector<double> c;
  std::vector<double> tanh_c;
};

namespace detail {

/// Shared core of the LSTM and TC cells: an affine map over
/// `trace.input`, a tanh candidate, sigmoid output/input gates and
/// `forget_gates` sigmoid forget gates, each paired with one block of
/// `c_prev`. The caller fills `trace.input` before the call.
void gated_forward(const Tensor& weight, const Tensor& bias,
                   std::size_t forget_gates, std::span<const double> c_prev,
                   std::span<double> h, std::span<double> c, GateTrace& trace);

/// Accumulates weight/bias gradients and writes (overwrites) d_input and
/// d_c_prev.
void gated_backward(const Tensor& weight, std::size_t forget_gates,
                    const GateTrace& trace, std::span<const double> dh,
                    std::span<const double> dc, Tensor& d_weight,
                    Tensor& d_bias, std::span<double> d_input,
                    std::span<double> d_c_prev);

}  // namespace detail

// ---------------------------------------------------------------------------
// Standard LSTM step.

CellState lstm_step(const CellState& prev, const Tensor& x,
                    const LstmParams& params, GateTrace* trace = nullptr);

struct LstmStepGrad {
  Tensor dx;
  CellState dprev;
};

/// `grads` accumulates the parameter gradients.
LstmStepGrad lstm_step_backward(const LstmParams& params, const GateTrace& trace,
                                const CellState& dout, LstmParams& grads);

// ---------------------------------------------------------------------------
// Loosely coupled step.

struct LcState {
  CellState first;   // h(1), c(1): encoding of the X prefix
  CellState second;  // h(2), c(2): encoding of the Y prefix

  static LcState zeros(std::size_t hidden);
  /// Per-position output: the two hidden vectors summed.
  Tensor exposed() const;
};

struct LcTrace {
  GateTrace first;
  GateTrace second;
};

/// `prev_x` is the state at the predecessor along X, (i-1, j); `prev_y`
/// along Y, (i, j-1).
LcState lc_step(const LcState& prev_x, const LcState& prev_y, const Tensor& x,
                const Tensor& y, const LcParams& params, LcTrace* trace = nullptr);

struct LcStepGrad {
  Tensor dx;
  Tensor dy;
  LcState dprev_x;
  LcState dprev_y;
};

LcStepGrad lc_step_backward(const LcParams& params, const LcTrace& trace,
                            const LcState& dout, LcParams& grads);

// ---------------------------------------------------------------------------
// Tightly coupled step. `y` may be an empty tensor when the depth input is a
// single fused vector (upper blocks of a stack).

CellState tc_step(const CellState& prev_x, const CellState& prev_y,
                  const Tensor& x, const Tensor& y, const TcParams& params,
                  GateTrace* trace = nullptr);

struct TcStepGrad {
  Tensor dx;
  Tensor dy;
  CellState dprev_x;
  CellState dprev_y;
};

TcStepGrad tc_step_backward(const TcParams& params, const GateTrace& trace,
                            const CellState& dout, std::size_t x_width,
                            TcParams& grads);

}  // namespace coupled
