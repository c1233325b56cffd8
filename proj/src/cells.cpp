#include "coupled/cells.hpp"

#include <algorithm>
#include <cmath>

namespace coupled {

namespace {

// Gate block order inside the affine output.
constexpr std::size_t kCandidate = 0;
constexpr std::size_t kOutput = 1;
constexpr std::size_t kInput = 2;
constexpr std::size_t kForget = 3;

void require_width(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected width " +
                         std::to_string(want) + ", got " + std::to_string(got));
  }
}

template <typename... Spans>
void concat_into(std::vector<double>& out, const Spans&... parts) {
  out.clear();
  (out.insert(out.end(), parts.begin(), parts.end()), ...);
}

std::span<const double> view(const Tensor& t) { return t.values(); }

}  // namespace

CellState CellState::zeros(std::size_t hidden) {
  return {Tensor({hidden}), Tensor({hidden})};
}

LstmParams LstmParams::zeros(std::size_t input_width, std::size_t hidden) {
  return {Tensor({4 * hidden, input_width + hidden}), Tensor({4 * hidden})};
}

TcParams TcParams::zeros(std::size_t depth_width, std::size_t hidden) {
  return {Tensor({5 * hidden, depth_width + 2 * hidden}), Tensor({5 * hidden})};
}

LcParams LcParams::zeros(std::size_t input_width, std::size_t hidden, bool shared) {
  LcParams p;
  p.shared = shared;
  p.lstm1 = LstmParams::zeros(input_width + hidden, hidden);
  if (!shared) p.lstm2 = LstmParams::zeros(input_width + hidden, hidden);
  return p;
}

namespace detail {

void gated_forward(const Tensor& weight, const Tensor& bias,
                   std::size_t forget_gates, std::span<const double> c_prev,
                   std::span<double> h, std::span<double> c, GateTrace& trace) {
  const std::size_t d = h.size();
  const std::size_t rows = (3 + forget_gates) * d;
  const std::size_t cols = trace.input.size();

  trace.gates.assign(bias.values().begin(), bias.values().end());
  kernels::gemv_add(weight.values(), rows, cols, trace.input, trace.gates);

  double* g = trace.gates.data();
  for (std::size_t k = 0; k < d; ++k) g[kCandidate * d + k] = std::tanh(g[kCandidate * d + k]);
  for (std::size_t k = d; k < rows; ++k) g[k] = sigmoid(g[k]);

  trace.c_prev.assign(c_prev.begin(), c_prev.end());
  trace.c.resize(d);
  trace.tanh_c.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    double ck = g[kCandidate * d + k] * g[kInput * d + k];
    for (std::size_t f = 0; f < forget_gates; ++f) {
      ck += c_prev[f * d + k] * g[(kForget + f) * d + k];
    }
    const double tc = std::tanh(ck);
    trace.c[k] = ck;
    trace.tanh_c[k] = tc;
    c[k] = ck;
    h[k] = g[kOutput * d + k] * tc;
  }
}

void gated_backward(const Tensor& weight, std::size_t forget_gates,
                    const GateTrace& trace, std::span<const double> dh,
                    std::span<const double> dc, Tensor& d_weight,
                    Tensor& d_bias, std::span<double> d_input,
                    std::span<double> d_c_prev) {
  const std::size_t d = dh.size();
  const std::size_t rows = (3 + forget_gates) * d;
  const std::size_t cols = trace.input.size();
  const double* g = trace.gates.data();

  // Gradient w.r.t. the pre-activation affine output.
  thread_local std::vector<double> dz;
  dz.assign(rows, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double o = g[kOutput * d + k];
    const double tc = trace.tanh_c[k];
    const double dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
    const double cand = g[kCandidate * d + k];
    const double in = g[kInput * d + k];

    dz[kOutput * d + k] = dh[k] * tc * o * (1.0 - o);
    dz[kCandidate * d + k] = dck * in * (1.0 - cand * cand);
    dz[kInput * d + k] = dck * cand * in * (1.0 - in);
    for (std::size_t f = 0; f < forget_gates; ++f) {
      const double fg = g[(kForget + f) * d + k];
      dz[(kForget + f) * d + k] = dck * trace.c_prev[f * d + k] * fg * (1.0 - fg);
      d_c_prev[f * d + k] = dck * fg;
    }
  }

  kernels::outer_add(dz, trace.input, d_weight.values());
  kernels::axpy(1.0, dz, d_bias.values());
  std::fill(d_input.begin(), d_input.end(), 0.0);
  kernels::gemv_t_add(weight.values(), rows, cols, dz, d_input);
}

}  // namespace detail

// ---------------------------------------------------------------------------

CellState lstm_step(const CellState& prev, const Tensor& x,
                    const LstmParams& params, GateTrace* trace) {
  const std::size_t d = params.hidden();
  require_width(prev.h.size(), d, "lstm_step hidden state");
  require_width(prev.c.size(), d, "lstm_step memory cell");
  require_width(x.size() + d, params.in_dim(), "lstm_step input [x; h]");

  GateTrace local;
  GateTrace& t = trace ? *trace : local;
  concat_into(t.input, view(x), view(prev.h));
  CellState out = CellState::zeros(d);
  detail::gated_forward(params.weight, params.bias, 1, prev.c.values(),
                        out.h.values(), out.c.values(), t);
  return out;
}

LstmStepGrad lstm_step_backward(const LstmParams& params, const GateTrace& trace,
                                const CellState& dout, LstmParams& grads) {
  const std::size_t d = params.hidden();
  const std::size_t w = params.input_width();
  std::vector<double> d_input(params.in_dim());
  LstmStepGrad out{Tensor({w}), CellState::zeros(d)};
  detail::gated_backward(params.weight, 1, trace, dout.h.values(), dout.c.values(),
                         grads.weight, grads.bias, d_input, out.dprev.c.values());
  std::copy_n(d_input.begin(), w, out.dx.data());
  std::copy_n(d_input.begin() + w, d, out.dprev.h.data());
  return out;
}

// ---------------------------------------------------------------------------

LcState LcState::zeros(std::size_t hidden) {
  return {CellState::zeros(hidden), CellState::zeros(hidden)};
}

Tensor LcState::exposed() const { return add(first.h, second.h); }

LcState lc_step(const LcState& prev_x, const LcState& prev_y, const Tensor& x,
                const Tensor& y, const LcParams& params, LcTrace* trace) {
  const std::size_t d = params.hidden();
  for (const LcState* s : {&prev_x, &prev_y}) {
    require_width(s->first.h.size(), d, "lc_step hidden state");
    require_width(s->second.h.size(), d, "lc_step hidden state");
    require_width(s->first.c.size(), d, "lc_step memory cell");
    require_width(s->second.c.size(), d, "lc_step memory cell");
  }
  require_width(x.size() + 2 * d, params.first().in_dim(), "lc_step LSTM1 input [x; h1; h2]");
  require_width(y.size() + 2 * d, params.second().in_dim(), "lc_step LSTM2 input [y; h1; h2]");

  LcTrace local;
  LcTrace& t = trace ? *trace : local;
  LcState out = LcState::zeros(d);

  concat_into(t.first.input, view(x), view(prev_x.first.h), view(prev_x.second.h));
  detail::gated_forward(params.first().weight, params.first().bias, 1,
                        prev_x.first.c.values(), out.first.h.values(),
                        out.first.c.values(), t.first);

  concat_into(t.second.input, view(y), view(prev_y.first.h), view(prev_y.second.h));
  detail::gated_forward(params.second().weight, params.second().bias, 1,
                        prev_y.second.c.values(), out.second.h.values(),
                        out.second.c.values(), t.second);
  return out;
}

LcStepGrad lc_step_backward(const LcParams& params, const LcTrace& trace,
                            const LcState& dout, LcParams& grads) {
  const std::size_t d = params.hidden();
  const std::size_t wx = params.first().in_dim() - 2 * d;
  const std::size_t wy = params.second().in_dim() - 2 * d;
  LcStepGrad out{Tensor({wx}), Tensor({wy}), LcState::zeros(d), LcState::zeros(d)};

  std::vector<double> d_input(params.first().in_dim());
  detail::gated_backward(params.first().weight, 1, trace.first, dout.first.h.values(),
                         dout.first.c.values(), grads.lstm1.weight, grads.lstm1.bias,
                         d_input, out.dprev_x.first.c.values());
  std::copy_n(d_input.begin(), wx, out.dx.data());
  std::copy_n(d_input.begin() + wx, d, out.dprev_x.first.h.data());
  std::copy_n(d_input.begin() + wx + d, d, out.dprev_x.second.h.data());

  d_input.assign(params.second().in_dim(), 0.0);
  LstmParams& g2 = grads.second_mut();
  detail::gated_backward(params.second().weight, 1, trace.second, dout.second.h.values(),
                         dout.second.c.values(), g2.weight, g2.bias, d_input,
                         out.dprev_y.second.c.values());
  std::copy_n(d_input.begin(), wy, out.dy.data());
  std::copy_n(d_input.begin() + wy, d, out.dprev_y.first.h.data());
  std::copy_n(d_input.begin() + wy + d, d, out.dprev_y.second.h.data());
  return out;
}

// ---------------------------------------------------------------------------

CellState tc_step(const CellState& prev_x, const CellState& prev_y,
                  const Tensor& x, const Tensor& y, const TcParams& params,
                  GateTrace* trace) {
  const std::size_t d = params.hidden();
  for (const CellState* s : {&prev_x, &prev_y}) {
    require_width(s->h.size(), d, "tc_step hidden state");
    require_width(s->c.size(), d, "tc_step memory cell");
  }
  require_width(x.size() + y.size() + 2 * d, params.in_dim(),
                "tc_step input [x; y; h(i,j-1); h(i-1,j)]");

  GateTrace local;
  GateTrace& t = trace ? *trace : local;
  concat_into(t.input, view(x), view(y), view(prev_y.h), view(prev_x.h));
  std::vector<double> c_prev;
  concat_into(c_prev, view(prev_y.c), view(prev_x.c));
  CellState out = CellState::zeros(d);
  detail::gated_forward(params.weight, params.bias, 2, c_prev, out.h.values(),
                        out.c.values(), t);
  return out;
}

TcStepGrad tc_step_backward(const TcParams& params, const GateTrace& trace,
                            const CellState& dout, std::size_t x_width,
                            TcParams& grads) {
  const std::size_t d = params.hidden();
  const std::size_t wy = params.depth_width() - x_width;
  std::vector<double> d_input(params.in_dim());
  std::vector<double> d_c_prev(2 * d);
  detail::gated_backward(params.weight, 2, trace, dout.h.values(), dout.c.values(),
                         grads.weight, grads.bias, d_input, d_c_prev);

  TcStepGrad out{Tensor({x_width}), wy ? Tensor({wy}) : Tensor(),
                 CellState::zeros(d), CellState::zeros(d)};
  auto it = d_input.begin();
  std::copy_n(it, x_width, out.dx.data());
  std::copy_n(it + x_width, wy, out.dy.data());
  std::copy_n(it + x_width + wy, d, out.dprev_y.h.data());
  std::copy_n(it + x_width + wy + d, d, out.dprev_x.h.data());
  std::copy_n(d_c_prev.begin(), d, out.dprev_y.c.data());
  std::copy_n(d_c_prev.begin() + d, d, out.dprev_x.c.data());
  return out;
}

}  // namespace coupled
