#include "coupled/grid.hpp"

#include <algorithm>

namespace coupled {

namespace {

struct Travel {
  int step_x;  // +1: predecessor along X is i-1
  int step_y;  // +1: predecessor along Y is j-1
};

Travel travel_of(Direction direction) {
  switch (direction) {
    case Direction::forward_forward: return {+1, +1};
    case Direction::forward_backward: return {+1, -1};
    case Direction::backward_backward: return {-1, -1};
    case Direction::backward_forward: return {-1, +1};
  }
  return {+1, +1};
}

/// Visit order for one scan plus predecessor lookup.
class ScanOrder {
 public:
  ScanOrder(Direction direction, std::size_t n, std::size_t m)
      : travel_(travel_of(direction)), n_(n), m_(m) {}

  std::size_t count() const { return n_ * m_; }

  /// k-th visited position.
  std::pair<std::size_t, std::size_t> position(std::size_t k) const {
    const std::size_t a = k / m_;
    const std::size_t b = k % m_;
    return {travel_.step_x > 0 ? a : n_ - 1 - a, travel_.step_y > 0 ? b : m_ - 1 - b};
  }

  /// Flat index of the predecessor along X, or -1 at the boundary.
  long prev_x(std::size_t i, std::size_t j) const {
    const long pi = static_cast<long>(i) - travel_.step_x;
    if (pi < 0 || pi >= static_cast<long>(n_)) return -1;
    return pi * static_cast<long>(m_) + static_cast<long>(j);
  }

  long prev_y(std::size_t i, std::size_t j) const {
    const long pj = static_cast<long>(j) - travel_.step_y;
    if (pj < 0 || pj >= static_cast<long>(m_)) return -1;
    return static_cast<long>(i * m_) + pj;
  }

 private:
  Travel travel_;
  std::size_t n_;
  std::size_t m_;
};

/// Per-position state fields of a scan, with a zero block for boundaries.
class StateField {
 public:
  StateField(std::size_t positions, std::size_t d) : d_(d), data_((positions + 1) * d, 0.0) {}

  std::span<double> at(std::size_t p) { return {data_.data() + (p + 1) * d_, d_}; }
  /// -1 yields the zero boundary state.
  std::span<const double> at_or_zero(long p) const {
    return {data_.data() + static_cast<std::size_t>(p + 1) * d_, d_};
  }
  std::span<double> at_or_scratch(long p) {
    return {data_.data() + static_cast<std::size_t>(p + 1) * d_, d_};
  }
  /// Reset the boundary slot; backward passes write junk into it.
  void clear_boundary() { std::fill_n(data_.begin(), d_, 0.0); }

 private:
  std::size_t d_;
  std::vector<double> data_;
};

template <typename... Spans>
void concat_into(std::vector<double>& out, const Spans&... parts) {
  out.clear();
  (out.insert(out.end(), parts.begin(), parts.end()), ...);
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
}

void check_block_fits(const BlockParams& params, const DepthInput& input) {
  const std::size_t d = hidden_of(params);
  if (const auto* tc = std::get_if<TcParams>(&params)) {
    const std::size_t want = input.x_width() + input.y_width();
    if (tc->depth_width() != want) {
      throw DimensionError("TC block expects depth width " + std::to_string(tc->depth_width()) +
                           ", input provides " + std::to_string(want));
    }
    return;
  }
  const auto& lc = std::get<LcParams>(params);
  const std::size_t wy = input.is_fused() ? input.x_width() : input.y_width();
  if (lc.first().in_dim() != input.x_width() + 2 * d ||
      lc.second().in_dim() != wy + 2 * d) {
    throw DimensionError("LC block expects input widths " +
                         std::to_string(lc.first().in_dim() - 2 * d) + "/" +
                         std::to_string(lc.second().in_dim() - 2 * d) + ", input provides " +
                         std::to_string(input.x_width()) + "/" + std::to_string(wy));
  }
}

}  // namespace

std::string to_string(CellKind kind) { return kind == CellKind::lc ? "lc" : "tc"; }

std::string to_string(Direction direction) {
  switch (direction) {
    case Direction::forward_forward: return "forward_forward";
    case Direction::forward_backward: return "forward_backward";
    case Direction::backward_backward: return "backward_backward";
    case Direction::backward_forward: return "backward_forward";
  }
  return "?";
}

GridTensor::GridTensor(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 3) {
    throw DimensionError("grid tensor must be rank 3, got " + shape_string(values_.shape()));
  }
}

CellKind kind_of(const BlockParams& params) {
  return std::holds_alternative<LcParams>(params) ? CellKind::lc : CellKind::tc;
}

std::size_t hidden_of(const BlockParams& params) {
  return std::visit([](const auto& p) { return p.hidden(); }, params);
}

std::size_t param_count(const BlockParams& params) {
  return std::visit([](const auto& p) { return p.param_count(); }, params);
}

// ---------------------------------------------------------------------------

DepthInput DepthInput::pair(const Tensor& x_seq, const Tensor& y_seq) {
  if (x_seq.rank() != 2 || y_seq.rank() != 2) {
    throw InputError("scan: sentences must be non-empty [length x width] matrices, got " +
                     shape_string(x_seq.shape()) + " and " + shape_string(y_seq.shape()));
  }
  DepthInput in;
  in.x_seq_ = &x_seq;
  in.y_seq_ = &y_seq;
  return in;
}

DepthInput DepthInput::fused(const GridTensor& below) {
  DepthInput in;
  in.fused_ = &below;
  return in;
}

std::size_t DepthInput::n() const { return fused_ ? fused_->n() : x_seq_->dim(0); }
std::size_t DepthInput::m() const { return fused_ ? fused_->m() : y_seq_->dim(0); }
std::size_t DepthInput::x_width() const { return fused_ ? fused_->d() : x_seq_->dim(1); }
std::size_t DepthInput::y_width() const { return fused_ ? 0 : y_seq_->dim(1); }

std::span<const double> DepthInput::x_at(std::size_t i, std::size_t j) const {
  return fused_ ? fused_->at(i, j) : x_seq_->row(i);
}

std::span<const double> DepthInput::y_at(std::size_t, std::size_t j) const {
  return fused_ ? std::span<const double>() : y_seq_->row(j);
}

DepthGrad DepthGrad::zeros_like(const DepthInput& input) {
  DepthGrad g;
  if (input.is_fused()) {
    g.dfused = GridTensor(input.n(), input.m(), input.x_width());
  } else {
    g.dx_seq = Tensor({input.n(), input.x_width()});
    g.dy_seq = Tensor({input.m(), input.y_width()});
  }
  return g;
}

// ---------------------------------------------------------------------------

GridTensor scan(const BlockParams& params, Direction direction,
                const DepthInput& input, ScanTrace* trace) {
  check_block_fits(params, input);
  const std::size_t n = input.n();
  const std::size_t m = input.m();
  const std::size_t d = hidden_of(params);
  const ScanOrder order(direction, n, m);
  GridTensor out(n, m, d);

  ScanTrace local;
  ScanTrace& t = trace ? *trace : local;
  t.direction = direction;

  if (const auto* tc = std::get_if<TcParams>(&params)) {
    t.gates.resize(order.count());
    StateField h(order.count(), d), c(order.count(), d);
    std::vector<double> c_prev;
    for (std::size_t k = 0; k < order.count(); ++k) {
      const auto [i, j] = order.position(k);
      const std::size_t p = i * m + j;
      const long px = order.prev_x(i, j);
      const long py = order.prev_y(i, j);
      GateTrace& g = t.gates[p];
      concat_into(g.input, input.x_at(i, j), input.y_at(i, j), h.at_or_zero(py), h.at_or_zero(px));
      concat_into(c_prev, c.at_or_zero(py), c.at_or_zero(px));
      detail::gated_forward(tc->weight, tc->bias, 2, c_prev, h.at(p), c.at(p), g);
      std::copy_n(h.at(p).begin(), d, out.at(i, j).begin());
    }
    return out;
  }

  const auto& lc = std::get<LcParams>(params);
  t.gates.resize(2 * order.count());
  StateField h1(order.count(), d), c1(order.count(), d);
  StateField h2(order.count(), d), c2(order.count(), d);
  for (std::size_t k = 0; k < order.count(); ++k) {
    const auto [i, j] = order.position(k);
    const std::size_t p = i * m + j;
    const long px = order.prev_x(i, j);
    const long py = order.prev_y(i, j);
    const auto y_in = input.is_fused() ? input.x_at(i, j) : input.y_at(i, j);

    GateTrace& g1 = t.gates[2 * p];
    concat_into(g1.input, input.x_at(i, j), h1.at_or_zero(px), h2.at_or_zero(px));
    detail::gated_forward(lc.first().weight, lc.first().bias, 1, c1.at_or_zero(px), h1.at(p),
                          c1.at(p), g1);

    GateTrace& g2 = t.gates[2 * p + 1];
    concat_into(g2.input, y_in, h1.at_or_zero(py), h2.at_or_zero(py));
    detail::gated_forward(lc.second().weight, lc.second().bias, 1, c2.at_or_zero(py), h2.at(p),
                          c2.at(p), g2);

    auto dst = out.at(i, j);
    for (std::size_t q = 0; q < d; ++q) dst[q] = h1.at(p)[q] + h2.at(p)[q];
  }
  return out;
}

GridTensor scan(const BlockParams& params, Direction direction,
                const Tensor& x_seq, const Tensor& y_seq) {
  return scan(params, direction, DepthInput::pair(x_seq, y_seq));
}

void scan_backward(const BlockParams& params, const DepthInput& input,
                   const ScanTrace& trace, const GridTensor& d_out,
                   BlockParams& grads, DepthGrad& d_input) {
  const std::size_t n = input.n();
  const std::size_t m = input.m();
  const std::size_t d = hidden_of(params);
  const ScanOrder order(trace.direction, n, m);
  const std::size_t wx = input.x_width();

  auto route_depth = [&](std::size_t i, std::size_t j, std::span<const double> dx,
                         std::span<const double> dy) {
    if (input.is_fused()) {
      add_into(d_input.dfused.at(i, j), dx);
      add_into(d_input.dfused.at(i, j), dy);
    } else {
      add_into(d_input.dx_seq.row(i), dx);
      add_into(d_input.dy_seq.row(j), dy);
    }
  };

  if (const auto* tc = std::get_if<TcParams>(&params)) {
    auto& g = std::get<TcParams>(grads);
    const std::size_t wy = input.y_width();
    StateField dh(order.count(), d), dc(order.count(), d);
    std::vector<double> d_in(tc->in_dim()), d_c_prev(2 * d), dh_total(d);
    for (std::size_t k = order.count(); k-- > 0;) {
      const auto [i, j] = order.position(k);
      const std::size_t p = i * m + j;
      const long px = order.prev_x(i, j);
      const long py = order.prev_y(i, j);
      const auto up = d_out.at(i, j);
      for (std::size_t q = 0; q < d; ++q) dh_total[q] = up[q] + dh.at(p)[q];
      detail::gated_backward(tc->weight, 2, trace.gates[p], dh_total, dc.at(p), g.weight,
                             g.bias, d_in, d_c_prev);
      const std::span<const double> din(d_in);
      route_depth(i, j, din.subspan(0, wx), din.subspan(wx, wy));
      add_into(dh.at_or_scratch(py), din.subspan(wx + wy, d));
      add_into(dh.at_or_scratch(px), din.subspan(wx + wy + d, d));
      add_into(dc.at_or_scratch(py), std::span<const double>(d_c_prev).subspan(0, d));
      add_into(dc.at_or_scratch(px), std::span<const double>(d_c_prev).subspan(d, d));
      dh.clear_boundary();
      dc.clear_boundary();
    }
    return;
  }

  const auto& lc = std::get<LcParams>(params);
  auto& g = std::get<LcParams>(grads);
  LstmParams& g1 = g.lstm1;
  LstmParams& g2 = g.second_mut();
  const std::size_t wy = lc.second().in_dim() - 2 * d;
  StateField dh1(order.count(), d), dc1(order.count(), d);
  StateField dh2(order.count(), d), dc2(order.count(), d);
  std::vector<double> d_in1(lc.first().in_dim()), d_in2(lc.second().in_dim());
  std::vector<double> d_c_prev(d), dh_total(d);
  for (std::size_t k = order.count(); k-- > 0;) {
    const auto [i, j] = order.position(k);
    const std::size_t p = i * m + j;
    const long px = order.prev_x(i, j);
    const long py = order.prev_y(i, j);
    const auto up = d_out.at(i, j);

    for (std::size_t q = 0; q < d; ++q) dh_total[q] = up[q] + dh1.at(p)[q];
    detail::gated_backward(lc.first().weight, 1, trace.gates[2 * p], dh_total, dc1.at(p),
                           g1.weight, g1.bias, d_in1, d_c_prev);
    add_into(dc1.at_or_scratch(px), d_c_prev);

    for (std::size_t q = 0; q < d; ++q) dh_total[q] = up[q] + dh2.at(p)[q];
    detail::gated_backward(lc.second().weight, 1, trace.gates[2 * p + 1], dh_total, dc2.at(p),
                           g2.weight, g2.bias, d_in2, d_c_prev);
    add_into(dc2.at_or_scratch(py), d_c_prev);

    const std::span<const double> a(d_in1), b(d_in2);
    route_depth(i, j, a.subspan(0, wx), b.subspan(0, wy));
    add_into(dh1.at_or_scratch(px), a.subspan(wx, d));
    add_into(dh2.at_or_scratch(px), a.subspan(wx + d, d));
    add_into(dh1.at_or_scratch(py), b.subspan(wy, d));
    add_into(dh2.at_or_scratch(py), b.subspan(wy + d, d));
    dh1.clear_boundary();
    dh2.clear_boundary();
    dc1.clear_boundary();
    dc2.clear_boundary();
  }
}

// ---------------------------------------------------------------------------

GridTensor aggregate(std::span<const GridTensor> grids) {
  if (grids.empty()) throw DimensionError("aggregate: no grids");
  GridTensor out = grids.front();
  for (std::size_t g = 1; g < grids.size(); ++g) {
    if (grids[g].tensor().shape() != out.tensor().shape()) {
      throw DimensionError("aggregate: shape mismatch " + shape_string(out.tensor().shape()) +
                           " vs " + shape_string(grids[g].tensor().shape()));
    }
    kernels::axpy(1.0, grids[g].tensor().values(), out.tensor().values());
  }
  return out;
}

GridTensor block_forward(const BlockParams& params, bool four_directions,
                         const DepthInput& input, BlockTrace* trace) {
  const std::size_t count = four_directions ? kAllDirections.size() : 1;
  BlockTrace local;
  BlockTrace& t = trace ? *trace : local;
  t.scans.resize(count);
  std::vector<GridTensor> grids;
  grids.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    grids.push_back(scan(params, kAllDirections[s], input, &t.scans[s]));
  }
  return aggregate(grids);
}

void block_backward(const BlockParams& params, const DepthInput& input,
                    const BlockTrace& trace, const GridTensor& d_out,
                    BlockParams& grads, DepthGrad& d_input) {
  // Aggregation is a plain sum: every scan receives the full upstream grid.
  for (const auto& s : trace.scans) scan_backward(params, input, s, d_out, grads, d_input);
}

void validate_stack(std::span<const BlockParams> blocks, std::size_t x_width,
                    std::size_t y_width) {
  if (blocks.empty()) throw ConfigError("stack needs at least one block");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& p = blocks[b];
    const std::size_t d = hidden_of(p);
    const std::size_t wx = b == 0 ? x_width : hidden_of(blocks[b - 1]);
    const std::size_t wy = b == 0 ? y_width : hidden_of(blocks[b - 1]);
    bool ok;
    if (const auto* tc = std::get_if<TcParams>(&p)) {
      ok = tc->depth_width() == (b == 0 ? wx + wy : wx);
    } else {
      const auto& lc = std::get<LcParams>(p);
      ok = lc.first().in_dim() == wx + 2 * d && lc.second().in_dim() == wy + 2 * d;
    }
    if (!ok) {
      throw ConfigError("block " + std::to_string(b + 1) + " (" + to_string(kind_of(p)) +
                        ", hidden " + std::to_string(d) + ") does not fit its input of width " +
                        std::to_string(wx) + (b == 0 ? "/" + std::to_string(wy) : std::string()));
    }
  }
}

GridTensor stacked_forward(std::span<const BlockParams> blocks, bool four_directions,
                           const Tensor& x_seq, const Tensor& y_seq, StackTrace* trace) {
  const DepthInput first = DepthInput::pair(x_seq, y_seq);
  validate_stack(blocks, first.x_width(), first.y_width());

  StackTrace local;
  StackTrace& t = trace ? *trace : local;
  t.blocks.resize(blocks.size());
  t.outputs.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const DepthInput in = b == 0 ? first : DepthInput::fused(t.outputs[b - 1]);
    t.outputs[b] = block_forward(blocks[b], four_directions, in, &t.blocks[b]);
  }
  return t.outputs.back();
}

void stacked_backward(std::span<const BlockParams> blocks, const Tensor& x_seq,
                      const Tensor& y_seq, const StackTrace& trace,
                      const GridTensor& d_out, std::span<BlockParams> grads,
                      Tensor& dx_seq, Tensor& dy_seq) {
  GridTensor upstream = d_out;
  for (std::size_t b = blocks.size(); b-- > 0;) {
    const DepthInput in =
        b == 0 ? DepthInput::pair(x_seq, y_seq) : DepthInput::fused(trace.outputs[b - 1]);
    DepthGrad d_in = DepthGrad::zeros_like(in);
    block_backward(blocks[b], in, trace.blocks[b], upstream, grads[b], d_in);
    if (b == 0) {
      kernels::axpy(1.0, d_in.dx_seq.values(), dx_seq.values());
      kernels::axpy(1.0, d_in.dy_seq.values(), dy_seq.values());
    } else {
      upstream = std::move(d_in.dfused);
    }
  }
}

}  // namespace coupled
