#pragma once

// Plain scalar-loop reference implementations used to cross-check the
// library. They deliberately share no code with it.

#include <cstdint>
#include <random>
#include <vector>

#include "coupled/grid.hpp"
#include "coupled/pooling.hpp"
#include "coupled/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

struct State {
  Vec h, c;
};

/// W rows: candidate, output, input, forget (d each); columns [x; h_prev].
State lstm(const Vec& x, const State& prev, const Mat& w, const Vec& b);

/// W rows: candidate, output, input, forget-Y, forget-X;
/// columns [x; y; h(i, j-1); h(i-1, j)].
State tc(const Vec& x, const Vec& y, const State& left, const State& up, const Mat& w, const Vec& b);

struct LcState {
  State first, second;
};

/// LSTM1 reads [x; h1(up); h2(up)] with c1(up); LSTM2 reads
/// [y; h1(left); h2(left)] with c2(left). `up` is (i-1, j), `left` (i, j-1).
LcState lc(const Vec& x, const Vec& y, const LcState& up, const LcState& left, const Mat& w1,
           const Vec& b1, const Mat& w2, const Vec& b2);

/// Max of every p x q cell of each hidden slice, first position on ties.
/// Returned as [p][q][d].
std::vector<std::vector<Vec>> pool(const coupled::GridTensor& grid, std::size_t p, std::size_t q);

Mat to_mat(const coupled::Tensor& t);
Vec to_vec(const coupled::Tensor& t);
coupled::Tensor from_vec(const Vec& v);

/// Rows of a sequence in reverse order.
coupled::Tensor reverse_rows(const coupled::Tensor& seq);
/// Grid with rows (flip_i) and/or columns (flip_j) reversed.
coupled::GridTensor flip(const coupled::GridTensor& grid, bool flip_i, bool flip_j);

coupled::Tensor random_tensor(coupled::Shape shape, std::mt19937_64& rng, double scale = 1.0);
coupled::BlockParams random_block(coupled::CellKind kind, std::size_t width, std::size_t hidden,
                                  bool lc_shared, std::mt19937_64& rng, double scale = 0.5);

}  // namespace oracle
