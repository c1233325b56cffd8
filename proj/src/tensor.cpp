#include "coupled/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace coupled {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {
  for (auto s : shape_) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto s : shape_) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                         std::to_string(element_count(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t width = data_.size() / shape_[0];
  return std::span<double>(data_).subspan(r * width, width);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t width = data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(r * width, width);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double sigmoid(double z) {
  // Split on sign so exp never overflows.
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.dim(1) != x.dim(0)) {
    throw DimensionError("matvec: cannot multiply " + shape_string(a.shape()) +
                         " by " + shape_string(x.shape()));
  }
  Tensor y({a.dim(0)});
  kernels::gemv_add(a.values(), a.dim(0), a.dim(1), x.values(), y.values());
  return y;
}

Tensor sigmoid(const Tensor& x) {
  return map(x, [](double v) { return sigmoid(v); });
}

Tensor tanh(const Tensor& x) {
  return map(x, [](double v) { return std::tanh(v); });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "multiply");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double v) { return v * s; });
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four independent partial sums let the compiler keep several FMA chains
  // in flight without reassociating a single accumulator.
  const std::size_t n = a.size();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

namespace kernels {

void gemv_add(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] += dot(a.subspan(r * cols, cols), x);
  }
}

void gemv_t_add(std::span<const double> a, std::size_t rows, std::size_t cols,
                std::span<const double> y_grad, std::span<double> x_grad) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    const double* arow = a.data() + r * cols;
    double* out = x_grad.data();
    for (std::size_t c = 0; c < cols; ++c) out[c] += g * arow[c];
  }
}

void outer_add(std::span<const double> y_grad, std::span<const double> x,
               std::span<double> a_grad) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < y_grad.size(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    double* out = a_grad.data() + r * cols;
    const double* xin = x.data();
    for (std::size_t c = 0; c < cols; ++c) out[c] += g * xin[c];
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace kernels

}  // namespace coupled
