#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coupled {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Row-major element access for rank-2 tensors.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Contiguous view of row `r` along the leading axis.
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double sigmoid(double z);

// Tensor-level operations. All of them validate shapes and throw
// DimensionError naming both shapes on mismatch.
Tensor matvec(const Tensor& a, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

namespace kernels {

// Unchecked span kernels used on the hot paths of the cells. Callers
// guarantee sizes: a is rows x cols row-major.

/// y += A x
void gemv_add(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y);
/// x_grad += A^T y_grad
void gemv_t_add(std::span<const double> a, std::size_t rows, std::size_t cols,
                std::span<const double> y_grad, std::span<double> x_grad);
/// A_grad += y_grad x^T
void outer_add(std::span<const double> y_grad, std::span<const double> x,
               std::span<double> a_grad);
/// y += alpha x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace kernels

}  // namespace coupled
