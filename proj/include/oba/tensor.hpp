#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace oba {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A default-constructed tensor has rank 0 and holds a single zero; that is
/// also how scalars (the loss) are represented.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
  /// Rank-2 tensor from nested rows; every row must have the same length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty_shape() const { return shape_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  double item() const;

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Slice `count` consecutive entries along axis 0.
  Tensor slice_rows(std::size_t begin, std::size_t count) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Kernels. Batched variants live with the layer implementations; everything
// here works on a single sample or plain matrices.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Zero-padded cross-correlation of x [C_in,H,W] with w [C_out,C_in,k,k] plus
/// per-channel bias. An empty bias (size 0) means no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad);
/// Gradient of conv2d w.r.t. its input, for upstream gy [C_out,H',W'].
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, const Shape& x_shape,
                         std::size_t stride, std::size_t pad);
/// Gradient of conv2d w.r.t. its weight, accumulated into gw.
void conv2d_weight_grad_accumulate(const Tensor& x, const Tensor& gy, Tensor& gw,
                                   std::size_t stride, std::size_t pad);
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad);

Tensor softmax_rows(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
/// a += s * b
void axpy(double s, const Tensor& b, Tensor& a);

/// Pairwise summation of all entries.
double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double max_abs(const Tensor& a);
/// Reduce the listed axes, keeping the others in order.
Tensor sum_over_axes(const Tensor& a, const std::vector<std::size_t>& axes);

bool all_finite(const Tensor& a);

}  // namespace oba
