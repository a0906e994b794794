#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace icevae {

/// Dense row-major array of doubles. Rank 0 is a scalar, rank 1 is treated as
/// a single row, rank 2 as rows x cols. The autodiff layer only produces rank
/// <= 2 tensors.
class Tensor {
 public:
  Tensor() : shape_{}, values_(1, 0.0) {}
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  /// Throws DimensionError when the value count disagrees with the shape and
  /// DomainError on non-finite values.
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool same_shape(const Tensor& other) const { return rows() == other.rows() && cols() == other.cols(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  double item() const;
  void fill(double v);

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.values_ == b.values_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace icevae
