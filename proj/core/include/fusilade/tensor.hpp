#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fusilade {

/// Dense row-major matrix of doubles. All model weights, activations and
/// feature blocks live in one of these.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_str() const;

  /// Copy of rows [first, first + count).
  Tensor2 slice_rows(std::size_t first, std::size_t count) const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a [n x k] * b [k x m]
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// a^T b, with a [k x n] and b [k x m]
Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b);
/// a b^T, with a [n x k] and b [m x k]
Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

/// Horizontal concatenation [a | b]; row counts must match.
Tensor2 hconcat(const Tensor2& a, const Tensor2& b);
/// Mean over rows, returned as a 1 x cols tensor.
Tensor2 column_mean(const Tensor2& a);

}  // namespace fusilade
