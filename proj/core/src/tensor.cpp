#include "fusilade/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fusilade/errors.hpp"

namespace fusilade {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Tensor2: data length " + std::to_string(data_.size()) + " does not match " +
                     shape_str());
  }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor2::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2(r, c, std::move(data));
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor2 Tensor2::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw ShapeError("slice_rows: range exceeds " + shape_str());
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
  return Tensor2(count, cols_,
                 std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  }
  Tensor2 out(a.rows(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at_b: " + a.shape_str() + "^T * " + b.shape_str());
  }
  Tensor2 out(a.cols(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += ari * brow[j];
    }
  }
  return out;
}

Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_a_bt: " + a.shape_str() + " * " + b.shape_str() + "^T");
  }
  Tensor2 out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2 hconcat(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("hconcat: " + a.shape_str() + " | " + b.shape_str());
  }
  Tensor2 out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Tensor2 column_mean(const Tensor2& a) {
  if (a.rows() == 0) throw ShapeError("column_mean: no rows");
  Tensor2 out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
  const double inv = 1.0 / static_cast<double>(a.rows());
  for (auto& v : out.values()) v *= inv;
  return out;
}

}  // namespace fusilade
