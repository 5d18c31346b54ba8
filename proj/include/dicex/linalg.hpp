#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dicex/error.hpp"

namespace dicex {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i].size() == m.cols_, ErrorCode::DimensionMismatch, "ragged rows");
      for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> row_copy(std::size_t r) const {
    auto view = row(r);
    return {view.begin(), view.end()};
  }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    require(values.size() == cols_, ErrorCode::DimensionMismatch, "row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  Matrix select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto src = row(indices[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// LU factorization with partial pivoting, PA = LU stored compactly.
class LuDecomposition {
 public:
  explicit LuDecomposition(Matrix a) : lu_(std::move(a)), perm_(lu_.rows()) {
    require(lu_.rows() == lu_.cols(), ErrorCode::DimensionMismatch, "LU needs a square matrix");
    const std::size_t n = lu_.rows();
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t pivot = col;
      double best = std::abs(lu_(col, col));
      for (std::size_t r = col + 1; r < n; ++r) {
        if (std::abs(lu_(r, col)) > best) {
          best = std::abs(lu_(r, col));
          pivot = r;
        }
      }
      if (pivot != col) {
        for (std::size_t c = 0; c < n; ++c) std::swap(lu_(pivot, c), lu_(col, c));
        std::swap(perm_[pivot], perm_[col]);
        sign_ = -sign_;
      }
      const double diag = lu_(col, col);
      if (diag == 0.0) {
        singular_ = true;
        continue;
      }
      for (std::size_t r = col + 1; r < n; ++r) {
        const double factor = lu_(r, col) / diag;
        lu_(r, col) = factor;
        for (std::size_t c = col + 1; c < n; ++c) lu_(r, c) -= factor * lu_(col, c);
      }
    }
  }

  bool singular() const noexcept { return singular_; }

  double determinant() const {
    double det = sign_;
    for (std::size_t i = 0; i < lu_.rows(); ++i) det *= lu_(i, i);
    return det;
  }

  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = lu_.rows();
    require(!singular_, ErrorCode::InvalidArgument, "singular matrix");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = b[perm_[i]];
      for (std::size_t j = 0; j < i; ++j) sum -= lu_(i, j) * x[j];
      x[i] = sum;
    }
    for (std::size_t i = n; i-- > 0;) {
      double sum = x[i];
      for (std::size_t j = i + 1; j < n; ++j) sum -= lu_(i, j) * x[j];
      x[i] = sum / lu_(i, i);
    }
    return x;
  }

  Matrix inverse() const {
    const std::size_t n = lu_.rows();
    Matrix inv(n, n);
    std::vector<double> e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      std::fill(e.begin(), e.end(), 0.0);
      e[c] = 1.0;
      const auto column = solve(e);
      for (std::size_t r = 0; r < n; ++r) inv(r, c) = column[r];
    }
    return inv;
  }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
  double sign_ = 1.0;
  bool singular_ = false;
};

inline double determinant(const Matrix& a) { return LuDecomposition(a).determinant(); }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace dicex
