#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvi/error.hpp"

namespace dvi {

/// Dense row-major matrix. The library computes in 32-bit floats; the
/// double instantiation exists for numerical verification.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;

  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }

  static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged row list");
      data.insert(data.end(), row.begin(), row.end());
    }
    return BasicMatrix(r, c, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  BasicMatrix<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return BasicMatrix<U>(rows_, cols_, std::move(out));
  }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()));
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  const T* __restrict pa = a.storage().data();
  const T* __restrict pb = b.storage().data();
  T* __restrict po = out.values().data();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* __restrict out_row = po + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = pa[i * a.cols() + k];
      if (aik == T(0)) continue;
      const T* __restrict b_row = pb + k * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

/// a^T * b without materializing the transpose.
template <typename T>
BasicMatrix<T> matmul_at_b(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_at_b: row count mismatch");
  BasicMatrix<T> out(a.cols(), b.cols());
  const std::size_t m = a.cols();
  const std::size_t n = b.cols();
  const T* __restrict pa = a.storage().data();
  const T* __restrict pb = b.storage().data();
  T* __restrict po = out.values().data();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* __restrict a_row = pa + k * m;
    const T* __restrict b_row = pb + k * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aki = a_row[i];
      if (aki == T(0)) continue;
      T* __restrict out_row = po + i * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

/// a * b^T without materializing the transpose.
template <typename T>
BasicMatrix<T> matmul_a_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_a_bt: column count mismatch");
  BasicMatrix<T> out(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  const T* __restrict pa = a.storage().data();
  const T* __restrict pb = b.storage().data();
  T* __restrict po = out.values().data();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* __restrict a_row = pa + i * inner;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* __restrict b_row = pb + j * inner;
      T acc = T(0);
      for (std::size_t k = 0; k < inner; ++k) acc += a_row[k] * b_row[k];
      po[i * b.rows() + j] = acc;
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& a, std::span<const std::size_t> rows) {
  BasicMatrix<T> out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(a.row(rows[i]).begin(), a.cols(), out.row(i).begin());
  }
  return out;
}

/// Stacks b below a.
template <typename T>
BasicMatrix<T> vstack(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols() != b.cols()) throw DimensionError("vstack: column count mismatch");
  std::vector<T> data(a.storage());
  data.insert(data.end(), b.storage().begin(), b.storage().end());
  return BasicMatrix<T>(a.rows() + b.rows(), a.cols(), std::move(data));
}

/// Squared Euclidean distance accumulated in double precision.
template <typename T>
double squared_distance(std::span<const T> a, std::span<const T> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

template <typename T>
double euclidean_distance(std::span<const T> a, std::span<const T> b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

}  // namespace dvi
