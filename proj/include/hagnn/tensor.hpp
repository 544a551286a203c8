#pragma once

// Dense rank-2 tensor of doubles, row-major. This is a plain value type; all
// differentiable structure lives on the tape (tape.hpp).

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

#include "hagnn/errors.hpp"

namespace hagnn {

class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0)
      throw DimensionError("Tensor: dimensions must be positive");
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor(rows, cols, 0.0);
  }

  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    return Tensor(rows, cols, v);
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  static Tensor row(std::initializer_list<double> vs) {
    Tensor t(1, vs.size());
    std::size_t j = 0;
    for (double v : vs) t.data_[j++] = v;
    return t;
  }

  static Tensor row(const std::vector<double>& vs) {
    Tensor t(1, vs.size());
    for (std::size_t j = 0; j < vs.size(); ++j) t.data_[j] = vs[j];
    return t;
  }

  static Tensor col(std::initializer_list<double> vs) {
    Tensor t(vs.size(), 1);
    std::size_t i = 0;
    for (double v : vs) t.data_[i++] = v;
    return t;
  }

  static Tensor col(const std::vector<double>& vs) {
    Tensor t(vs.size(), 1);
    for (std::size_t i = 0; i < vs.size(); ++i) t.data_[i] = vs[i];
    return t;
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    if (r == 0) throw DimensionError("Tensor::matrix: empty initializer");
    std::size_t c = rows.begin()->size();
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c)
        throw DimensionError("Tensor::matrix: ragged initializer");
      std::size_t j = 0;
      for (double v : row) t.data_[i * c + j++] = v;
      ++i;
    }
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::pair<std::size_t, std::size_t> shape() const { return {rows_, cols_}; }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& at(std::size_t i, std::size_t j) {
    check_index(i, j);
    return data_[i * cols_ + j];
  }

  double at(std::size_t i, std::size_t j) const {
    check_index(i, j);
    return data_[i * cols_ + j];
  }

  // Unchecked linear access for hot loops.
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double item() const {
    if (!is_scalar()) throw DimensionError("Tensor::item: not a scalar");
    return data_[0];
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  void check_index(std::size_t i, std::size_t j) const {
    if (i >= rows_ || j >= cols_)
      throw DimensionError("Tensor::at: index out of range");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace hagnn
