#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sgil/errors.hpp"
#include "sgil/rng.hpp"

namespace sgil {

// Row-major dense matrix of 64-bit floats. Scalars are 1x1.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static DenseMatrix scalar(double v) {
    DenseMatrix m(1, 1);
    m.data_[0] = v;
    return m;
  }

  static DenseMatrix filled(std::size_t rows, std::size_t cols, double v) {
    DenseMatrix m(rows, cols);
    for (auto& x : m.data_) x = v;
    return m;
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix randn(std::size_t rows, std::size_t cols, double stddev,
                           Rng& rng) {
    DenseMatrix m(rows, cols);
    for (auto& x : m.data_) x = stddev * rng.next_normal();
    return m;
  }

  static DenseMatrix uniform(std::size_t rows, std::size_t cols, double lo,
                             double hi, Rng& rng) {
    DenseMatrix m(rows, cols);
    for (auto& x : m.data_) x = lo + (hi - lo) * rng.next_double();
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& at_flat(std::size_t i) { return data_[i]; }
  double at_flat(std::size_t i) const { return data_[i]; }

  double as_scalar() const {
    if (rows_ != 1 || cols_ != 1)
      throw ShapeError("as_scalar on " + shape_str());
    return data_[0];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  void fill(double v) {
    for (auto& x : data_) x = v;
  }

  // c = a * b
  static DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.rows_)
      throw ShapeError("matmul " + a.shape_str() + " * " + b.shape_str());
    DenseMatrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    }
    return c;
  }

  // c = a * b^T
  static DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.cols_)
      throw ShapeError("matmul_nt " + a.shape_str() + " * " + b.shape_str() +
                       "^T");
    DenseMatrix c(a.rows_, b.rows_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t j = 0; j < b.rows_; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.cols_; ++k) s += a(i, k) * b(j, k);
        c(i, j) = s;
      }
    return c;
  }

  // c = a^T * b
  static DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows_ != b.rows_)
      throw ShapeError("matmul_tn " + a.shape_str() + "^T * " + b.shape_str());
    DenseMatrix c(a.cols_, b.cols_);
    for (std::size_t k = 0; k < a.rows_; ++k)
      for (std::size_t i = 0; i < a.cols_; ++i) {
        const double aki = a(k, i);
        if (aki == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aki * b(k, j);
      }
    return c;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace sgil
