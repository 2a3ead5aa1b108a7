#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "shapecomp/errors.hpp"

namespace shapecomp {

// Dense row-major matrix of doubles. Row vectors are 1xC, column vectors
// Rx1, scalars 1x1. Double precision throughout; gradient checks rely on it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data_[0] = v;
    return t;
  }
  static Tensor row(const std::vector<double>& v) {
    Tensor t(1, v.size());
    t.data_ = v;
    return t;
  }
  static Tensor column(const std::vector<double>& v) {
    Tensor t(v.size(), 1);
    t.data_ = v;
    return t;
  }
  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    Tensor t(rows, cols);
    t.fill(v);
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& buffer() { return data_; }
  const std::vector<double>& buffer() const { return data_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  double scalar_value() const {
    if (size() != 1) throw NumericError("tensor: scalar_value on " + shape_str());
    return data_[0];
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace shapecomp
