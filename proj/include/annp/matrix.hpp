#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace annp {

// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
      throw std::invalid_argument("Matrix: value count does not match shape");
    }
  }

  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix &o) const {
    return rows == o.rows && cols == o.cols;
  }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  friend bool operator==(const Matrix &, const Matrix &) = default;
};

inline std::string shape_str(const Matrix &m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline bool all_finite(const Matrix &m) {
  return std::all_of(m.data.begin(), m.data.end(),
                     [](double v) { return std::isfinite(v); });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace annp
