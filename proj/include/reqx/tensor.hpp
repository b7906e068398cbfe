#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reqx/error.hpp"

namespace reqx {

// Dense row-major matrix of doubles. The only numeric carrier in the library:
// activations, parameters and gradients are all Tensor2D values.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Tensor2D: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(rows, cols));
    }
  }
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Tensor2D: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor2D zeros_like(const Tensor2D& t) { return Tensor2D(t.rows_, t.cols_); }
  static Tensor2D identity(std::size_t n) {
    Tensor2D t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }
  static Tensor2D column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor2D(n, 1, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor2D& operator+=(const Tensor2D& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor2D& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  bool same_shape(const Tensor2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape() const { return shape_string(rows_, cols_); }

  bool operator==(const Tensor2D& o) const = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

 private:
  void require_same_shape(const Tensor2D& o, const char* op) const {
    if (!same_shape(o)) {
      throw ShapeError(std::string("Tensor2D ") + op + ": shape mismatch " + shape() + " vs " +
                       o.shape());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
  }
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline bool all_finite(const Tensor2D& t) {
  return std::all_of(t.flat().begin(), t.flat().end(), [](double v) { return std::isfinite(v); });
}

inline double sum(const Tensor2D& t) {
  double s = 0.0;
  for (double v : t.flat()) s += v;
  return s;
}

// Row-wise softmax with max subtraction. `mask[r][c] == false` excludes an entry;
// excluded entries come out as exactly 0.
inline Tensor2D softmax_rows(const Tensor2D& x,
                             const std::optional<std::vector<std::vector<bool>>>& mask = {}) {
  if (mask && mask->size() != x.rows()) {
    throw ShapeError("softmax_rows: mask has " + std::to_string(mask->size()) + " rows, input " +
                     x.shape());
  }
  Tensor2D out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto keep = [&](std::size_t c) { return !mask || (*mask)[r][c]; };
    if (mask && (*mask)[r].size() != x.cols()) {
      throw ShapeError("softmax_rows: mask row width does not match input " + x.shape());
    }
    double mx = -INFINITY;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (keep(c)) mx = std::max(mx, x(r, c));
    if (mx == -INFINITY) {
      throw NumericError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!keep(c)) continue;
      out(r, c) = std::exp(x(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= z;
  }
  return out;
}

enum class Activation { kSigmoid, kTanh, kSigmoidDerivative, kTanhDerivative };

inline double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Derivatives are taken with respect to the pre-activation input.
inline double apply(Activation fn, double x) {
  switch (fn) {
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSigmoidDerivative: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::kTanhDerivative: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return x;
}

inline Tensor2D elementwise(const Tensor2D& x, Activation fn) {
  Tensor2D out = Tensor2D::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = apply(fn, x[i]);
  return out;
}

// log(sum(exp(v))) with max subtraction.
inline double log_sum_exp(std::span<const double> v) {
  double mx = -INFINITY;
  for (double x : v) mx = std::max(mx, x);
  if (mx == -INFINITY) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace reqx
