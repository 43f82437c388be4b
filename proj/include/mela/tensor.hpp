#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mela/errors.hpp"

namespace mela {

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN.
// Every value in the system (examples, codes, parameters, activations,
// gradients) lives in one of these.
class Tensor {
public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw dimension_error("tensor data length " + std::to_string(data_.size()) +
                 " does not match shape " + std::to_string(rows_) + "x" +
                 std::to_string(cols_));
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data_[0] = v;
    return t;
  }

  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    Tensor t(rows, cols);
    for (double& x : t.data_) x = v;
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw dimension_error("ragged initializer rows");
      std::size_t j = 0;
      for (double v : row) t(i, j++) = v;
      ++i;
    }
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Views into the tensor's storage. Deleted on rvalues: a span or pointer
  // taken from a temporary would dangle as soon as the temporary dies.
  double* data() & { return data_.data(); }
  const double* data() const& { return data_.data(); }
  double* data() && = delete;
  const double* data() const&& = delete;
  std::span<double> flat() & { return data_; }
  std::span<const double> flat() const& { return data_; }
  std::span<double> flat() && = delete;
  std::span<const double> flat() const&& = delete;

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  // Rows gathered by index, in the given order.
  Tensor gather_rows(std::span<const std::int32_t> idx) const {
    Tensor out(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::memcpy(out.data() + i * cols_, data() + static_cast<std::size_t>(idx[i]) * cols_,
            cols_ * sizeof(double));
    return out;
  }

  // a stacked on top of b (column counts must agree).
  static Tensor vstack(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
      throw dimension_error("vstack column mismatch: " + a.shape_str() + " vs " +
                 b.shape_str());
    Tensor out(a.rows() + b.rows(), a.cols());
    std::memcpy(out.data(), a.data(), a.size() * sizeof(double));
    std::memcpy(out.data() + a.size(), b.data(), b.size() * sizeof(double));
    return out;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Exact representation equality (distinguishes -0.0 from 0.0, NaN-safe).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
     (a.size() == 0 ||
      std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace mela
