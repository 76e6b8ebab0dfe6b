#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adcorda/error.hpp"

namespace adcorda {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

/// Dense row-major array with an optional gradient buffer.
///
/// A scalar is represented with shape {1}. Every dimension must be positive.
template <typename Scalar>
class BasicTensor {
 public:
  using value_type = Scalar;

  BasicTensor() : shape_{1}, data_(1, Scalar(0)) {}

  explicit BasicTensor(Shape shape) : shape_(checked(std::move(shape))), data_(shape_numel(shape_), Scalar(0)) {}

  BasicTensor(Shape shape, std::vector<Scalar> data) : shape_(checked(std::move(shape))), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{1}, std::vector<Scalar>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }

  // Matrix view helpers; only meaningful for rank-2 tensors.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  std::vector<Scalar>& storage() noexcept { return data_; }
  const std::vector<Scalar>& storage() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  const Scalar& operator[](std::size_t i) const { return data_[i]; }
  Scalar& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const Scalar& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<const Scalar> row(std::size_t r) const { return std::span<const Scalar>(data_).subspan(r * cols(), cols()); }
  std::span<Scalar> row(std::size_t r) { return std::span<Scalar>(data_).subspan(r * cols(), cols()); }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<const Scalar> grad() const noexcept { return grad_; }
  std::span<Scalar> grad() noexcept { return grad_; }
  void zero_grad() { grad_.assign(data_.size(), Scalar(0)); }
  void clear_grad() noexcept { grad_.clear(); }

  void accumulate_grad(std::span<const Scalar> g) {
    if (g.size() != data_.size()) throw ShapeError("gradient length does not match tensor " + shape_string(shape_));
    if (grad_.empty()) grad_.assign(data_.size(), Scalar(0));
    for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
  }

  bool all_finite() const noexcept {
    for (auto v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Value equality (shape + data); gradient state is ignored.
  friend bool operator==(const BasicTensor& a, const BasicTensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  static Shape checked(Shape shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor shape " + shape_string(shape) + " has a zero dimension");
    return shape;
  }

  Shape shape_;
  std::vector<Scalar> data_;
  std::vector<Scalar> grad_;
  bool requires_grad_ = false;
};

using Tensor = BasicTensor<float>;

namespace kernels {

// c[m x n] = a[m x k] * b[k x n]. Each output row is accumulated over k in
// ascending order, so row results do not depend on the batch they sit in.
template <typename Scalar>
void gemm(std::span<const Scalar> a, std::span<const Scalar> b, std::span<Scalar> c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Scalar* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = Scalar(0);
    const Scalar* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar av = ai[p];
      const Scalar* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// ga[m x k] += g[m x n] * b^T
template <typename Scalar>
void gemm_grad_a(std::span<const Scalar> g, std::span<const Scalar> b, std::span<Scalar> ga, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* gi = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar* bp = b.data() + p * n;
      Scalar acc = Scalar(0);
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      ga[i * k + p] += acc;
    }
  }
}

// gb[k x n] += a^T * g[m x n]
template <typename Scalar>
void gemm_grad_b(std::span<const Scalar> a, std::span<const Scalar> g, std::span<Scalar> gb, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* ai = a.data() + i * k;
    const Scalar* gi = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar av = ai[p];
      Scalar* gbp = gb.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) gbp[j] += av * gi[j];
    }
  }
}

// Numerically stable per-row log-sum-exp.
template <typename Scalar>
Scalar log_sum_exp(std::span<const Scalar> row) {
  Scalar mx = row[0];
  for (auto v : row) mx = v > mx ? v : mx;
  Scalar s = Scalar(0);
  for (auto v : row) s += std::exp(v - mx);
  return mx + std::log(s);
}

// Index of the largest entry; ties resolve to the lowest index.
template <typename Scalar>
std::size_t argmax(std::span<const Scalar> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

// Index of the smallest entry; ties resolve to the lowest index.
template <typename Scalar>
std::size_t argmin(std::span<const Scalar> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] < row[best]) best = i;
  return best;
}

}  // namespace kernels

}  // namespace adcorda
