#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lensless/errors.hpp"

namespace lensless {

// Dense row-major tensor. Rank-3 data is stored height x width x channel,
// channel fastest (channel-last).
template <typename T>
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> d, T fill = T(0)) : dims(std::move(d)) {
    v.assign(element_count(dims), fill);
  }

  static std::size_t element_count(const std::vector<std::uint32_t>& d) {
    if (d.empty()) return 0;
    std::size_t n = 1;
    for (auto x : d) n *= x;
    return n;
  }

  std::size_t size() const { return v.size(); }
  int rank() const { return static_cast<int>(dims.size()); }
  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  // Rank-3 accessors.
  std::uint32_t h() const { return dims[0]; }
  std::uint32_t w() const { return dims[1]; }
  std::uint32_t c() const { return dims[2]; }
  T& at(std::uint32_t r, std::uint32_t col, std::uint32_t ch) {
    return v[(std::size_t(r) * dims[1] + col) * dims[2] + ch];
  }
  const T& at(std::uint32_t r, std::uint32_t col, std::uint32_t ch) const {
    return v[(std::size_t(r) * dims[1] + col) * dims[2] + ch];
  }

  static Tensor image(std::uint32_t h, std::uint32_t w, std::uint32_t c, T fill = T(0)) {
    return Tensor({h, w, c}, fill);
  }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T& x : t.v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename T>
double sum(const Tensor<T>& t) {
  double s = 0;
  for (const T& x : t.v) s += static_cast<double>(x);
  return s;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("dot: operand shapes differ");
  double s = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    s += static_cast<double>(a.v[i]) * static_cast<double>(b.v[i]);
  return s;
}

template <typename T>
double l2_norm(const Tensor<T>& t) {
  double s = 0;
  for (const T& x : t.v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("max_abs_diff: operand shapes differ");
  double m = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
  return m;
}

template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  if (!x.same_shape(y)) throw ShapeMismatch("axpy: operand shapes differ");
  for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] += alpha * x.v[i];
}

template <typename T>
std::string shape_string(const Tensor<T>& t) {
  std::string s;
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.dims[i]);
  }
  return s.empty() ? "scalar(empty)" : s;
}

template <typename U, typename T>
Tensor<U> cast_tensor(const Tensor<T>& t) {
  Tensor<U> out(t.dims);
  for (std::size_t i = 0; i < t.v.size(); ++i) out.v[i] = static_cast<U>(t.v[i]);
  return out;
}

}  // namespace lensless
