#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hwprox/errors.hpp"

namespace hwprox {

// Dense 64-bit tensor. Shapes are small (rank <= 5); data is a flat vector in
// row-major order with the last axis fastest.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s, double fill = 0.0) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel_of(shape)), fill);
  }
  Tensor(std::vector<std::int64_t> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<std::int64_t>(v.size()) != numel_of(shape))
      throw ArgumentError("tensor data size does not match shape");
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      if (d <= 0) throw ArgumentError("tensor dimensions must be positive");
      if (n > (std::int64_t{1} << 40) / d) throw ArgumentError("tensor too large");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// --- elementwise kernels -----------------------------------------------------
//
// Both the plain solvers and the tape ops route through these, so a taped
// forward pass reproduces the untaped one bitwise.

namespace kernels {

inline void check_same(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ArgumentError("shape mismatch in elementwise op");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b);
  Tensor out(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b);
  Tensor out(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same(a, b);
  Tensor out(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  check_same(a, b);
  Tensor out(a.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i) out.v[i] = a.v[i] / b.v[i];
  return out;
}

// out = s*x + c
inline Tensor affine(const Tensor& x, double s, double c) {
  Tensor out(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) out.v[i] = s * x.v[i] + c;
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) out.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
  return out;
}

inline Tensor clamp(const Tensor& x, double lo, double hi) {
  Tensor out(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) out.v[i] = std::clamp(x.v[i], lo, hi);
  return out;
}

inline double sum_all(const Tensor& x) {
  double s = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) s += x.v[i];
  return s;
}

// out = numel(x) * softmax(flatten(x)), computed with max-subtraction.
inline Tensor softmax_mean1(const Tensor& x) {
  Tensor out(x.shape);
  double mx = x.v[0];
  for (double t : x.v) mx = std::max(mx, t);
  double denom = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    out.v[i] = std::exp(x.v[i] - mx);
    denom += out.v[i];
  }
  const double scale = static_cast<double>(x.numel()) / denom;
  for (std::int64_t i = 0; i < x.numel(); ++i) out.v[i] *= scale;
  return out;
}

}  // namespace kernels

inline double dot(const Tensor& a, const Tensor& b) {
  kernels::check_same(a, b);
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a.v[i] * b.v[i];
  return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.v) m = std::max(m, std::abs(x));
  return m;
}

// ||a - b|| / max(||b||, 1)
inline double rel_dist(const Tensor& a, const Tensor& b) {
  kernels::check_same(a, b);
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.v[i] - b.v[i];
    num += d * d;
    den += b.v[i] * b.v[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1.0);
}

}  // namespace hwprox
