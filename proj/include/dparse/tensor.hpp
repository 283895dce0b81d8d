#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dparse/common.hpp"

namespace dparse::nn {

// Dense row-major tensor. Real is float in production; tests also
// instantiate double for finite-difference oracles.
template <class Real>
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), Real(0));
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      require(d >= 0, "tensor dimension must be non-negative");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, Real v) {
    Tensor t(std::move(s));
    for (Real& x : t.data) x = v;
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 2-D accessors; most graph operations work on matrices.
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

  Real& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const {
    for (Real v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

template <class Real>
void ensure_finite(const Tensor<Real>& t, const char* what) {
  if (!t.all_finite()) fail(std::string("non-finite values in ") + what);
}

// GEMM kernels, row-major, accumulating into C. Loop orders chosen so the
// inner loop runs over contiguous memory.

// C[m,n] += A[m,k] * B[k,n]
template <class Real>
void gemm_nn(const Real* A, const Real* B, Real* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* a = A + static_cast<std::size_t>(i) * k;
    Real* c = C + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real av = a[l];
      const Real* b = B + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class Real>
void gemm_nt(const Real* A, const Real* B, Real* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* a = A + static_cast<std::size_t>(i) * k;
    Real* c = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const Real* b = B + static_cast<std::size_t>(j) * k;
      Real acc = 0;
      for (int l = 0; l < k; ++l) acc += a[l] * b[l];
      c[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <class Real>
void gemm_tn(const Real* A, const Real* B, Real* C, int m, int k, int n) {
  for (int l = 0; l < k; ++l) {
    const Real* a = A + static_cast<std::size_t>(l) * m;
    const Real* b = B + static_cast<std::size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const Real av = a[i];
      Real* c = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace dparse::nn
