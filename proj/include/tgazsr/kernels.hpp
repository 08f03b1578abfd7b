// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace tgazsr::kernels {

// Dense row-major double kernels. Every routine accumulates into `c`
// (c += ...); callers zero the output when they want plain products.
//
//   gemm_nn: c[m,n] += a[m,k] * b[k,n]
//   gemm_nt: c[m,n] += a[m,k] * b[n,k]^T
//   gemm_tn: c[m,n] += a[k,m]^T * b[k,n]
struct KernelTable {
  const char* name;
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

enum class Backend { scalar, avx2 };

const KernelTable& scalar_table();
// Only valid to call when avx2_supported() is true.
const KernelTable& avx2_table();
bool avx2_supported();

// Active table. Chosen once from CPU features; the TGAZSR_KERNELS
// environment variable ("scalar" or "avx2") overrides the choice.
const KernelTable& active();
Backend active_backend();
// Switches the active table. Returns false if the backend is unavailable.
bool set_backend(Backend backend);
std::string_view backend_name(Backend backend);

inline void gemm_nn(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  active().gemm_nn(a.data(), b.data(), c.data(), m, k, n);
}
inline void gemm_nt(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  active().gemm_nt(a.data(), b.data(), c.data(), m, k, n);
}
inline void gemm_tn(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  active().gemm_tn(a.data(), b.data(), c.data(), m, k, n);
}
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace tgazsr::kernels
