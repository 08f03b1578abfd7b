// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "tgazsr/autograd.hpp"
#include "tgazsr/random.hpp"

namespace tgazsr::test {

inline Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Rng rng(seed);
  Tensor t(r, c);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Worst relative error between the analytic gradient of f at x and central
// differences, over every entry of x.
inline double gradient_error(const std::function<ad::Var(const ad::Var&)>& f, Tensor x,
                             double h = 1e-5) {
  ad::Var leaf = ad::leaf(x);
  f(leaf).backward();
  const Tensor analytic = leaf.grad();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data[i];
    x.data[i] = orig + h;
    const double up = f(ad::constant(x)).item();
    x.data[i] = orig - h;
    const double down = f(ad::constant(x)).item();
    x.data[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max(1e-6, std::abs(fd) + std::abs(analytic.data[i]));
    worst = std::max(worst, std::abs(fd - analytic.data[i]) / denom);
  }
  return worst;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tgazsr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tgazsr::test
