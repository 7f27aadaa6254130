// Copyright 2026 The deskdrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <vector>

#include "deskdrive/kernels/kernels.hpp"

namespace deskdrive::kernels::parallel {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  const long rows = static_cast<long>(m);
#pragma omp parallel if (m * k * n >= kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* ar = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ar[p];
        if (av == 0.0) continue;
        const double* br = b + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * br[j];
      }
      double* cr = c + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) cr[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), cr);
      }
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (long ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      cr[j] = accumulate ? cr[j] + s : s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const long rows = static_cast<long>(m);
#pragma omp parallel if (m * k * n >= kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        if (av == 0.0) continue;
        const double* br = b + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * br[j];
      }
      double* cr = c + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) cr[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), cr);
      }
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  const long nr = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long rr = 0; rr < nr; ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
  }
}

void normalize_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps) {
  const long nr = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long rr = 0; rr < nr; ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * is;
  }
}

}  // namespace deskdrive::kernels::parallel
