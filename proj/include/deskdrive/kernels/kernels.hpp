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

#pragma once

#include <cstddef>

// Dense row-major kernels used by the autodiff engine.
//
// Every kernel exists twice: `serial::` is the straightforward reference
// kept for testing, and `parallel::` is the OpenMP version used at runtime.
// Both accumulate each output element in the same order, so with FMA
// contraction disabled they agree bit-for-bit for any thread count.

namespace deskdrive::kernels {

namespace serial {

// c[m×n] = a[m×k] · b[k×n]   (c += ... when accumulate)
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);
// c[m×n] = a[m×k] · b[n×k]ᵀ
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
// c[m×n] = a[k×m]ᵀ · b[k×n]
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
// Normalizes each row to zero mean / unit variance; writes per-row 1/σ.
void normalize_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps);

}  // namespace serial

namespace parallel {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void normalize_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps);

}  // namespace parallel

using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;
using parallel::normalize_rows;
using parallel::softmax_rows;

}  // namespace deskdrive::kernels
