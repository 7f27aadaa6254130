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

#include <gtest/gtest.h>

#include <vector>

#include "deskdrive/core/rng.hpp"
#include "deskdrive/kernels/kernels.hpp"

namespace deskdrive::kernels {
namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double zero_fraction = 0.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() < zero_fraction ? 0.0 : rng.normal();
  return v;
}

struct Dims {
  std::size_t m, k, n;
};

class KernelEquivalence : public ::testing::TestWithParam<Dims> {};

TEST_P(KernelEquivalence, ParallelMatchesSerialBitForBit) {
  const auto [m, k, n] = GetParam();
  Rng rng(m * 1000 + k * 10 + n);
  const auto a = random_vec(m * k, rng, 0.3);
  const auto b = random_vec(k * n, rng);
  const auto bt = random_vec(n * k, rng);
  const auto at = random_vec(k * m, rng, 0.3);
  for (bool acc : {false, true}) {
    std::vector<double> c1 = random_vec(m * n, rng), c2 = c1;
    serial::matmul(a.data(), b.data(), c1.data(), m, k, n, acc);
    parallel::matmul(a.data(), b.data(), c2.data(), m, k, n, acc);
    EXPECT_EQ(c1, c2);
    serial::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n, acc);
    parallel::matmul_nt(a.data(), bt.data(), c2.data(), m, k, n, acc);
    EXPECT_EQ(c1, c2);
    serial::matmul_tn(at.data(), b.data(), c1.data(), m, k, n, acc);
    parallel::matmul_tn(at.data(), b.data(), c2.data(), m, k, n, acc);
    EXPECT_EQ(c1, c2);
  }
  std::vector<double> y1(m * n), y2(m * n), s1(m), s2(m);
  const auto x = random_vec(m * n, rng);
  serial::softmax_rows(x.data(), y1.data(), m, n);
  parallel::softmax_rows(x.data(), y2.data(), m, n);
  EXPECT_EQ(y1, y2);
  serial::normalize_rows(x.data(), y1.data(), s1.data(), m, n, 1e-5);
  parallel::normalize_rows(x.data(), y2.data(), s2.data(), m, n, 1e-5);
  EXPECT_EQ(y1, y2);
  EXPECT_EQ(s1, s2);
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelEquivalence,
                         ::testing::Values(Dims{1, 1, 1}, Dims{3, 5, 2}, Dims{64, 64, 64},
                                           Dims{256, 64, 65}, Dims{17, 768, 33}));

TEST(Kernels, MatmulHandValues) {
  const double a[] = {1, 2, 3, 4, 5, 6};  // 2×3
  const double b[] = {7, 8, 9, 10, 11, 12};  // 3×2
  double c[4];
  matmul(a, b, c, 2, 3, 2, false);
  EXPECT_DOUBLE_EQ(c[0], 58);
  EXPECT_DOUBLE_EQ(c[1], 64);
  EXPECT_DOUBLE_EQ(c[2], 139);
  EXPECT_DOUBLE_EQ(c[3], 154);
}

}  // namespace
}  // namespace deskdrive::kernels
