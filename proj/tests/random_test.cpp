//
// Copyright 2026 The CPGT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "cpgt/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace cpgt {
namespace {

TEST(RandomTest, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.uniform(), b.uniform());
}

TEST(RandomTest, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t a = 1; a <= 4; ++a)
      for (std::uint64_t b = 0; b < 16; ++b) seen.insert(derive_seed(s, a, b));
  EXPECT_EQ(seen.size(), 4u * 4u * 16u);
}

TEST(RandomTest, UniformRanges) {
  Rng r(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    const double o = r.uniform_open();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_GT(o, 0.0);
    ASSERT_LT(o, 1.0);
  }
}

TEST(RandomTest, LaplaceIsSymmetricAndFinite) {
  Rng r(11);
  int positive = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.laplace(2.0);
    ASSERT_TRUE(std::isfinite(x));
    positive += x > 0.0;
  }
  // Binomial(n, 1/2): 4 sigma band.
  EXPECT_NEAR(positive, n / 2, 4.0 * std::sqrt(n / 4.0));
}

}  // namespace
}  // namespace cpgt
