#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "fusion/rng.hpp"

using fusion::Rng;

TEST(Rng, DeterministicForSeed) {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> va, vb, vc;
  for (int k = 0; k < 200; ++k) {
    va.push_back(a());
    vb.push_back(b());
    vc.push_back(c());
  }
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

TEST(Rng, DerivedStreamsAreIndependent) {
  const Rng root(7);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 100; ++k) firsts.insert(root.derive("x", k)());
  firsts.insert(root.derive("y")());
  EXPECT_EQ(firsts.size(), 101u);
  EXPECT_EQ(root.derive("x", 3)(), root.derive("x", 3)());
}

TEST(Rng, UniformStaysInRange) {
  Rng r(1);
  std::vector<int> counts(7, 0);
  for (int k = 0; k < 70000; ++k) {
    const auto v = r.uniform(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  for (int k = 0; k < 1000; ++k) {
    const double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(3);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  fusion::shuffle(v.begin(), v.end(), r);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < 50; ++k) EXPECT_EQ(sorted[k], k);
}
