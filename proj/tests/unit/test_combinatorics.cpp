#include <gtest/gtest.h>

#include <cmath>

#include "fusion/combinatorics.hpp"
#include "fusion/error.hpp"

using namespace fusion;
using namespace fusion::combinatorics;

namespace {

Rational frac(long long a, long long b) { return Rational(BigInt(a), BigInt(b)); }

}  // namespace

TEST(Binomial, SmallValues) {
  EXPECT_EQ(binomial(6, 2), 15);
  EXPECT_EQ(binomial(0, 0), 1);
  EXPECT_EQ(binomial(2660, 5), BigInt("1105588034072032"));
}

TEST(BinomLog2, Examples) {
  const Prob p = binom_log2(6, 2);
  EXPECT_TRUE(p.is_exact());
  EXPECT_NEAR(p.log2(), std::log2(15.0), 1e-12);
  EXPECT_EQ(binom_log2(0, 0).log2(), 0.0);
  EXPECT_NEAR(binom_log2(2660, 5).log2(), 49.97373532975131, 1e-9);
  EXPECT_THROW(binom_log2(3, 4), DomainError);
}

TEST(BinomLog2, FastPathWithinDeclaredError) {
  for (std::uint64_t n = 0; n <= 300; n += 7) {
    for (std::uint64_t k = 0; k <= n; k += 3) {
      const Prob fast = binom_log2(n, k, Precision::Fast);
      const double exact = log2_of(binomial(n, k));
      EXPECT_LE(std::abs(fast.log2() - exact), fast.err_bound() + 1e-12) << n << " " << k;
    }
  }
  const Prob big = binom_log2(1'600'000, 3, Precision::Fast);
  EXPECT_NEAR(big.log2(), log2_of(binomial(1'600'000, 3)), big.err_bound() + 1e-12);
}

TEST(ProbE_T, Examples) {
  EXPECT_EQ(prob_E_T({2, 2, 2, 1}, Precision::Exact).rational(), frac(2, 5));
  EXPECT_EQ(prob_E_T({5, 3, 4, 0}, Precision::Exact).rational(), 1);
  EXPECT_EQ(prob_E_T({5, 3, 0, 2}, Precision::Exact).rational(), 1);
  EXPECT_THROW(prob_E_T({2, 2, 2, 3}), DomainError);
}

TEST(ProbE_B, Examples) {
  EXPECT_EQ(prob_E_B({2, 2, 2, 1}, Precision::Exact).rational(), frac(1, 3));
  EXPECT_EQ(prob_E_B({1, 1, 0, 1}, Precision::Exact).rational(), 1);
  EXPECT_EQ(prob_E_B({2, 1, 0, 1}, Precision::Exact).rational(), 1);
  EXPECT_THROW(prob_E_B({2, 2, 2, 0}), DomainError);
  EXPECT_THROW(prob_E_B({2, 2, 2, 3}), DomainError);
}

TEST(ProbSuccess, Examples) {
  EXPECT_EQ(prob_success({2, 2, 2, 1}, Precision::Exact).rational(), frac(2, 15));
  EXPECT_EQ(prob_success({1, 1, 0, 1}, Precision::Exact).rational(), 1);
  const Prob p = prob_success({512, 5, 100, 1});
  EXPECT_NEAR(p.value() / 4.631019730868775e-13, 1.0, 1e-9);
  EXPECT_LE(p.log2(), -40.0);
  EXPECT_THROW(prob_success({2, 2, 2, 0}), DomainError);
}

TEST(ProbSuccess, FactorizesExactly) {
  for (std::uint64_t R = 1; R <= 12; ++R)
    for (std::uint64_t B = 1; B <= 5; ++B)
      for (std::uint64_t T = 0; T <= 12; ++T)
        for (std::uint64_t i = 1; i <= R; ++i) {
          const GameParams g{R, B, T, i};
          const Rational lhs = prob_success(g, Precision::Exact).rational();
          const Rational rhs =
              prob_E_T(g, Precision::Exact).rational() * prob_E_B(g, Precision::Exact).rational();
          ASSERT_EQ(lhs, rhs) << R << " " << B << " " << T << " " << i;
        }
}

TEST(ProbSuccess, LogSpaceWithinErrorBound) {
  for (std::uint64_t R = 1; R <= 10; ++R)
    for (std::uint64_t B = 1; B <= 4; ++B)
      for (std::uint64_t T = 0; T <= 10; T += 2)
        for (std::uint64_t i = 1; i <= R; ++i) {
          const GameParams g{R, B, T, i};
          const Prob fast = prob_success(g, Precision::Fast);
          const double exact = log2_of(prob_success(g, Precision::Exact).rational());
          ASSERT_LE(std::abs(fast.log2() - exact), fast.err_bound() + 1e-12);
        }
}

TEST(Claim1Bound, Examples) {
  EXPECT_EQ(claim1_bound(2, 2, 2, Precision::Exact).rational(), frac(2, 15));
  EXPECT_EQ(claim1_bound(2, 2, 2, Precision::Exact).rational(),
            prob_success({2, 2, 2, 1}, Precision::Exact).rational());
  const Prob b = claim1_bound(8, 8, 100);
  EXPECT_NEAR(b.value() / 7.331018594585236e-13, 1.0, 1e-9);
  EXPECT_LE(b.log2(), -40.0);
  EXPECT_THROW(claim1_bound(4, 5, 4), PreconditionError);
}

TEST(Claim1Bound, ArgmaxAtIOne) {
  for (std::uint64_t R = 1; R <= 8; ++R)
    for (std::uint64_t B = 1; B <= 4; ++B)
      for (std::uint64_t T = B; T <= 8; ++T) {
        const Rational bound = claim1_bound(R, B, T, Precision::Exact).rational();
        Rational best = 0;
        std::uint64_t best_i = 0;
        for (std::uint64_t i = 1; i <= R; ++i) {
          const Rational p = prob_success({R, B, T, i}, Precision::Exact).rational();
          if (p > best) best = p, best_i = i;
        }
        ASSERT_EQ(best_i, 1u) << R << " " << B << " " << T;
        ASSERT_EQ(best, bound);
      }
  // R=3, B=2, T=2: maximum over i is at i=1.
  const Rational p1 = prob_success({3, 2, 2, 1}, Precision::Exact).rational();
  EXPECT_GT(p1, prob_success({3, 2, 2, 2}, Precision::Exact).rational());
  EXPECT_GT(p1, prob_success({3, 2, 2, 3}, Precision::Exact).rational());
  EXPECT_EQ(prob_success({3, 2, 2, 2}, Precision::Exact).rational(), frac(3, 70));
}

TEST(ProbSuccess, MonotoneInTAndB) {
  for (std::uint64_t R = 1; R <= 6; ++R) {
    for (std::uint64_t B = 1; B <= 4; ++B)
      for (std::uint64_t T = 0; T < 10; ++T)
        ASSERT_GT(prob_success({R, B, T, 1}, Precision::Exact).rational(),
                  prob_success({R, B, T + 1, 1}, Precision::Exact).rational());
    for (std::uint64_t T = 5; T <= 8; ++T)
      for (std::uint64_t B = 1; B < 5; ++B)
        ASSERT_GT(prob_success({R, B, T, 1}, Precision::Exact).rational(),
                  prob_success({R, B + 1, T, 1}, Precision::Exact).rational());
  }
}

TEST(Claim1Within, EscalatesNearBoundary) {
  // R=2^9, B=5, T=100 is feasible at lambda=40.
  const auto d = claim1_within(512, 5, 100, 40);
  EXPECT_TRUE(d.holds);
  const auto forced = claim1_within(512, 5, 100, 40, true);
  EXPECT_TRUE(forced.holds);
  EXPECT_FALSE(forced.escalated);
  EXPECT_FALSE(claim1_within(256, 5, 90, 40).holds);
  // R / C(RB+T, B) = 1/2 exactly: the log-space margin is zero and must escalate.
  const auto tie = claim1_within(1, 1, 1, 1);
  EXPECT_TRUE(tie.escalated);
  EXPECT_TRUE(tie.holds);
  EXPECT_FALSE(claim1_within(1, 1, 1, 2).holds);
}

TEST(Claim1Grid, ClaimHoldsOnSmallGrids) {
  EXPECT_TRUE(claim1_verify_grid(2, 2, 2).empty());
  for (const auto& c : claim1_verify_grid(8, 4, 8)) {
    EXPECT_EQ(c.kind, InequalityKind::Intermediate);
  }
  EXPECT_THROW(claim1_verify_grid(1, 2, 2), PreconditionError);
}

TEST(Claim1Grid, IntermediateInequalityFailsForSmallB) {
  // C(3,2) * C(4,2) = 18 > C(6,2) = 15.
  const auto cex = claim1_verify_grid(3, 2, 2);
  ASSERT_FALSE(cex.empty());
  bool found = false;
  for (const auto& c : cex) {
    found |= c.kind == InequalityKind::Intermediate && c.R == 3 && c.B == 2 && c.i == 2;
  }
  EXPECT_TRUE(found);
}

TEST(Prob, ZeroIsMinusInfinity) {
  const Prob z = Prob::exact(0);
  EXPECT_TRUE(std::isinf(z.log2()));
  EXPECT_LT(z.log2(), 0);
  EXPECT_EQ(z.value(), 0.0);
  EXPECT_THROW(Prob::approx(-3.0, 0.1).rational(), std::logic_error);
}
