#pragma once

// Cheating-probability formulas of the mix-and-check compiler.
//
// A malicious server that falsifies i query samples must hit exactly the iB copies of
// those samples and none of the T public samples. With N = RB + T mixed positions:
//
//   Pr[E_T]      = C(N - iB, T) / C(N, T)          (publics all untouched)
//   Pr[E_B]      = C(R, i) / C(RB, iB)             (falsified copies form whole groups)
//   Pr_success   = C(R, i) / C(N, iB)  = Pr[E_T] * Pr[E_B]
//   claim1_bound = R / C(N, B)         >= Pr_success for every i, when T >= B
//
// Values are carried in log2 to survive lambda = 40+ without underflow. Each value is either
// exact (backed by a big rational) or a log-gamma approximation with a stated error bound.

#include <cstdint>
#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace fusion::combinatorics {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

enum class Exactness { Exact, LogApprox };

/// How a formula should be evaluated.
///  - Exact: big-integer arithmetic.
///  - Fast:  log-gamma, with an error bound.
///  - Auto:  exact when the binomials involved are cheap to expand, otherwise Fast.
enum class Precision { Auto, Fast, Exact };

/// A probability in base-2 log space. Zero is represented by log2 = -infinity.
class Prob {
 public:
  static Prob exact(Rational value);
  static Prob approx(double log2_value, double err_bound);

  double log2() const noexcept { return log2_; }
  /// Linear value; underflows to 0 below ~2^-1074.
  double value() const;
  Exactness exactness() const noexcept { return exactness_; }
  bool is_exact() const noexcept { return exactness_ == Exactness::Exact; }
  /// |true log2 - log2()| <= err_bound(). Zero for exact values (up to double rounding).
  double err_bound() const noexcept { return err_bound_; }
  /// The exact rational; throws std::logic_error for LogApprox values.
  const Rational& rational() const;

 private:
  Prob() = default;
  double log2_ = 0.0;
  Exactness exactness_ = Exactness::Exact;
  double err_bound_ = 0.0;
  std::optional<Rational> exact_;
};

/// Game dimensions: R query samples, B copies each, T public samples, i falsified queries.
struct GameParams {
  std::uint64_t R = 1;
  std::uint64_t B = 1;
  std::uint64_t T = 0;
  std::uint64_t i = 0;

  /// Mixed-set size RB + T; throws DomainError on overflow.
  std::uint64_t N() const;
};

/// Exact C(n, k). Throws DomainError when k > n.
BigInt binomial(std::uint64_t n, std::uint64_t k);

/// log2 of a positive big integer / rational, accurate to a few ulps.
double log2_of(const BigInt& x);
double log2_of(const Rational& x);

/// Error bound (in bits) attached to the log-gamma evaluation of log2 C(n, k).
double binom_log2_error(std::uint64_t n, std::uint64_t k);

Prob binom_log2(std::uint64_t n, std::uint64_t k, Precision precision = Precision::Auto);

Prob prob_E_T(const GameParams& p, Precision precision = Precision::Auto);
Prob prob_E_B(const GameParams& p, Precision precision = Precision::Auto);
Prob prob_success(const GameParams& p, Precision precision = Precision::Auto);

/// R / C(RB + T, B). Throws PreconditionError when T < B (the bound is only proven for T >= B).
Prob claim1_bound(std::uint64_t R, std::uint64_t B, std::uint64_t T,
                  Precision precision = Precision::Auto);

/// Result of comparing a probability against 2^-lambda.
struct ThresholdDecision {
  bool holds = false;      // value <= 2^-lambda
  bool escalated = false;  // the log-space margin was inside the error bound, exact path used
  double log2_value = 0.0;
};

/// claim1_bound(R, B, T) <= 2^-lambda. Uses log-gamma first and escalates to exact integers
/// whenever the margin is not larger than the error bound (or when force_exact is set).
ThresholdDecision claim1_within(std::uint64_t R, std::uint64_t B, std::uint64_t T, int lambda,
                                bool force_exact = false);

enum class InequalityKind {
  Claim1,        // C(R,i)/C(RB+T,iB) <= R/C(RB+T,B)
  Intermediate,  // C(R,i)*C(iB,iB-B) <= C(RB,iB-B), checked for i >= 2 (independent of T)
};

struct Counterexample {
  InequalityKind kind = InequalityKind::Claim1;
  std::uint64_t R = 0;
  std::uint64_t B = 0;
  std::optional<std::uint64_t> T;  // empty for Intermediate
  std::uint64_t i = 0;
};

/// Exhaustive exact check over 1 <= R <= max_R, 1 <= B <= max_B, B <= T <= max_T, 1 <= i <= R.
/// Cells with T < B are outside the claim and skipped.
std::vector<Counterexample> claim1_verify_grid(std::uint64_t max_R, std::uint64_t max_B,
                                               std::uint64_t max_T);

}  // namespace fusion::combinatorics
