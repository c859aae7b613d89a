#include "fusion/combinatorics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fusion/error.hpp"

namespace fusion::combinatorics {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kLn2 = 0.69314718055994530942;
// Expanding a binomial exactly costs O(min(k, n-k)) bignum steps; below this total we just do it.
constexpr std::uint64_t kAutoExactBudget = 2048;
// Up to this many factors the log-sum path beats log-gamma on accuracy.
constexpr std::uint64_t kLogSumLimit = 256;
// Generous ulp multiplier for libm lgamma on positive integer arguments.
constexpr double kLgammaUlps = 32.0;

std::uint64_t reduced_k(std::uint64_t n, std::uint64_t k) { return std::min(k, n - k); }

void check_binom_args(std::uint64_t n, std::uint64_t k) {
  if (k > n) {
    throw DomainError("binomial: k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  }
}

struct LogValue {
  double log2 = 0.0;
  double err = 0.0;
};

LogValue fast_binom_log2(std::uint64_t n, std::uint64_t k) {
  check_binom_args(n, k);
  const std::uint64_t kk = reduced_k(n, k);
  if (kk == 0) return {0.0, 0.0};
  if (kk <= kLogSumLimit) {
    // sum_{j=1..kk} log2((n - kk + j) / j)
    double sum = 0.0;
    for (std::uint64_t j = 1; j <= kk; ++j) {
      sum += std::log2(static_cast<double>(n - kk + j)) - std::log2(static_cast<double>(j));
    }
    const double per_term = 8.0 * kEps * (std::log2(static_cast<double>(n)) + 1.0);
    return {sum, static_cast<double>(kk) * (per_term + kEps * std::abs(sum)) + kEps};
  }
  const double a = std::lgamma(static_cast<double>(n) + 1.0);
  const double b = std::lgamma(static_cast<double>(k) + 1.0);
  const double c = std::lgamma(static_cast<double>(n - k) + 1.0);
  return {(a - b - c) / kLn2, binom_log2_error(n, k)};
}

Prob from_log(LogValue v) { return Prob::approx(v.log2, v.err); }

bool use_exact(Precision precision, std::uint64_t cost) {
  switch (precision) {
    case Precision::Exact:
      return true;
    case Precision::Fast:
      return false;
    case Precision::Auto:
      return cost <= kAutoExactBudget;
  }
  return true;
}

std::uint64_t binom_cost(std::uint64_t n, std::uint64_t k) { return reduced_k(n, k); }

void check_game(const GameParams& p) {
  if (p.R == 0) throw DomainError("R must be at least 1");
  if (p.B == 0) throw DomainError("B must be at least 1");
  if (p.i > p.R) {
    throw DomainError("i = " + std::to_string(p.i) + " exceeds R = " + std::to_string(p.R));
  }
  (void)p.N();
}

void check_corrupting(const GameParams& p) {
  check_game(p);
  if (p.i == 0) throw DomainError("event undefined for i = 0 (nothing corrupted)");
}

}  // namespace

Prob Prob::exact(Rational value) {
  if (value < 0) throw DomainError("negative probability mass");
  Prob p;
  p.exactness_ = Exactness::Exact;
  p.err_bound_ = 0.0;
  p.log2_ = value == 0 ? -std::numeric_limits<double>::infinity() : log2_of(value);
  p.exact_ = std::move(value);
  return p;
}

Prob Prob::approx(double log2_value, double err_bound) {
  Prob p;
  p.exactness_ = Exactness::LogApprox;
  p.log2_ = log2_value;
  p.err_bound_ = err_bound;
  return p;
}

double Prob::value() const { return std::exp2(log2_); }

const Rational& Prob::rational() const {
  if (!exact_) throw std::logic_error("Prob: no exact value for a log-space approximation");
  return *exact_;
}

std::uint64_t GameParams::N() const {
  std::uint64_t rb = 0;
  if (__builtin_mul_overflow(R, B, &rb)) throw DomainError("R*B overflows");
  std::uint64_t n = 0;
  if (__builtin_add_overflow(rb, T, &n)) throw DomainError("R*B + T overflows");
  return n;
}

BigInt binomial(std::uint64_t n, std::uint64_t k) {
  check_binom_args(n, k);
  const std::uint64_t kk = reduced_k(n, k);
  BigInt result = 1;
  for (std::uint64_t j = 1; j <= kk; ++j) {
    result *= n - kk + j;
    result /= j;  // exact: product of j consecutive integers is divisible by j!
  }
  return result;
}

double log2_of(const BigInt& x) {
  if (x <= 0) throw DomainError("log2 of a non-positive integer");
  const std::size_t msb = boost::multiprecision::msb(x);
  if (msb < 63) return std::log2(x.convert_to<double>());
  const std::size_t shift = msb - 62;
  const BigInt top = x >> shift;
  return std::log2(top.convert_to<double>()) + static_cast<double>(shift);
}

double log2_of(const Rational& x) {
  if (x <= 0) throw DomainError("log2 of a non-positive rational");
  return log2_of(BigInt(numerator(x))) - log2_of(BigInt(denominator(x)));
}

double binom_log2_error(std::uint64_t n, std::uint64_t k) {
  const double a = std::abs(std::lgamma(static_cast<double>(n) + 1.0));
  const double b = std::abs(std::lgamma(static_cast<double>(k) + 1.0));
  const double c = std::abs(std::lgamma(static_cast<double>(n - k) + 1.0));
  return kLgammaUlps * kEps * (a + b + c + 1.0) / kLn2;
}

Prob binom_log2(std::uint64_t n, std::uint64_t k, Precision precision) {
  check_binom_args(n, k);
  if (use_exact(precision, binom_cost(n, k))) return Prob::exact(Rational(binomial(n, k)));
  return from_log(fast_binom_log2(n, k));
}

Prob prob_E_T(const GameParams& p, Precision precision) {
  check_game(p);
  const std::uint64_t n = p.N();
  const std::uint64_t hit = p.i * p.B;
  if (p.i == 0 || p.T == 0) return Prob::exact(Rational(1));
  if (use_exact(precision, binom_cost(n - hit, p.T) + binom_cost(n, p.T))) {
    return Prob::exact(Rational(binomial(n - hit, p.T), binomial(n, p.T)));
  }
  const LogValue num = fast_binom_log2(n - hit, p.T);
  const LogValue den = fast_binom_log2(n, p.T);
  return Prob::approx(num.log2 - den.log2, num.err + den.err);
}

Prob prob_E_B(const GameParams& p, Precision precision) {
  check_corrupting(p);
  const std::uint64_t rb = p.R * p.B;
  if (use_exact(precision, binom_cost(p.R, p.i) + binom_cost(rb, p.i * p.B))) {
    return Prob::exact(Rational(binomial(p.R, p.i), binomial(rb, p.i * p.B)));
  }
  const LogValue num = fast_binom_log2(p.R, p.i);
  const LogValue den = fast_binom_log2(rb, p.i * p.B);
  return Prob::approx(num.log2 - den.log2, num.err + den.err);
}

Prob prob_success(const GameParams& p, Precision precision) {
  check_corrupting(p);
  const std::uint64_t n = p.N();
  if (use_exact(precision, binom_cost(p.R, p.i) + binom_cost(n, p.i * p.B))) {
    return Prob::exact(Rational(binomial(p.R, p.i), binomial(n, p.i * p.B)));
  }
  const LogValue num = fast_binom_log2(p.R, p.i);
  const LogValue den = fast_binom_log2(n, p.i * p.B);
  return Prob::approx(num.log2 - den.log2, num.err + den.err);
}

Prob claim1_bound(std::uint64_t R, std::uint64_t B, std::uint64_t T, Precision precision) {
  const GameParams p{R, B, T, 1};
  check_game(p);
  if (T < B) {
    throw PreconditionError("Claim-1 bound requires T >= B (got T = " + std::to_string(T) +
                            ", B = " + std::to_string(B) + ")");
  }
  const std::uint64_t n = p.N();
  if (use_exact(precision, binom_cost(n, B))) {
    return Prob::exact(Rational(BigInt(R), binomial(n, B)));
  }
  const LogValue den = fast_binom_log2(n, B);
  const double log2_r = std::log2(static_cast<double>(R));
  return Prob::approx(log2_r - den.log2, den.err + 4.0 * kEps * (log2_r + 1.0));
}

ThresholdDecision claim1_within(std::uint64_t R, std::uint64_t B, std::uint64_t T, int lambda,
                                bool force_exact) {
  if (lambda < 0) throw DomainError("lambda must be non-negative");
  ThresholdDecision d;
  if (!force_exact) {
    const Prob fast = claim1_bound(R, B, T, Precision::Fast);
    const double margin = -static_cast<double>(lambda) - fast.log2();
    d.log2_value = fast.log2();
    if (std::abs(margin) > fast.err_bound()) {
      d.holds = margin > 0;
      return d;
    }
    d.escalated = true;
  }
  // R / C(N, B) <= 2^-lambda  <=>  R * 2^lambda <= C(N, B)
  const BigInt c = binomial(GameParams{R, B, T, 1}.N(), B);
  const BigInt lhs = BigInt(R) << lambda;
  d.holds = lhs <= c;
  d.log2_value = std::log2(static_cast<double>(R)) - log2_of(c);
  return d;
}

std::vector<Counterexample> claim1_verify_grid(std::uint64_t max_R, std::uint64_t max_B,
                                               std::uint64_t max_T) {
  if (max_R < 2 || max_B < 2 || max_T < 2) {
    throw PreconditionError("claim1_verify_grid: all maxima must be at least 2");
  }
  const std::uint64_t n_max = GameParams{max_R, max_B, max_T, 0}.N();
  if (n_max > 4096) throw PreconditionError("claim1_verify_grid: grid too large for exact table");

  // Pascal's triangle up to n_max; rows are independent of the multiplicative routine above.
  std::vector<std::vector<BigInt>> pascal(n_max + 1);
  for (std::uint64_t n = 0; n <= n_max; ++n) {
    pascal[n].resize(n + 1);
    pascal[n][0] = pascal[n][n] = 1;
    for (std::uint64_t k = 1; k < n; ++k) pascal[n][k] = pascal[n - 1][k - 1] + pascal[n - 1][k];
  }
  const auto C = [&](std::uint64_t n, std::uint64_t k) -> const BigInt& { return pascal[n][k]; };

  std::vector<Counterexample> out;
  for (std::uint64_t R = 1; R <= max_R; ++R) {
    for (std::uint64_t B = 1; B <= max_B; ++B) {
      if (B > max_T) continue;
      for (std::uint64_t i = 2; i <= R; ++i) {
        const std::uint64_t d = i * B - B;
        if (C(R, i) * C(i * B, d) > C(R * B, d)) {
          out.push_back({InequalityKind::Intermediate, R, B, std::nullopt, i});
        }
      }
      for (std::uint64_t T = B; T <= max_T; ++T) {
        const std::uint64_t n = R * B + T;
        for (std::uint64_t i = 1; i <= R; ++i) {
          // C(R,i)/C(n,iB) <= R/C(n,B)  <=>  C(R,i)*C(n,B) <= R*C(n,iB)
          if (C(R, i) * C(n, B) > BigInt(R) * C(n, i * B)) {
            out.push_back({InequalityKind::Claim1, R, B, T, i});
          }
        }
      }
    }
  }
  return out;
}

}  // namespace fusion::combinatorics
