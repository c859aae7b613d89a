#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fusion/combinatorics.hpp"
#include "fusion/datamix.hpp"
#include "fusion/model.hpp"

namespace fusion::planner {

/// Default lower bound on public samples; chosen empirically from test-accuracy variance.
inline constexpr std::uint64_t kDefaultBetaPub = 100;
inline constexpr int kDefaultLambda = 40;

/// (R, B, T) for one batch together with the security target it was searched for.
/// Invariants: T >= max(beta_pub, B); R / C(RB+T, B) <= 2^-lambda; 2 <= B <= max(2, lambda).
struct SecurityPlan {
  std::uint64_t R = 0;
  std::uint64_t B = 0;
  std::uint64_t T = 0;
  int lambda = kDefaultLambda;
  std::uint64_t beta_pub = kDefaultBetaPub;
  double bound_log2 = 0.0;      // log2 of R / C(RB+T, B)
  bool boundary_exact = false;  // the final feasibility decision used exact integers

  BatchShape shape() const { return {R, B, T}; }
};

struct CostReport {
  combinatorics::Rational amortized;  // (RB + T) / R
  double amortized_cost = 0.0;
  std::uint64_t total_samples = 0;    // RB + T
};

/// Samples processed per useful query. Throws DomainError when R = 0.
CostReport amortized_cost(std::uint64_t R, std::uint64_t B, std::uint64_t T);

struct SearchOptions {
  bool force_exact = false;  // decide every feasibility test with exact integers
};

/// Smallest T >= max(beta_pub, B) with R / C(RB+T, B) <= 2^-lambda, or empty if it would
/// exceed the search ceiling.
std::optional<std::uint64_t> min_T_for_B(std::uint64_t R, std::uint64_t B, int lambda,
                                         std::uint64_t beta_pub, const SearchOptions& opts = {});

/// Cost-minimizing (B, T) over B in [2, max(2, lambda)]; equal costs keep the smaller B.
/// Throws InfeasibleError when no B admits a feasible T.
SecurityPlan search_params(std::uint64_t R, int lambda, std::uint64_t beta_pub,
                           const SearchOptions& opts = {});

/// Least R (optionally restricted to powers of two) for which search_params picks exactly
/// this B with T = max(beta_pub, B). Empty when B is never optimal up to R = 2^max_log2_R.
std::optional<std::uint64_t> min_R_for_B(std::uint64_t B, int lambda, std::uint64_t beta_pub,
                                         bool powers_of_two, int max_log2_R = 40);

struct TableRow {
  std::uint64_t B = 0;
  std::optional<std::uint64_t> R;
  std::uint64_t T = 0;
};

/// One row per B in [b_lo, b_hi], descending as in the published table.
std::vector<TableRow> parameter_table(int lambda, std::uint64_t beta_pub, std::uint64_t b_lo,
                                      std::uint64_t b_hi);

struct VarianceRow {
  std::uint64_t T = 0;
  std::vector<double> group_accuracy;
  double variance = 0.0;  // mean squared deviation from the full-pool accuracy
};

struct VarianceTable {
  double standard_accuracy = 0.0;  // accuracy over the whole pool
  std::vector<VarianceRow> rows;
};

/// For each T, splits a seeded shuffle of the pool into `groups` disjoint subsets of size T
/// and reports the spread of per-subset accuracy around the full-pool accuracy.
VarianceTable estimate_T_variance(const Model& model, std::span<const LabeledSample> pool,
                                  std::span<const std::uint64_t> T_candidates, std::uint64_t groups,
                                  std::uint64_t seed);

/// Same procedure with precomputed per-sample correctness (1 = correct), exposed for testing.
VarianceTable variance_from_correctness(std::span<const std::uint8_t> correct,
                                        std::span<const std::uint64_t> T_candidates,
                                        std::uint64_t groups, std::uint64_t seed);

}  // namespace fusion::planner
