#include "fusion/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <bit>
#include <numeric>
#include <string>

#include "fusion/error.hpp"
#include "fusion/rng.hpp"

namespace fusion::planner {
namespace {

namespace cb = combinatorics;

// Past this T the amortized cost is absurd; treat as infeasible.
constexpr std::uint64_t kMaxT = std::uint64_t{1} << 50;
// Candidates examined past the first R where B becomes feasible at its floor T.
constexpr int kMinRScan = 64;

bool feasible(std::uint64_t R, std::uint64_t B, std::uint64_t T, int lambda, const SearchOptions& opts) {
  return cb::claim1_within(R, B, T, lambda, opts.force_exact).holds;
}

std::uint64_t t_floor(std::uint64_t B, std::uint64_t beta_pub) { return std::max(beta_pub, B); }

}  // namespace

CostReport amortized_cost(std::uint64_t R, std::uint64_t B, std::uint64_t T) {
  if (R == 0) throw DomainError("amortized cost undefined for R = 0");
  CostReport c;
  c.total_samples = cb::GameParams{R, B, T, 0}.N();
  c.amortized = cb::Rational(cb::BigInt(c.total_samples), cb::BigInt(R));
  c.amortized_cost = static_cast<double>(c.total_samples) / static_cast<double>(R);
  return c;
}

std::optional<std::uint64_t> min_T_for_B(std::uint64_t R, std::uint64_t B, int lambda,
                                         std::uint64_t beta_pub, const SearchOptions& opts) {
  if (R == 0) throw DomainError("R must be at least 1");
  if (B < 2) throw DomainError("B must be at least 2");
  std::uint64_t lo = t_floor(B, beta_pub);
  if (feasible(R, B, lo, lambda, opts)) return lo;
  // The bound decreases in T: bracket by doubling, then bisect. Invariant: lo infeasible.
  std::uint64_t hi = std::max<std::uint64_t>(lo * 2, 1);
  while (!feasible(R, B, hi, lambda, opts)) {
    if (hi >= kMaxT) return std::nullopt;
    lo = hi;
    hi = std::min(hi * 2, kMaxT);
  }
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (feasible(R, B, mid, lambda, opts)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

SecurityPlan search_params(std::uint64_t R, int lambda, std::uint64_t beta_pub, const SearchOptions& opts) {
  if (R == 0) throw DomainError("R must be at least 1");
  if (lambda < 1) throw DomainError("lambda must be at least 1");
  const std::uint64_t b_max = static_cast<std::uint64_t>(std::max(2, lambda));

  std::optional<SecurityPlan> best;
  std::uint64_t best_total = 0;
  double best_log2_seen = std::numeric_limits<double>::infinity();
  for (std::uint64_t B = 2; B <= b_max; ++B) {
    const auto T = min_T_for_B(R, B, lambda, beta_pub, opts);
    if (!T) {
      best_log2_seen = std::min(best_log2_seen, cb::claim1_bound(R, B, kMaxT, cb::Precision::Fast).log2());
      continue;
    }
    const std::uint64_t total = cb::GameParams{R, B, *T, 0}.N();
    if (!best || total < best_total) {  // same R, so comparing RB+T compares cost exactly
      const auto d = cb::claim1_within(R, B, *T, lambda, opts.force_exact);
      best = SecurityPlan{R, B, *T, lambda, beta_pub, d.log2_value, opts.force_exact || d.escalated};
      best_total = total;
    }
  }
  if (!best) {
    throw InfeasibleError("no (B, T) reaches 2^-" + std::to_string(lambda) + " for R = " + std::to_string(R),
                          best_log2_seen);
  }
  return *best;
}

std::optional<std::uint64_t> min_R_for_B(std::uint64_t B, int lambda, std::uint64_t beta_pub,
                                         bool powers_of_two, int max_log2_R) {
  if (B < 2 || B > static_cast<std::uint64_t>(std::max(2, lambda))) {
    throw DomainError("B must lie in [2, max(2, lambda)]");
  }
  const std::uint64_t t0 = t_floor(B, beta_pub);
  const std::uint64_t r_max = std::uint64_t{1} << max_log2_R;
  const SearchOptions opts;

  // B can only be optimal at T = t0 once it is feasible there; feasibility at fixed T is
  // monotone in R, so locate the first such R by bracketing and bisection.
  if (!feasible(r_max, B, t0, lambda, opts)) return std::nullopt;
  std::uint64_t r0 = 1;
  if (!feasible(1, B, t0, lambda, opts)) {
    std::uint64_t lo = 1, hi = 2;
    while (!feasible(hi, B, t0, lambda, opts)) {
      lo = hi;
      hi *= 2;
    }
    while (hi - lo > 1) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      if (feasible(mid, B, t0, lambda, opts)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    r0 = hi;
  }
  if (powers_of_two) r0 = std::bit_ceil(r0);

  std::uint64_t R = r0;
  for (int step = 0; step < kMinRScan && R <= r_max; ++step) {
    try {
      const auto plan = search_params(R, lambda, beta_pub, opts);
      if (plan.B == B && plan.T == t0) return R;
    } catch (const InfeasibleError&) {
    }
    R = powers_of_two ? R * 2 : R + 1;
  }
  return std::nullopt;
}

std::vector<TableRow> parameter_table(int lambda, std::uint64_t beta_pub, std::uint64_t b_lo,
                                      std::uint64_t b_hi) {
  if (b_lo < 2 || b_lo > b_hi) throw DomainError("B range must satisfy 2 <= lo <= hi");
  std::vector<TableRow> rows;
  for (std::uint64_t B = b_hi; B >= b_lo; --B) {
    rows.push_back({B, min_R_for_B(B, lambda, beta_pub, true), t_floor(B, beta_pub)});
  }
  return rows;
}

VarianceTable variance_from_correctness(std::span<const std::uint8_t> correct,
                                        std::span<const std::uint64_t> T_candidates,
                                        std::uint64_t groups, std::uint64_t seed) {
  if (groups == 0) throw DomainError("variance: need at least one group");
  if (T_candidates.empty()) throw DomainError("variance: no T candidates");
  const std::uint64_t t_max = *std::max_element(T_candidates.begin(), T_candidates.end());
  if (correct.empty() || t_max * groups > correct.size()) {
    throw PreconditionError("variance: pool has " + std::to_string(correct.size()) +
                            " samples, need at least " + std::to_string(t_max * groups));
  }
  VarianceTable out;
  const auto hits = static_cast<double>(std::count(correct.begin(), correct.end(), std::uint8_t{1}));
  out.standard_accuracy = hits / static_cast<double>(correct.size());

  for (const std::uint64_t T : T_candidates) {
    if (T == 0) throw DomainError("variance: T must be positive");
    std::vector<std::size_t> order(correct.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(seed).derive("variance", T);
    shuffle(order.begin(), order.end(), rng);

    VarianceRow row;
    row.T = T;
    double sq = 0.0;
    for (std::uint64_t g = 0; g < groups; ++g) {
      std::uint64_t ok = 0;
      for (std::uint64_t k = 0; k < T; ++k) ok += correct[order[g * T + k]] != 0 ? 1 : 0;
      const double acc = static_cast<double>(ok) / static_cast<double>(T);
      row.group_accuracy.push_back(acc);
      sq += (acc - out.standard_accuracy) * (acc - out.standard_accuracy);
    }
    row.variance = sq / static_cast<double>(groups);
    out.rows.push_back(std::move(row));
  }
  return out;
}

VarianceTable estimate_T_variance(const Model& model, std::span<const LabeledSample> pool,
                                  std::span<const std::uint64_t> T_candidates, std::uint64_t groups,
                                  std::uint64_t seed) {
  std::vector<std::uint8_t> correct;
  correct.reserve(pool.size());
  for (const auto& s : pool) {
    if (s.label < 0) throw FormatError("variance: pool samples must be labeled");
    correct.push_back(forward(model, s.sample.features).label == s.label ? 1 : 0);
  }
  return variance_from_correctness(correct, T_candidates, groups, seed);
}

}  // namespace fusion::planner
