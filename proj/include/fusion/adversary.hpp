#pragma once

// Malicious-server strategies, the cheating game, and win-probability estimators.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fusion/backend.hpp"
#include "fusion/combinatorics.hpp"
#include "fusion/datamix.hpp"
#include "fusion/verify.hpp"

namespace fusion::adversary {

struct Honest {};

/// Label-level stand-in for a weaker model: every distinct sample is answered wrongly with
/// probability `error_rate`, and all copies of a sample get the same answer.
struct LowQuality {
  double error_rate = 0.0;
};

enum class Selection {
  RandomPositions,
  OracleGrouped,  // sees the permutation; negative testing only
};

struct TargetedCorruption {
  std::uint64_t i = 1;
  Selection selection = Selection::RandomPositions;
};

struct IndependentNoise {
  double p = 0.0;
};

using Strategy = std::variant<Honest, LowQuality, TargetedCorruption, IndependentNoise>;

/// Number of label classes in the game; a falsified result is label+1 mod this.
inline constexpr Label kGameClasses = 10;

struct GameOutcome {
  bool server_wins = false;
  std::optional<AbortReason> detected_by;
  std::vector<std::uint64_t> corrupted_positions;  // sorted
};

/// One play of the game with accuracy threshold 1 on the public samples. With T = 0 there is
/// nothing to audit and only the consistency check runs.
GameOutcome run_game(const Strategy& strategy, const BatchShape& shape, std::uint64_t seed);

struct WinEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t wins = 0;
  std::uint64_t detections = 0;
};

/// Independent plays seeded from Rng(seed).derive("trial", t); runs on `threads` workers
/// (0 picks the hardware concurrency). The result does not depend on the thread count.
WinEstimate estimate_win_prob(const Strategy& strategy, const BatchShape& shape, std::uint64_t trials,
                              std::uint64_t seed, unsigned threads = 0);

/// "random", "oracle" (corrupt i copies' worth of positions), "honest", "noise:P" or "lowq:E".
Strategy parse_strategy(const std::string& text, std::uint64_t i);

inline constexpr std::uint64_t kEnumerationBudget = 10'000'000;

/// Exact win probability of random-position corruption by brute force over every subset of
/// i*B positions.
combinatorics::Rational enumerate_win_prob(const BatchShape& shape, std::uint64_t i,
                                           std::uint64_t budget = kEnumerationBudget);

/// Falsifies i*B positions chosen uniformly at random once the batch shape is known.
class CorruptingServer final : public ServerBehavior {
 public:
  CorruptingServer(const Model& model, std::uint64_t i, std::uint64_t seed);
  const Model& model() const override { return *model_; }
  void begin_batch(const BatchShape& shape) override;
  bool corrupts(std::size_t position) const override;

 private:
  const Model* model_;
  std::uint64_t i_;
  std::uint64_t seed_;
  std::vector<bool> corrupted_;
};

/// Falsifies each position independently with probability p.
class NoisyServer final : public ServerBehavior {
 public:
  NoisyServer(const Model& model, double p, std::uint64_t seed);
  const Model& model() const override { return *model_; }
  void begin_batch(const BatchShape& shape) override;
  bool corrupts(std::size_t position) const override;

 private:
  const Model* model_;
  double p_;
  std::uint64_t seed_;
  std::vector<bool> corrupted_;
};

/// Serves a substitute model honestly.
class SubstituteModelServer final : public ServerBehavior {
 public:
  explicit SubstituteModelServer(Model model) : model_(std::move(model)) {}
  const Model& model() const override { return model_; }

 private:
  Model model_;
};

/// Parses "honest", "lowq:PATH", "corrupt:I" or "noise:P" into a server behaviour.
std::unique_ptr<ServerBehavior> make_behavior(const std::string& spec, const Model& model, std::uint64_t seed);

}  // namespace fusion::adversary
