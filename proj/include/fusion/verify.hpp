#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fusion/datamix.hpp"

namespace fusion {

/// Accuracy threshold on the public samples; the paper's example value is 0.95.
struct VerifyConfig {
  double delta = 0.95;
  void validate() const;
};

struct AccuracyCheck {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  double eta = 0.0;  // correct / total
  bool pass = false; // eta >= delta; strictly-below aborts
};

struct ConsistencyViolation {
  std::uint64_t query_index = 0;
  std::vector<Label> labels;  // the group's copy labels, in copy order
};

struct ConsistencyCheck {
  bool pass = true;
  std::optional<ConsistencyViolation> first_violation;
};

AccuracyCheck check_accuracy(std::span<const PublicResult> publics, double delta);
ConsistencyCheck check_consistency(std::span<const std::vector<Label>> groups);

enum class AbortReason { AccuracyBelowThreshold, InconsistentCopies };
std::string_view to_string(AbortReason reason);

/// Outcome of the client's checks. Query labels are only reachable on Accept.
class VerificationReport {
 public:
  bool accepted() const noexcept { return !abort_reason_; }
  std::optional<AbortReason> abort_reason() const noexcept { return abort_reason_; }
  const AccuracyCheck& accuracy() const noexcept { return accuracy_; }
  const ConsistencyCheck& consistency() const noexcept { return consistency_; }
  double eta() const noexcept { return accuracy_.eta; }
  /// One label per query. Throws std::logic_error when the verdict is Abort.
  const std::vector<Label>& released_labels() const;

 private:
  friend VerificationReport verdict(const AccuracyCheck&, const ConsistencyCheck&,
                                    std::span<const std::vector<Label>>);
  AccuracyCheck accuracy_;
  ConsistencyCheck consistency_;
  std::optional<AbortReason> abort_reason_;
  std::vector<Label> labels_;
};

/// Accept iff both checks pass; an accuracy failure is reported first.
VerificationReport verdict(const AccuracyCheck& accuracy, const ConsistencyCheck& consistency,
                           std::span<const std::vector<Label>> groups);

/// Runs accuracy then consistency on unmixed results and forms the verdict.
VerificationReport verify_results(const UnmixedResults& results, const VerifyConfig& config);

}  // namespace fusion
