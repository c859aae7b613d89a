#include "fusion/verify.hpp"

#include <stdexcept>
#include <string>

#include "fusion/error.hpp"

namespace fusion {

void VerifyConfig::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) throw DomainError("delta must lie in [0, 1]");
}

AccuracyCheck check_accuracy(std::span<const PublicResult> publics, double delta) {
  VerifyConfig{delta}.validate();
  if (publics.empty()) throw PreconditionError("accuracy check needs at least one public sample (T = 0)");
  AccuracyCheck a;
  a.total = publics.size();
  for (const auto& p : publics) a.correct += p.label == p.expected ? 1 : 0;
  a.eta = static_cast<double>(a.correct) / static_cast<double>(a.total);
  // eta and a decimal delta equal to the same rational round to the same double.
  a.pass = a.eta >= delta;
  return a;
}

ConsistencyCheck check_consistency(std::span<const std::vector<Label>> groups) {
  ConsistencyCheck c;
  if (groups.empty()) return c;
  const std::size_t b = groups.front().size();
  for (const auto& g : groups) {
    if (g.size() != b || b == 0) throw DomainError("consistency check: ragged copy groups");
  }
  for (std::size_t q = 0; q < groups.size(); ++q) {
    const auto& g = groups[q];
    for (std::size_t k = 1; k < g.size(); ++k) {
      if (g[k] != g[0]) {
        c.pass = false;
        c.first_violation = ConsistencyViolation{q, g};
        return c;
      }
    }
  }
  return c;
}

std::string_view to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::AccuracyBelowThreshold:
      return "AccuracyBelowThreshold";
    case AbortReason::InconsistentCopies:
      return "InconsistentCopies";
  }
  return "unknown";
}

const std::vector<Label>& VerificationReport::released_labels() const {
  if (abort_reason_) {
    throw std::logic_error("query results are withheld after Abort(" +
                           std::string(to_string(*abort_reason_)) + ")");
  }
  return labels_;
}

VerificationReport verdict(const AccuracyCheck& accuracy, const ConsistencyCheck& consistency,
                           std::span<const std::vector<Label>> groups) {
  VerificationReport r;
  r.accuracy_ = accuracy;
  r.consistency_ = consistency;
  if (!accuracy.pass) {
    r.abort_reason_ = AbortReason::AccuracyBelowThreshold;
  } else if (!consistency.pass) {
    r.abort_reason_ = AbortReason::InconsistentCopies;
  } else {
    r.labels_.reserve(groups.size());
    for (const auto& g : groups) r.labels_.push_back(g.front());
  }
  return r;
}

VerificationReport verify_results(const UnmixedResults& results, const VerifyConfig& config) {
  const auto accuracy = check_accuracy(results.publics, config.delta);
  const auto consistency = check_consistency(results.groups);
  return verdict(accuracy, consistency, results.groups);
}

}  // namespace fusion
