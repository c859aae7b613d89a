#pragma once

#include <stdexcept>
#include <string>

namespace fusion {

/// Arguments outside a function's mathematical domain (k > n, i > R, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A documented precondition that the caller must establish (e.g. T >= B for Claim-1 bounds).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// No parameter choice satisfies the security constraint within resource limits.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, double best_log2_bound)
      : std::runtime_error(what), best_log2_bound_(best_log2_bound) {}
  double best_log2_bound() const noexcept { return best_log2_bound_; }

 private:
  double best_log2_bound_;
};

/// Fixed-point value does not fit the 64-bit ring.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Malformed input file (CSV, model JSON, expected-values file).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wire-level failure: bad framing, unexpected message, transport error, or a peer Abort.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The peer sent Abort or the link went down; usually a consequence of an error elsewhere.
class PeerGoneError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

}  // namespace fusion
