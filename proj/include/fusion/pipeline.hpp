#pragma once

// One complete batched run: plan, mix, infer, verify.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusion/backend.hpp"
#include "fusion/planner.hpp"
#include "fusion/verify.hpp"

namespace fusion {

struct RunOptions {
  std::filesystem::path model_path;
  std::filesystem::path queries_path;
  std::filesystem::path publics_path;
  int lambda = planner::kDefaultLambda;
  std::uint64_t beta_pub = planner::kDefaultBetaPub;
  double delta = 0.95;
  std::string backend = "oracle";  // oracle | two-party | two-party:tcp
  std::string adversary = "honest";
  std::uint64_t seed = 0;
  bool timestamp = true;
  std::optional<HostPort> dealer_addr;  // with server_addr: connect to running endpoints
  std::optional<HostPort> server_addr;
};

struct RunReport {
  planner::SecurityPlan plan;
  std::string backend;
  std::string adversary;
  bool accepted = false;
  std::optional<AbortReason> abort_reason;
  AccuracyCheck accuracy;
  ConsistencyCheck consistency;
  std::vector<Label> labels;  // released only on Accept
  ChannelStats channel_stats;
  double amortized_bytes_per_query = 0.0;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;
  double delta = 0.0;
  bool timestamp = true;

  std::string to_json() const;
};

/// Runs the full protocol. Operational problems (bad files, infeasible plan, too few public
/// samples, transport failures) throw; a detected cheat is an Abort verdict, not an error.
RunReport run_fusion(const RunOptions& options);

}  // namespace fusion
