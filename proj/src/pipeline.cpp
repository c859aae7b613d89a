#include "fusion/pipeline.hpp"

#include <chrono>
#include <ctime>

#include "fusion/adversary.hpp"
#include "fusion/datamix.hpp"
#include "fusion/error.hpp"
#include "fusion/rng.hpp"
#include "json.hpp"

namespace fusion {

using nlohmann::ordered_json;

std::string RunReport::to_json() const {
  ordered_json j;
  j["plan"] = {{"R", plan.R},
               {"B", plan.B},
               {"T", plan.T},
               {"lambda", plan.lambda},
               {"beta_pub", plan.beta_pub},
               {"bound_log2", plan.bound_log2},
               {"boundary_exact", plan.boundary_exact},
               {"amortized_cost", planner::amortized_cost(plan.R, plan.B, plan.T).amortized_cost}};
  j["backend"] = backend;
  j["adversary"] = adversary;
  j["verdict"] = accepted ? "Accept" : "Abort";
  j["abort_reason"] = abort_reason ? ordered_json(std::string(to_string(*abort_reason))) : ordered_json(nullptr);
  j["eta"] = accuracy.eta;
  j["accuracy"] = {{"correct", accuracy.correct}, {"total", accuracy.total}, {"delta", delta}, {"pass", accuracy.pass}};
  ordered_json violation = nullptr;
  if (consistency.first_violation) {
    violation = {{"query_index", consistency.first_violation->query_index},
                 {"labels", consistency.first_violation->labels}};
  }
  j["consistency"] = {{"pass", consistency.pass}, {"first_violation", violation}};
  j["labels"] = accepted ? ordered_json(labels) : ordered_json(nullptr);
  j["channel_stats"] = {{"bytes_client_to_server", channel_stats.bytes_client_to_server},
                        {"bytes_server_to_client", channel_stats.bytes_server_to_client},
                        {"bytes_dealer_total", channel_stats.bytes_dealer_total},
                        {"rounds", channel_stats.rounds},
                        {"dealer_links_observed", channel_stats.dealer_links_observed}};
  j["amortized_bytes_per_query"] = amortized_bytes_per_query;
  j["seed"] = seed;
  if (timestamp) {
    j["wall_time_ms"] = wall_time_ms;
    j["timestamp"] = static_cast<std::int64_t>(std::time(nullptr));
  }
  return j.dump(2) + "\n";
}

namespace {

std::unique_ptr<InferenceBackend> make_backend(const RunOptions& o, ServerBehavior& server) {
  if (o.backend == "oracle") return std::make_unique<OracleBackend>(server);
  TwoPartyOptions tp;
  tp.seed = Rng(o.seed).derive("backend")();
  if (o.backend == "two-party") {
    tp.transport = Transport::InProcess;
  } else if (o.backend == "two-party:tcp") {
    if (o.dealer_addr.has_value() != o.server_addr.has_value()) {
      throw DomainError("--dealer-addr and --server-addr must be given together");
    }
    if (o.dealer_addr) {
      tp.transport = Transport::TcpRemote;
      tp.dealer_addr = *o.dealer_addr;
      tp.server_addr = *o.server_addr;
      return std::make_unique<TwoPartyBackend>(nullptr, tp);
    }
    tp.transport = Transport::TcpLoopback;
  } else {
    throw DomainError("unknown backend '" + o.backend + "'; expected oracle, two-party or two-party:tcp");
  }
  return std::make_unique<TwoPartyBackend>(&server, tp);
}

}  // namespace

RunReport run_fusion(const RunOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  VerifyConfig config{o.delta};
  config.validate();

  const Model model = Model::load(o.model_path);
  const auto query_rows = read_csv(o.queries_path, model.scale_bits());
  const auto pool = read_csv(o.publics_path, model.scale_bits());
  if (query_rows.empty()) throw DomainError("query file has no rows");

  std::vector<Sample> queries;
  queries.reserve(query_rows.size());
  for (const auto& row : query_rows) queries.push_back(row.sample);
  for (const auto& row : pool) {
    if (row.label < 0) throw FormatError("public sample without a label in " + o.publics_path.string());
  }

  RunReport report;
  report.plan = planner::search_params(queries.size(), o.lambda, o.beta_pub);
  report.backend = o.backend;
  report.adversary = o.adversary;
  report.seed = o.seed;
  report.delta = o.delta;
  report.timestamp = o.timestamp;
  const BatchShape shape = report.plan.shape();

  if (pool.size() < shape.T) {
    throw PreconditionError("plan needs T=" + std::to_string(shape.T) + " public samples but " +
                            o.publics_path.string() + " has " + std::to_string(pool.size()));
  }
  const Rng root(o.seed);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  Rng pick = root.derive("publics");
  shuffle(order.begin(), order.end(), pick);
  std::vector<LabeledSample> publics;
  publics.reserve(shape.T);
  for (std::uint64_t k = 0; k < shape.T; ++k) publics.push_back(pool[order[k]]);

  const MixedDataset mixed = prepare_mixed(queries, publics, shape.B, root.derive("mix")());

  auto behavior = adversary::make_behavior(o.adversary, model, root.derive("adversary")());
  auto backend = make_backend(o, *behavior);
  BatchOutput out = backend->run_batch(mixed.samples, shape);
  if (out.labels.size() != mixed.samples.size()) {
    throw ProtocolError("backend returned " + std::to_string(out.labels.size()) + " labels for " +
                        std::to_string(mixed.samples.size()) + " samples");
  }

  const VerificationReport verification = verify_results(unmix(out.labels, mixed.provenance), config);
  report.accepted = verification.accepted();
  report.abort_reason = verification.abort_reason();
  report.accuracy = verification.accuracy();
  report.consistency = verification.consistency();
  if (report.accepted) report.labels = verification.released_labels();
  report.channel_stats = out.stats;
  report.amortized_bytes_per_query =
      static_cast<double>(out.stats.client_server_bytes()) / static_cast<double>(shape.R);
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace fusion
