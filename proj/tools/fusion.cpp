// fusion: command-line front end for planning, simulation and batched inference runs.

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "fusion/adversary.hpp"
#include "fusion/combinatorics.hpp"
#include "fusion/error.hpp"
#include "fusion/pipeline.hpp"
#include "fusion/planner.hpp"
#include "json.hpp"

namespace {

using nlohmann::ordered_json;
namespace comb = fusion::combinatorics;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitCheckFailed = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("fusion");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FUSION_LOG")) {
    const std::string v = env;
    if (v == "error" || v == "warn" || v == "info" || v == "debug") {
      spdlog::set_level(spdlog::level::from_str(v));
    } else {
      spdlog::warn("ignoring FUSION_LOG={} (expected error, warn, info or debug)", v);
    }
  }
}

std::string power_of_two_text(std::uint64_t v) {
  if (v != 0 && (v & (v - 1)) == 0) return "2^" + std::to_string(std::countr_zero(v));
  return std::to_string(v);
}

std::pair<std::uint64_t, std::uint64_t> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw fusion::DomainError("range must look like LO..HI, got '" + text + "'");
  const std::uint64_t lo = std::stoull(text.substr(0, dots));
  const std::uint64_t hi = std::stoull(text.substr(dots + 2));
  if (lo > hi) throw fusion::DomainError("empty range '" + text + "'");
  return {lo, hi};
}

std::vector<std::uint64_t> parse_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  if (out.empty()) throw fusion::DomainError("empty list '" + text + "'");
  return out;
}

std::optional<std::uint64_t> parse_table_R(const std::string& cell) {
  if (cell == "-" || cell == "none") return std::nullopt;
  if (cell.rfind("2^", 0) == 0) return std::uint64_t{1} << std::stoull(cell.substr(2));
  return std::stoull(cell);
}

// Expected-rows file: one "B R T" row per line (commas allowed, '#' starts a comment).
std::vector<fusion::planner::TableRow> read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fusion::FormatError("cannot open " + path);
  std::vector<fusion::planner::TableRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (auto& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream ls(line);
    std::string b, r, t;
    if (!(ls >> b)) continue;
    if (!(ls >> r >> t)) throw fusion::FormatError(path + ":" + std::to_string(lineno) + ": expected B R T");
    if (b == "B") continue;
    try {
      rows.push_back({std::stoull(b), parse_table_R(r), std::stoull(t)});
    } catch (const std::logic_error&) {
      throw fusion::FormatError(path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

int cmd_plan(std::uint64_t R, int lambda, std::uint64_t beta, bool exact, bool json) {
  const auto plan = fusion::planner::search_params(R, lambda, beta, {exact});
  const auto cost = fusion::planner::amortized_cost(plan.R, plan.B, plan.T);
  const auto bound = comb::claim1_bound(plan.R, plan.B, plan.T);
  if (json) {
    ordered_json j{{"R", plan.R},           {"B", plan.B},
                   {"T", plan.T},           {"lambda", plan.lambda},
                   {"beta_pub", plan.beta_pub}, {"bound", bound.value()},
                   {"bound_log2", plan.bound_log2}, {"boundary_exact", plan.boundary_exact},
                   {"amortized_cost", cost.amortized_cost}, {"total_samples", cost.total_samples}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  std::cout << fmt::format("R={} B={} T={}\n", plan.R, plan.B, plan.T);
  std::cout << fmt::format("bound R/C(RB+T,B) = {:.6e} (log2 {:.4f}) <= 2^-{}\n", bound.value(), plan.bound_log2,
                           lambda);
  std::cout << fmt::format("amortized cost (RB+T)/R = {:.6f} over {} samples\n", cost.amortized_cost,
                           cost.total_samples);
  std::cout << fmt::format("boundary decided exactly: {}\n", plan.boundary_exact ? "yes" : "no");
  return kExitOk;
}

int cmd_table(int lambda, std::uint64_t beta, const std::string& range, const std::string& check, bool json) {
  const auto [lo, hi] = parse_range(range);
  const auto rows = fusion::planner::parameter_table(lambda, beta, lo, hi);
  if (json) {
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
      j.push_back({{"B", r.B}, {"R", r.R ? ordered_json(*r.R) : ordered_json(nullptr)}, {"T", r.T}});
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << fmt::format("{:>3} {:>8} {:>6}\n", "B", "R", "T");
    for (const auto& r : rows) {
      std::cout << fmt::format("{:>3} {:>8} {:>6}\n", r.B, r.R ? power_of_two_text(*r.R) : "-", r.T);
    }
  }
  if (check.empty()) return kExitOk;

  const auto expected = read_table_file(check);
  bool ok = expected.size() == rows.size();
  if (!ok) {
    std::cerr << fmt::format("check: expected {} rows, generated {}\n", expected.size(), rows.size());
  }
  for (std::size_t k = 0; k < std::min(expected.size(), rows.size()); ++k) {
    const auto& e = expected[k];
    const auto& g = rows[k];
    if (e.B != g.B || e.R != g.R || e.T != g.T) {
      ok = false;
      std::cerr << fmt::format("check: row {} differs: expected B={} R={} T={}, got B={} R={} T={}\n", k, e.B,
                               e.R ? power_of_two_text(*e.R) : "-", e.T, g.B, g.R ? power_of_two_text(*g.R) : "-",
                               g.T);
    }
  }
  std::cerr << (ok ? "check: all rows match\n" : "check: FAILED\n");
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_game(std::uint64_t R, std::uint64_t B, std::uint64_t T, std::uint64_t i, std::uint64_t trials,
             std::uint64_t seed, const std::string& strategy_text, unsigned threads) {
  namespace adv = fusion::adversary;
  const adv::Strategy strategy = adv::parse_strategy(strategy_text, i);
  const fusion::BatchShape shape{R, B, T};
  const auto est = adv::estimate_win_prob(strategy, shape, trials, seed, threads);

  ordered_json j;
  j["estimate"] = est.estimate;
  j["std_error"] = est.std_error;
  if (strategy_text == "random") {
    const auto p = comb::prob_success({R, B, T, i}, comb::Precision::Exact);
    j["closed_form"] = p.value();
    j["closed_form_exact"] = p.rational().str();
  } else {
    j["closed_form"] = nullptr;
  }
  j["trials"] = trials;
  j["seed"] = seed;
  j["wins"] = est.wins;
  j["detections"] = est.detections;
  j["R"] = R;
  j["B"] = B;
  j["T"] = T;
  j["i"] = i;
  j["strategy"] = strategy_text;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_claim1(std::uint64_t max_R, std::uint64_t max_B, std::uint64_t max_T, std::size_t limit) {
  const auto cex = comb::claim1_verify_grid(max_R, max_B, max_T);
  std::size_t claim = 0, inter = 0;
  for (const auto& c : cex) (c.kind == comb::InequalityKind::Claim1 ? claim : inter)++;
  std::cout << fmt::format("grid: R<={} B<={} B<=T<={} all i, exact arithmetic\n", max_R, max_B, max_T);
  std::cout << fmt::format("claim 1  R/C(RB+T,B) bound:            {} ({} counterexamples)\n",
                           claim == 0 ? "PASS" : "FAIL", claim);
  std::cout << fmt::format("intermediate C(R,i)C(iB,iB-B)<=C(RB,iB-B): {} ({} counterexamples)\n",
                           inter == 0 ? "PASS" : "FAIL", inter);
  for (std::size_t k = 0; k < std::min(limit, cex.size()); ++k) {
    const auto& c = cex[k];
    if (c.kind == comb::InequalityKind::Claim1) {
      std::cout << fmt::format("  claim1       R={} B={} T={} i={}\n", c.R, c.B, *c.T, c.i);
    } else {
      std::cout << fmt::format("  intermediate R={} B={} i={}\n", c.R, c.B, c.i);
    }
  }
  if (cex.size() > limit) std::cout << fmt::format("  ... {} more\n", cex.size() - limit);
  return cex.empty() ? kExitOk : kExitCheckFailed;
}

int cmd_variance(const std::string& model_path, const std::string& pool_path, const std::string& t_list,
                 std::uint64_t groups, std::uint64_t seed) {
  const auto model = fusion::Model::load(model_path);
  const auto pool = fusion::read_csv(pool_path, model.scale_bits());
  const auto Ts = parse_list(t_list);
  const auto table = fusion::planner::estimate_T_variance(model, pool, Ts, groups, seed);
  ordered_json j;
  j["standard_accuracy"] = table.standard_accuracy;
  j["groups"] = groups;
  j["seed"] = seed;
  j["rows"] = ordered_json::array();
  for (const auto& r : table.rows) {
    j["rows"].push_back({{"T", r.T}, {"variance", r.variance}, {"group_accuracy", r.group_accuracy}});
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_serve_dealer(const std::string& listen, std::uint64_t seed) {
  fusion::TcpListener listener(fusion::parse_host_port(listen));
  std::cout << "dealer listening on port " << listener.port() << std::endl;
  auto a = listener.accept();
  auto b = listener.accept();
  fusion::run_dealer(*a, *b, seed);
  spdlog::info("dealer session finished");
  return kExitOk;
}

int cmd_serve_server(const std::string& listen, const std::string& dealer, const std::string& model_path,
                     const std::string& adversary, std::uint64_t seed) {
  const auto model = fusion::Model::load(model_path);
  auto behavior = fusion::adversary::make_behavior(adversary, model, seed);
  auto to_dealer = fusion::tcp_connect(fusion::parse_host_port(dealer));
  fusion::TcpListener listener(fusion::parse_host_port(listen));
  std::cout << "server listening on port " << listener.port() << std::endl;
  auto to_client = listener.accept();
  fusion::run_server(*to_client, *to_dealer, *behavior, seed);
  spdlog::info("server session finished");
  return kExitOk;
}

int cmd_run(fusion::RunOptions opts, const std::string& dealer, const std::string& server, const std::string& out) {
  if (!dealer.empty()) opts.dealer_addr = fusion::parse_host_port(dealer);
  if (!server.empty()) opts.server_addr = fusion::parse_host_port(server);
  const auto report = fusion::run_fusion(opts);
  const std::string text = report.to_json();
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw fusion::FormatError("cannot write " + out);
    f << text;
  }
  spdlog::info("plan R={} B={} T={}; verdict {}", report.plan.R, report.plan.B, report.plan.T,
               report.accepted ? "Accept" : "Abort");
  if (!report.accepted) {
    std::cerr << "verdict: Abort (" << fusion::to_string(*report.abort_reason) << ")\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

// Splices keys of a JSON config file in front of the run subcommand's own flags, so that
// explicit flags (parsed later, last value wins) override the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  const auto run_it = std::find(args.begin(), args.end(), "run");
  if (run_it == args.end()) return args;
  std::string path;
  for (auto it = run_it + 1; it != args.end(); ++it) {
    if (*it == "--config" && it + 1 != args.end()) {
      path = *(it + 1);
      args.erase(it, it + 2);
      break;
    }
    if (it->rfind("--config=", 0) == 0) {
      path = it->substr(9);
      args.erase(it);
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw fusion::FormatError("cannot open config " + path);
  ordered_json cfg;
  try {
    cfg = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw fusion::FormatError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw fusion::FormatError("config " + path + " must hold a JSON object");
  std::vector<std::string> inject;
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) inject.push_back("--" + key);
    } else {
      inject.push_back("--" + key);
      inject.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  const auto pos = std::find(args.begin(), args.end(), "run") + 1;
  args.insert(pos, inject.begin(), inject.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Batched inference with mix-and-check verification", "fusion"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  int lambda = fusion::planner::kDefaultLambda;
  std::uint64_t beta = fusion::planner::kDefaultBetaPub;
  std::uint64_t seed = 0;
  bool json = false;

  auto* plan = app.add_subcommand("plan", "Search (B, T) for R queries");
  std::uint64_t plan_R = 0;
  bool exact = false;
  plan->add_option("--queries", plan_R, "Number of query samples R")->required();
  plan->add_option("--lambda", lambda, "Statistical security parameter");
  plan->add_option("--beta", beta, "Lower bound on public samples");
  plan->add_flag("--exact", exact, "Decide every feasibility test with exact integers");
  plan->add_flag("--json", json, "Print JSON");

  auto* table = app.add_subcommand("table", "Minimal power-of-two R for each B");
  std::string b_range = "3..8", check;
  table->add_option("--lambda", lambda, "Statistical security parameter");
  table->add_option("--beta", beta, "Lower bound on public samples");
  table->add_option("--b-range", b_range, "Range of B, LO..HI");
  table->add_option("--check", check, "Expected rows file; exit 2 on any difference");
  table->add_flag("--json", json, "Print JSON");

  auto* run = app.add_subcommand("run", "Plan, mix, infer and verify one batch");
  fusion::RunOptions ro;
  std::string model_path, queries_path, publics_path, dealer_addr, server_addr, out;
  bool no_timestamp = false;
  run->add_option("--model", model_path, "Model JSON")->required();
  run->add_option("--queries", queries_path, "Query CSV")->required();
  run->add_option("--publics", publics_path, "Public sample pool CSV")->required();
  run->add_option("--lambda", ro.lambda, "Statistical security parameter");
  run->add_option("--beta", ro.beta_pub, "Lower bound on public samples");
  run->add_option("--delta", ro.delta, "Accuracy threshold");
  run->add_option("--backend", ro.backend, "oracle, two-party or two-party:tcp");
  run->add_option("--adversary", ro.adversary, "honest, lowq:PATH, corrupt:I or noise:P");
  run->add_option("--seed", ro.seed, "Seed");
  run->add_option("--out", out, "Write the JSON report here instead of stdout");
  run->add_option("--dealer-addr", dealer_addr, "host:port of a running dealer (two-party:tcp)");
  run->add_option("--server-addr", server_addr, "host:port of a running server (two-party:tcp)");
  run->add_flag("--no-timestamp", no_timestamp, "Omit wall time and timestamp from the report");
  run->add_option("--config", "JSON file with defaults for these flags");

  auto* game = app.add_subcommand("game", "Monte-Carlo estimate of the cheating game");
  std::uint64_t gR = 2, gB = 2, gT = 2, gi = 1, trials = 100000;
  std::string strategy = "random";
  unsigned threads = 0;
  game->add_option("--R", gR, "Query samples")->required();
  game->add_option("--B", gB, "Copies per query")->required();
  game->add_option("--T", gT, "Public samples")->required();
  game->add_option("--i", gi, "Corrupted queries");
  game->add_option("--trials", trials, "Number of plays");
  game->add_option("--seed", seed, "Seed");
  game->add_option("--strategy", strategy, "random, oracle, honest, noise:P or lowq:ERROR_RATE");
  game->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* claim1 = app.add_subcommand("claim1", "Exhaustive exact check of the Claim 1 bound");
  std::uint64_t max_R = 20, max_B = 6, max_T = 12;
  std::size_t limit = 20;
  claim1->add_option("--max-R", max_R, "Largest R");
  claim1->add_option("--max-B", max_B, "Largest B");
  claim1->add_option("--max-T", max_T, "Largest T");
  claim1->add_option("--limit", limit, "Counterexamples to print");

  auto* variance = app.add_subcommand("variance", "Spread of public-sample accuracy per T");
  std::string pool_path, t_list;
  std::uint64_t groups = 10;
  variance->add_option("--model", model_path, "Model JSON")->required();
  variance->add_option("--pool", pool_path, "Labeled sample pool CSV")->required();
  variance->add_option("--T-list", t_list, "Comma-separated T values")->required();
  variance->add_option("--groups", groups, "Disjoint subsets per T");
  variance->add_option("--seed", seed, "Seed");

  auto* dealer = app.add_subcommand("serve-dealer", "Run the dealer endpoint for one session");
  std::string listen = "127.0.0.1:0";
  dealer->add_option("--listen", listen, "host:port to listen on");
  dealer->add_option("--seed", seed, "Seed");

  auto* server = app.add_subcommand("serve-server", "Run the server endpoint for one session");
  std::string adversary = "honest";
  server->add_option("--listen", listen, "host:port to listen on");
  server->add_option("--dealer-addr", dealer_addr, "host:port of the dealer")->required();
  server->add_option("--model", model_path, "Model JSON")->required();
  server->add_option("--adversary", adversary, "honest, lowq:PATH, corrupt:I or noise:P");
  server->add_option("--seed", seed, "Seed");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }

  try {
    if (*plan) return cmd_plan(plan_R, lambda, beta, exact, json);
    if (*table) return cmd_table(lambda, beta, b_range, check, json);
    if (*run) {
      ro.model_path = model_path;
      ro.queries_path = queries_path;
      ro.publics_path = publics_path;
      ro.timestamp = !no_timestamp;
      return cmd_run(ro, dealer_addr, server_addr, out);
    }
    if (*game) return cmd_game(gR, gB, gT, gi, trials, seed, strategy, threads);
    if (*claim1) return cmd_claim1(max_R, max_B, max_T, limit);
    if (*variance) return cmd_variance(model_path, pool_path, t_list, groups, seed);
    if (*dealer) return cmd_serve_dealer(listen, seed);
    if (*server) return cmd_serve_server(listen, dealer_addr, model_path, adversary, seed);
  } catch (const fusion::InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
