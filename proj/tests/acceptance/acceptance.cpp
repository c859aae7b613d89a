// Acceptance suite: one pass/fail line per criterion.
//   fusion_acceptance              run all criteria
//   fusion_acceptance --criterion N  run one (exit status 0 on pass)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "../common/test_models.hpp"
#include "fusion/adversary.hpp"
#include "fusion/backend.hpp"
#include "fusion/combinatorics.hpp"
#include "fusion/datamix.hpp"
#include "fusion/pipeline.hpp"
#include "fusion/planner.hpp"
#include "fusion/rng.hpp"
#include "fusion/verify.hpp"

namespace {

using namespace fusion;
namespace comb = fusion::combinatorics;
namespace fs = std::filesystem;

const std::string kData = FUSION_TEST_DATA_DIR;
const std::string kCli = FUSION_CLI_PATH;

struct Result {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

bool within_lambda_exact(std::uint64_t R, std::uint64_t B, std::uint64_t T, int lambda) {
  return (comb::BigInt(R) << lambda) <= comb::binomial(R * B + T, B);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1. Published parameter table, regenerated and confirmed with exact integers.
Result table_reproduction() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = planner::parameter_table(40, 100, 3, 8);
  const std::uint64_t B[] = {8, 7, 6, 5, 4, 3};
  const int e[] = {3, 5, 7, 9, 13, 19};
  r.check(rows.size() == 6, "six rows");
  for (std::size_t k = 0; k < std::min<std::size_t>(rows.size(), 6); ++k) {
    const auto& row = rows[k];
    const std::uint64_t R = std::uint64_t{1} << e[k];
    r.check(row.B == B[k] && row.R == R && row.T == 100,
            fmt::format("row B={} -> R=2^{}, T=100", B[k], e[k]));
    const auto exact = planner::search_params(R, 40, 100, {true});
    r.check(exact.B == B[k] && exact.T == 100 && exact.boundary_exact,
            fmt::format("exact search at R=2^{} selects B={}", e[k], B[k]));
  }
  const double secs = seconds_since(t0);
  r.check(secs < 10.0, "runtime < 10 s");
  r.note(fmt::format("rows B=8..3 -> R=2^3,2^5,2^7,2^9,2^13,2^19, T=100; {:.2f} s", secs));

  // Same table through the command-line tool and its --check option.
  r.check(run_cli("table --lambda 40 --beta 100 --b-range 3..8 --check " + kData + "/paper_table.txt >/dev/null 2>&1") ==
              0,
          "cli table --check against the published rows");
  return r;
}

// 2. Each row is feasible exactly, and halving R at the same (B, T) is not.
Result boundary_soundness() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t B[] = {8, 7, 6, 5, 4, 3};
  const int e[] = {3, 5, 7, 9, 13, 19};
  for (int k = 0; k < 6; ++k) {
    const std::uint64_t R = std::uint64_t{1} << e[k];
    r.check(within_lambda_exact(R, B[k], 100, 40), fmt::format("R=2^{} B={} within 2^-40", e[k], B[k]));
    r.check(!within_lambda_exact(R / 2, B[k], 100, 40), fmt::format("R=2^{} B={} violates 2^-40", e[k] - 1, B[k]));
  }
  const double v = comb::claim1_bound(256, 5, 100, comb::Precision::Exact).value();
  r.check(std::abs(v - 6.1826728529777226e-12) < 1e-20, "R=2^8, B=5, T=100 bound value");
  r.check(v > std::ldexp(1.0, -40), "R=2^8, B=5, T=100 exceeds 2^-40");
  const double secs = seconds_since(t0);
  r.check(secs < 30.0, "runtime < 30 s");
  r.note(fmt::format("R=2^8,B=5,T=100 bound {:.4e} > 2^-40; {:.2f} s", v, secs));
  return r;
}

// 3. Claim 1 and the intermediate inequality over the whole grid, exact arithmetic.
Result claim1_grid() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cex = comb::claim1_verify_grid(20, 6, 12);
  std::size_t claim = 0, inter = 0;
  std::set<std::uint64_t> inter_B;
  for (const auto& c : cex) {
    if (c.kind == comb::InequalityKind::Claim1) {
      ++claim;
    } else {
      ++inter;
      inter_B.insert(c.B);
    }
  }
  r.check(claim == 0, fmt::format("Claim 1 bound: {} counterexamples", claim));
  std::string bs;
  for (auto b : inter_B) bs += (bs.empty() ? "" : ",") + std::to_string(b);
  r.check(inter == 0, fmt::format("intermediate inequality C(R,i)C(iB,iB-B) <= C(RB,iB-B): {} counterexamples "
                                  "(B in {{{}}}, e.g. R=3 B=2 i=2: 18 > 15)",
                                  inter, bs));
  const double secs = seconds_since(t0);
  r.check(secs < 60.0, "runtime < 60 s");
  r.note(fmt::format("Claim 1 bound holds on all cells; {:.2f} s", secs));
  return r;
}

// 4. Brute-force enumeration equals the closed form; Monte-Carlo within 3 sigma.
Result game_agreement() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  int cells = 0;
  for (std::uint64_t R = 1; R <= 4; ++R)
    for (std::uint64_t B = 1; B <= 3; ++B)
      for (std::uint64_t T = 0; T <= 4; ++T)
        for (std::uint64_t i = 1; i <= R; ++i, ++cells) {
          const auto e = adversary::enumerate_win_prob({R, B, T}, i);
          const auto c = comb::prob_success({R, B, T, i}, comb::Precision::Exact).rational();
          r.check(e == c, fmt::format("enumeration == closed form at R={} B={} T={} i={}", R, B, T, i));
        }
  const auto est = adversary::estimate_win_prob(adversary::TargetedCorruption{1}, {2, 2, 2}, 100000, 20240611);
  const double p = 2.0 / 15.0;
  const double sigma = std::sqrt(p * (1 - p) / 100000);
  r.check(std::abs(est.estimate - p) <= 3 * sigma, "Monte-Carlo within 3 sigma of 2/15");
  const double secs = seconds_since(t0);
  r.check(secs < 120.0, "runtime < 2 min");
  r.note(fmt::format("{} grid cells exact; MC {:.5f} vs {:.5f} (sigma {:.5f}); {:.2f} s", cells, est.estimate, p,
                     sigma, secs));
  return r;
}

// 5. Scaled plan with bound <= 2^-8: corrupt:i runs through the full protocol path.
Result detection_bound() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const BatchShape shape{4, 4, 8};
  const int lambda = 8;
  r.check(within_lambda_exact(shape.R, shape.B, shape.T, lambda), "R=4 B=4 T=8 bound <= 2^-8 (exact)");

  const Model model = Model::load(kData + "/model.json");
  const auto pool = read_csv(kData + "/publics.csv", model.scale_bits());
  const auto query_rows = read_csv(kData + "/queries.csv", model.scale_bits());
  std::vector<Sample> queries;
  for (std::uint64_t q = 0; q < shape.R; ++q) queries.push_back(query_rows[q].sample);
  std::vector<Label> truth;
  for (const auto& q : queries) truth.push_back(forward(model, q.features).label);
  const std::vector<LabeledSample> publics(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shape.T));

  const std::uint64_t runs = 10000;
  const double p0 = std::ldexp(1.0, -lambda);
  const double sigma = std::sqrt(p0 * (1 - p0) / static_cast<double>(runs));
  std::string summary;
  for (std::uint64_t i = 1; i <= shape.R; ++i) {
    std::uint64_t wins = 0, detected = 0;
    for (std::uint64_t run = 0; run < runs; ++run) {
      const std::uint64_t seed = Rng(77).derive("run", i * runs + run)();
      const auto mixed = prepare_mixed(queries, publics, shape.B, seed);
      adversary::CorruptingServer server(model, i, seed ^ 0x5eed);
      OracleBackend backend(server);
      const auto out = backend.run_batch(mixed.samples, shape);
      const auto report = verify_results(unmix(out.labels, mixed.provenance), VerifyConfig{0.95});
      if (!report.accepted()) {
        ++detected;
        continue;
      }
      const auto& labels = report.released_labels();
      bool wrong = false;
      for (std::uint64_t q = 0; q < shape.R; ++q) wrong |= labels[q] != truth[q];
      wins += wrong;
    }
    const double win_rate = static_cast<double>(wins) / runs;
    const double det_rate = static_cast<double>(detected) / runs;
    r.check(win_rate <= p0 + 3 * sigma, fmt::format("i={} win rate {:.5f} <= 2^-8 + 3 sigma", i, win_rate));
    r.check(det_rate >= 1 - p0 - 3 * sigma, fmt::format("i={} detection rate {:.5f} >= 1 - 2^-8 - 3 sigma", i, det_rate));
    summary += fmt::format(" i={}: win {:.4f} det {:.4f};", i, win_rate, det_rate);
  }
  const double secs = seconds_since(t0);
  r.check(secs < 300.0, "runtime < 5 min");
  r.note(fmt::format("bound {:.3e};{} {:.2f} s", comb::claim1_bound(4, 4, 8).value(), summary, secs));
  return r;
}

// 6. Two-party labels bit-identical to the oracle for a dense/ReLU/dense net.
Result backend_equivalence() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const Model model = testing::random_net(8, 16, 5, 2024);
  HonestServer server(model);
  OracleBackend oracle(server);
  const auto samples = testing::random_samples(1000, 8, 99, 3.0);
  const BatchShape shape{1000, 1, 0};
  const auto want = oracle.run_batch(samples, shape).labels;
  for (auto transport : {Transport::InProcess, Transport::TcpLoopback}) {
    TwoPartyBackend tp(&server, {transport, {}, {}, 5, {}});
    const auto got = tp.run_batch(samples, shape);
    std::size_t diff = 0;
    for (std::size_t k = 0; k < want.size(); ++k) diff += want[k] != got.labels[k];
    const char* name = transport == Transport::InProcess ? "in-process" : "tcp";
    r.check(diff == 0, fmt::format("{}: {} label mismatches", name, diff));
    r.check(got.stats.rounds == 1000 * 4, fmt::format("{}: rounds = N (L_dense + L_act + 1)", name));
  }
  std::vector<Label> distinct(want.begin(), want.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const double secs = seconds_since(t0);
  r.check(secs < 120.0, "runtime < 2 min");
  r.note(fmt::format("1000 inputs, {} distinct labels, in-process and tcp identical; {:.2f} s", distinct.size(), secs));
  return r;
}

// 7. Honest server with an accurate model: Accept, exit 0, deterministic.
Result honest_accept() {
  Result r;
  const Model model = Model::load(kData + "/model.json");
  const auto pool = read_csv(kData + "/publics.csv", model.scale_bits());
  std::size_t correct = 0;
  for (const auto& s : pool) correct += forward(model, s.sample.features).label == s.label;
  const double acc = static_cast<double>(correct) / pool.size();
  r.check(acc >= 0.95, fmt::format("model accuracy on the public pool {:.3f} >= 0.95", acc));

  const fs::path dir = fs::temp_directory_path() / fmt::format("fusion_accept_{}", ::getpid());
  fs::create_directories(dir);
  const std::string common = "run --model " + kData + "/model.json --queries " + kData + "/queries.csv --publics " +
                             kData + "/publics.csv --seed 11 --no-timestamp";
  for (const char* backend : {"oracle", "two-party"}) {
    const auto a = dir / fmt::format("{}_a.json", backend);
    const auto b = dir / fmt::format("{}_b.json", backend);
    const int ca = run_cli(common + " --backend " + backend + " --out " + a.string());
    const int cb = run_cli(common + " --backend " + backend + " --out " + b.string());
    r.check(ca == 0 && cb == 0, fmt::format("{}: exit code 0 (got {}, {})", backend, ca, cb));
    const std::string ja = slurp(a), jb = slurp(b);
    r.check(!ja.empty() && ja == jb, fmt::format("{}: byte-identical reports under a fixed seed", backend));
    r.check(ja.find("\"verdict\": \"Accept\"") != std::string::npos, fmt::format("{}: verdict Accept", backend));
  }
  fs::remove_all(dir);

  RunOptions o;
  o.model_path = kData + "/model.json";
  o.queries_path = kData + "/queries.csv";
  o.publics_path = kData + "/publics.csv";
  o.seed = 11;
  const auto rep = run_fusion(o);
  r.check(rep.accepted && rep.labels.size() == rep.plan.R, "library run releases R labels");
  r.note(fmt::format("plan R={} B={} T={}, eta={:.2f}, public-pool accuracy {:.3f}", rep.plan.R, rep.plan.B,
                     rep.plan.T, rep.accuracy.eta, acc));
  return r;
}

// 8. Measured client<->server bytes per query against the per-sample cost model.
Result amortized_cost() {
  Result r;
  const auto plan = planner::search_params(32, 40, 100);
  r.check(plan.B == 7 && plan.T == 100, "search at R=2^5 gives B=7, T=100");
  const BatchShape shape{32, 7, 100};

  const Model model = testing::random_net(8, 16, 5, 7);
  const auto q = testing::random_samples(32, 8, 1);
  auto pub_samples = testing::random_samples(100, 8, 2);
  std::vector<LabeledSample> publics;
  for (auto& s : pub_samples) publics.push_back({s, forward(model, s.features).label});
  const auto mixed = prepare_mixed(q, publics, shape.B, 3);

  HonestServer server(model);
  TwoPartyBackend tp(&server, {Transport::InProcess, {}, {}, 4, {}});
  const auto out = tp.run_batch(mixed.samples, shape);
  const double measured = static_cast<double>(out.stats.client_server_bytes()) / shape.R;
  const double per_sample = static_cast<double>(per_sample_client_server_bytes(Architecture::of(model)));
  const double predicted = per_sample * static_cast<double>(shape.N()) / shape.R;
  const double rel = std::abs(measured - predicted) / predicted;
  r.check(rel <= 0.05, fmt::format("measured within 5% of model (off by {:.4f}%)", 100 * rel));
  r.check(verify_results(unmix(out.labels, mixed.provenance), {0.95}).accepted(), "honest batch accepted");
  r.note(fmt::format("{:.1f} B/query measured, {:.1f} predicted ({} B/sample x {}/{})", measured, predicted, per_sample,
                     shape.N(), shape.R));
  return r;
}

// 9. Reverse-sigmoid defense properties.
Result defense_properties() {
  Result r;
  Rng rng(9);
  bool identity = true, half = true, antisym = true, sums = true;
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> y(2 + k % 5);
    for (auto& v : y) v = rng.uniform01() + 1e-3;
    const double s = std::accumulate(y.begin(), y.end(), 0.0);
    for (auto& v : y) v /= s;
    const DefenseParams d{rng.uniform01() * 0.25, 0.5 + 2.5 * rng.uniform01()};
    identity &= reverse_sigmoid_defense(y, {0.0, d.gamma}) == y;
    std::vector<double> h(y.size());
    h[0] = 0.5;
    for (std::size_t j = 1; j < y.size(); ++j) h[j] = 0.5 * y[j] / (1 - y[0]);
    half &= reverse_sigmoid_perturbed(h, d)[0] == 0.5;
    const std::vector<double> bin{y[0], 1 - y[0]};
    const auto pb = reverse_sigmoid_perturbed(bin, d);
    antisym &= std::abs(pb[0] + pb[1] - 1.0) <= 1e-12;
    try {
      const auto out = reverse_sigmoid_defense(y, d);
      sums &= std::abs(std::accumulate(out.begin(), out.end(), 0.0) - 1.0) <= 1e-9;
    } catch (const DomainError&) {
    }
  }
  r.check(identity, "beta=0 is the identity (exact)");
  r.check(half, "0.5 is a fixed point of the perturbation (exact)");
  r.check(antisym, "binary pre-normalization sum preserved to 1e-12");
  r.check(sums, "output sums to 1 within 1e-9");
  const std::vector<double> y{0.7, 0.3};
  const auto out = reverse_sigmoid_defense(y, {0.3, 2.0});
  // High-precision oracle: s(2 * ln(7/3)) = 49/58.
  const long double r0 = 0.3L * (49.0L / 58.0L - 0.5L);
  const long double e0 = 0.7L - r0, e1 = 0.3L + r0;
  r.check(std::abs(out[0] - static_cast<double>(e0)) < 1e-3 && std::abs(out[1] - static_cast<double>(e1)) < 1e-3,
          "[0.7,0.3] worked example within 1e-3");
  r.note(fmt::format("[0.7,0.3] -> [{:.5f}, {:.5f}] (oracle [{:.5f}, {:.5f}])", out[0], out[1], (double)e0, (double)e1));
  return r;
}

// 10. Variance procedure: degenerate models give zero; a seeded pool matches recomputation.
Result variance_sanity() {
  Result r;
  const fs::path dir = fs::temp_directory_path() / fmt::format("fusion_var_{}", ::getpid());
  fs::create_directories(dir);

  // Constant model: zero weights, bias favours class 0; pool labelled 0 throughout.
  {
    std::ofstream m(dir / "constant.json");
    m << R"({"scale_bits": 12, "layers": [{"type": "dense", "rows": 3, "cols": 4,
          "weights": [0,0,0,0, 0,0,0,0, 0,0,0,0], "bias": [1, 0, 0]}]})";
    std::ofstream p(dir / "zeros.csv");
    Rng rng(4);
    for (int k = 0; k < 400; ++k) p << fmt::format("0,{},{},{},{}\n", rng.uniform01(), rng.uniform01(), -rng.uniform01(), 1.5);
  }
  const auto run_variance = [&](const std::string& model, const std::string& pool) {
    const auto out = dir / "var.json";
    const int code = run_cli("variance --model " + model + " --pool " + pool +
                             " --T-list 10,20,25,50 --groups 6 --seed 3 > " + out.string());
    return std::make_pair(code, slurp(out));
  };
  for (const auto& [model, pool, name] :
       {std::tuple{kData + "/model.json", kData + "/publics.csv", "perfect"},
        std::tuple{(dir / "constant.json").string(), (dir / "zeros.csv").string(), "constant"}}) {
    const auto [code, text] = run_variance(model, pool);
    r.check(code == 0, fmt::format("{}: cli variance exit 0", name));
    std::size_t rows = 0, zero = 0;
    for (std::size_t at = text.find("\"variance\""); at != std::string::npos; at = text.find("\"variance\"", at + 1)) {
      ++rows;
      zero += text.compare(at, 15, "\"variance\": 0.0") == 0;
    }
    r.check(rows == 4 && zero == 4, fmt::format("{}: zero variance for every T ({} of {})", name, zero, rows));
  }
  fs::remove_all(dir);

  // Seeded synthetic pool: recompute the documented procedure in exact rationals.
  Rng gen(31);
  std::vector<std::uint8_t> correct(240);
  for (auto& c : correct) c = gen.uniform(10) < 7;
  const std::vector<std::uint64_t> Ts{5, 12, 30};
  const std::uint64_t groups = 8, seed = 17;
  const auto table = planner::variance_from_correctness(correct, Ts, groups, seed);
  const comb::Rational standard(std::count(correct.begin(), correct.end(), 1), correct.size());
  bool exact = true;
  for (std::size_t k = 0; k < Ts.size(); ++k) {
    std::vector<std::size_t> order(correct.size());
    std::iota(order.begin(), order.end(), 0);
    Rng sh = Rng(seed).derive("variance", Ts[k]);
    fusion::shuffle(order.begin(), order.end(), sh);
    comb::Rational sum = 0;
    for (std::uint64_t g = 0; g < groups; ++g) {
      std::uint64_t ok = 0;
      for (std::uint64_t j = 0; j < Ts[k]; ++j) ok += correct[order[g * Ts[k] + j]];
      const comb::Rational dev = comb::Rational(ok, Ts[k]) - standard;
      sum += dev * dev;
    }
    const double want = static_cast<double>(sum / groups);
    exact &= std::abs(table.rows[k].variance - want) <= 1e-15 * std::max(1.0, want);
  }
  r.check(exact, "seeded pool variance equals exact recomputation");
  r.check(std::abs(table.standard_accuracy - static_cast<double>(standard)) <= 1e-15, "standard accuracy");
  r.note(fmt::format("T=5,12,30 variances {:.6f}, {:.6f}, {:.6f}", table.rows[0].variance, table.rows[1].variance,
                     table.rows[2].variance));
  return r;
}

struct Criterion {
  const char* name;
  std::function<Result()> run;
};

const std::vector<Criterion> kCriteria = {
    {"parameter table reproduction", table_reproduction},
    {"boundary soundness", boundary_soundness},
    {"Claim 1 exhaustive verification", claim1_grid},
    {"game oracle agreement", game_agreement},
    {"detection bound", detection_bound},
    {"backend oracle equivalence", backend_equivalence},
    {"end-to-end honest accept", honest_accept},
    {"amortized cost accounting", amortized_cost},
    {"defense properties", defense_properties},
    {"variance procedure sanity", variance_sanity},
};

bool run_one(std::size_t n) {
  const auto& c = kCriteria[n - 1];
  Result r;
  try {
    r = c.run();
  } catch (const std::exception& e) {
    r.pass = false;
    r.notes.push_back(std::string("exception: ") + e.what());
  }
  std::cout << fmt::format("criterion {:2}: {} - {}\n", n, r.pass ? "PASS" : "FAIL", c.name);
  for (const auto& s : r.notes) std::cout << "    " << s << "\n";
  std::cout.flush();
  return r.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> which;
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--criterion" && k + 1 < argc) {
      which.push_back(std::stoul(argv[++k]));
    } else {
      std::cerr << "usage: fusion_acceptance [--criterion N]...\n";
      return 64;
    }
  }
  if (which.empty()) {
    for (std::size_t n = 1; n <= kCriteria.size(); ++n) which.push_back(n);
  }
  bool all = true;
  for (auto n : which) {
    if (n < 1 || n > kCriteria.size()) {
      std::cerr << "no criterion " << n << "\n";
      return 64;
    }
    all &= run_one(n);
  }
  return all ? 0 : 1;
}
