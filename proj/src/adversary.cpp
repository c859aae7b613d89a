#include "fusion/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "fusion/error.hpp"
#include "fusion/rng.hpp"

namespace fusion::adversary {
namespace {

void check_shape(const BatchShape& shape) {
  if (shape.R < 1 || shape.B < 1) throw PreconditionError("game needs R >= 1 and B >= 1");
}

void check_i(std::uint64_t i, std::uint64_t R) {
  if (i < 1 || i > R) {
    throw PreconditionError("corrupted query count i=" + std::to_string(i) + " must lie in [1, R=" +
                            std::to_string(R) + "]");
  }
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError(std::string(what) + " must lie in [0, 1]");
}

// k distinct positions out of [0, n), uniformly.
std::vector<std::uint64_t> sample_positions(std::uint64_t n, std::uint64_t k, Rng& rng) {
  std::vector<std::uint64_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::uint64_t j = 0; j < k; ++j) std::swap(all[j], all[j + rng.uniform(n - j)]);
  all.resize(k);
  return all;
}

}  // namespace

GameOutcome run_game(const Strategy& strategy, const BatchShape& shape, std::uint64_t seed) {
  check_shape(shape);
  Rng rng(seed);
  Rng labels_rng = rng.derive("labels");

  std::vector<Sample> queries(shape.R);
  std::vector<Label> truth(shape.R);
  for (std::uint64_t q = 0; q < shape.R; ++q) {
    queries[q].id = q;
    truth[q] = static_cast<Label>(labels_rng.uniform(kGameClasses));
  }
  std::vector<LabeledSample> publics(shape.T);
  for (std::uint64_t j = 0; j < shape.T; ++j) {
    publics[j].sample.id = shape.R + j;
    publics[j].label = static_cast<Label>(labels_rng.uniform(kGameClasses));
  }
  const MixedDataset mixed = prepare_mixed(queries, publics, shape.B, rng.derive("mix")());
  const ProvenanceMap& prov = mixed.provenance;
  const std::uint64_t N = shape.N();

  std::vector<bool> corrupted(N, false);
  Rng srng = rng.derive("strategy");
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Honest>) {
        } else if constexpr (std::is_same_v<S, LowQuality>) {
          check_probability(s.error_rate, "error rate");
          for (std::uint64_t q = 0; q < shape.R; ++q) {
            if (srng.uniform01() < s.error_rate) {
              for (auto pos : prov.positions_of_query(q)) corrupted[pos] = true;
            }
          }
          for (std::uint64_t j = 0; j < shape.T; ++j) {
            if (srng.uniform01() < s.error_rate) corrupted[prov.position_of_public(j)] = true;
          }
        } else if constexpr (std::is_same_v<S, TargetedCorruption>) {
          check_i(s.i, shape.R);
          if (s.selection == Selection::RandomPositions) {
            for (auto pos : sample_positions(N, s.i * shape.B, srng)) corrupted[pos] = true;
          } else {
            for (auto q : sample_positions(shape.R, s.i, srng)) {
              for (auto pos : prov.positions_of_query(q)) corrupted[pos] = true;
            }
          }
        } else {
          check_probability(s.p, "flip probability");
          for (std::uint64_t pos = 0; pos < N; ++pos) corrupted[pos] = srng.uniform01() < s.p;
        }
      },
      strategy);

  std::vector<Label> results(N);
  for (std::uint64_t pos = 0; pos < N; ++pos) {
    const auto& tag = prov.tag(pos);
    const Label correct = std::holds_alternative<QueryCopy>(tag) ? truth[std::get<QueryCopy>(tag).query_index]
                                                                 : std::get<PublicTag>(tag).expected_label;
    results[pos] = corrupted[pos] ? (correct + 1) % kGameClasses : correct;
  }
  const UnmixedResults unmixed = unmix(results, prov);

  const AccuracyCheck accuracy = shape.T == 0 ? AccuracyCheck{0, 0, 1.0, true} : check_accuracy(unmixed.publics, 1.0);
  const VerificationReport report = verdict(accuracy, check_consistency(unmixed.groups), unmixed.groups);

  GameOutcome out;
  out.detected_by = report.abort_reason();
  for (std::uint64_t pos = 0; pos < N; ++pos) {
    if (corrupted[pos]) out.corrupted_positions.push_back(pos);
  }
  if (report.accepted()) {
    for (std::uint64_t q = 0; q < shape.R && !out.server_wins; ++q) {
      const auto group = prov.positions_of_query(q);
      out.server_wins = std::all_of(group.begin(), group.end(), [&](auto pos) { return corrupted[pos]; });
    }
  }
  return out;
}

WinEstimate estimate_win_prob(const Strategy& strategy, const BatchShape& shape, std::uint64_t trials,
                              std::uint64_t seed, unsigned threads) {
  if (trials < 1) throw PreconditionError("trials must be at least 1");
  check_shape(shape);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, trials));

  const Rng root(seed);
  std::vector<std::uint64_t> wins(threads, 0), detections(threads, 0);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::uint64_t t = w; t < trials; t += threads) {
          const GameOutcome o = run_game(strategy, shape, root.derive("trial", t)());
          wins[w] += o.server_wins;
          detections[w] += o.detected_by.has_value();
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  WinEstimate est;
  est.trials = trials;
  est.wins = std::accumulate(wins.begin(), wins.end(), std::uint64_t{0});
  est.detections = std::accumulate(detections.begin(), detections.end(), std::uint64_t{0});
  est.estimate = static_cast<double>(est.wins) / static_cast<double>(trials);
  est.std_error = std::sqrt(est.estimate * (1.0 - est.estimate) / static_cast<double>(trials));
  return est;
}

Strategy parse_strategy(const std::string& text, std::uint64_t i) {
  const auto number = [&](std::size_t prefix) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text.substr(prefix), &used);
      if (used == text.size() - prefix) return v;
    } catch (const std::exception&) {
    }
    throw DomainError("bad number in strategy '" + text + "'");
  };
  if (text == "random") return TargetedCorruption{i, Selection::RandomPositions};
  if (text == "oracle") return TargetedCorruption{i, Selection::OracleGrouped};
  if (text == "honest") return Honest{};
  if (text.rfind("noise:", 0) == 0) return IndependentNoise{number(6)};
  if (text.rfind("lowq:", 0) == 0) return LowQuality{number(5)};
  throw DomainError("unknown strategy '" + text + "'; expected random, oracle, honest, noise:P or lowq:ERROR_RATE");
}

combinatorics::Rational enumerate_win_prob(const BatchShape& shape, std::uint64_t i, std::uint64_t budget) {
  check_shape(shape);
  check_i(i, shape.R);
  const std::uint64_t N = shape.N();
  const std::uint64_t k = i * shape.B;
  const combinatorics::BigInt total = combinatorics::binomial(N, k);
  if (total > budget) {
    throw PreconditionError("enumeration needs C(" + std::to_string(N) + "," + std::to_string(k) + ") = " +
                            total.str() + " subsets, over the budget of " + std::to_string(budget) +
                            "; use the Monte-Carlo estimator instead");
  }

  // Canonical layout: copy c of query q at q*B + c, publics after; the position of every
  // sample is uniform, so a fixed layout enumerates the same distribution.
  std::vector<std::int64_t> group(N, -1);
  for (std::uint64_t pos = 0; pos < shape.R * shape.B; ++pos) group[pos] = static_cast<std::int64_t>(pos / shape.B);

  std::vector<std::uint64_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::uint64_t> hits(shape.R);
  std::uint64_t wins = 0;
  for (;;) {
    std::fill(hits.begin(), hits.end(), 0);
    bool public_hit = false;
    for (auto pos : idx) {
      if (group[pos] < 0) {
        public_hit = true;
        break;
      }
      ++hits[static_cast<std::size_t>(group[pos])];
    }
    if (!public_hit &&
        std::all_of(hits.begin(), hits.end(), [&](auto h) { return h == 0 || h == shape.B; })) {
      ++wins;
    }
    // next combination in lexicographic order
    std::uint64_t j = k;
    while (j > 0 && idx[j - 1] == N - k + (j - 1)) --j;
    if (j == 0) break;
    ++idx[j - 1];
    for (std::uint64_t m = j; m < k; ++m) idx[m] = idx[m - 1] + 1;
  }
  return combinatorics::Rational(combinatorics::BigInt(wins), total);
}

CorruptingServer::CorruptingServer(const Model& model, std::uint64_t i, std::uint64_t seed)
    : model_(&model), i_(i), seed_(seed) {
  if (i < 1) throw PreconditionError("corrupt:I needs I >= 1");
}

void CorruptingServer::begin_batch(const BatchShape& shape) {
  check_i(i_, shape.R);
  Rng rng = Rng(seed_).derive("corrupt");
  corrupted_.assign(shape.N(), false);
  for (auto pos : sample_positions(shape.N(), i_ * shape.B, rng)) corrupted_[pos] = true;
}

bool CorruptingServer::corrupts(std::size_t position) const {
  return position < corrupted_.size() && corrupted_[position];
}

NoisyServer::NoisyServer(const Model& model, double p, std::uint64_t seed) : model_(&model), p_(p), seed_(seed) {
  check_probability(p, "flip probability");
}

void NoisyServer::begin_batch(const BatchShape& shape) {
  Rng rng = Rng(seed_).derive("noise");
  corrupted_.assign(shape.N(), false);
  for (std::size_t pos = 0; pos < corrupted_.size(); ++pos) corrupted_[pos] = rng.uniform01() < p_;
}

bool NoisyServer::corrupts(std::size_t position) const {
  return position < corrupted_.size() && corrupted_[position];
}

std::unique_ptr<ServerBehavior> make_behavior(const std::string& spec, const Model& model, std::uint64_t seed) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  const auto need_arg = [&] {
    if (arg.empty()) throw DomainError("adversary '" + kind + "' needs an argument, e.g. " + kind + ":VALUE");
  };
  const auto number = [&](auto parse, const char* what) {
    need_arg();
    std::size_t used = 0;
    try {
      const auto v = parse(arg, &used);
      if (used == arg.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw DomainError("adversary '" + kind + "' needs " + what + ", got '" + arg + "'");
  };
  if (kind == "honest" && colon == std::string::npos) return std::make_unique<HonestServer>(model);
  if (kind == "lowq") {
    need_arg();
    return std::make_unique<SubstituteModelServer>(Model::load(arg));
  }
  if (kind == "corrupt") {
    const long long i = number([](const std::string& s, std::size_t* n) { return std::stoll(s, n); }, "a positive integer");
    if (i < 1) throw DomainError("corrupt:I needs a positive integer I");
    return std::make_unique<CorruptingServer>(model, static_cast<std::uint64_t>(i), seed);
  }
  if (kind == "noise") {
    const double p = number([](const std::string& s, std::size_t* n) { return std::stod(s, n); }, "a probability");
    return std::make_unique<NoisyServer>(model, p, seed);
  }
  throw DomainError("unknown adversary '" + spec + "'; expected honest, lowq:PATH, corrupt:I or noise:P");
}

}  // namespace fusion::adversary
