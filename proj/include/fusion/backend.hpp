#pragma once

// The semi-honest inference functionality behind one interface.
//
//  - OracleBackend evaluates the model in plaintext.
//  - TwoPartyBackend runs a three-endpoint protocol: client and server hold additive shares
//    over Z_{2^64}; dense layers use dealer-issued Beaver matrix triples; truncation and
//    activations go through the dealer, which reconstructs, applies the gate and reshares.
//    The dealer stands in for an ideal non-linear functionality. It is a simulation device,
//    not a cryptographic comparison protocol, and nothing is hidden from it.
//
// Per-sample message schedule (one "round" per line):
//   dense:      C->S ShareVector(x1, first layer only) + Opening(E0,f0); S->C Opening(E1,f1);
//               C,S->D MaskedValue; D->C,S ShareVector (truncated reshare)
//   activation: C,S->D MaskedValue; D->C,S ShareVector
//   reveal:     S->C Result (server's logit share); client takes the argmax
// Preprocessing (TripleIssue) is sent by the dealer before each sample and is not a round.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fusion/channel.hpp"
#include "fusion/datamix.hpp"
#include "fusion/model.hpp"
#include "fusion/rng.hpp"

namespace fusion {

struct ChannelStats {
  std::uint64_t bytes_client_to_server = 0;
  std::uint64_t bytes_server_to_client = 0;
  std::uint64_t bytes_dealer_total = 0;
  std::uint64_t rounds = 0;
  int dealer_links_observed = 0;  // 2 when both party-dealer links are counted

  std::uint64_t client_server_bytes() const { return bytes_client_to_server + bytes_server_to_client; }
};

// ---- additive sharing -------------------------------------------------------------------

struct SharePair {
  Ring first = 0;   // client's share, uniform
  Ring second = 0;  // server's share, x - first
};

SharePair share(std::int64_t x, Rng& rng);
std::int64_t reconstruct(Ring a, Ring b);

// ---- Beaver matrix triples --------------------------------------------------------------

/// One party's share of (A, b, c = A b) for a rows x cols matrix-vector product.
struct MatrixTriple {
  std::uint64_t nonce = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Ring> A;  // rows * cols
  std::vector<Ring> b;  // cols
  std::vector<Ring> c;  // rows
};

std::pair<MatrixTriple, MatrixTriple> deal_matrix_triple(std::size_t rows, std::size_t cols,
                                                         std::uint64_t nonce, Rng& rng);

/// A party's contribution to the openings E = W - A and f = x - b.
struct BeaverOpening {
  std::vector<Ring> E;
  std::vector<Ring> f;
};

BeaverOpening beaver_open(const MatrixTriple& t, std::span<const Ring> w_share, std::span<const Ring> x_share);

/// Party `party` (0 or 1) share of W x at scale 2^{2f}, from both openings.
std::vector<Ring> beaver_combine(int party, const MatrixTriple& t, const BeaverOpening& mine,
                                 const BeaverOpening& theirs);

/// Dealer-held triples on a party's side; a nonce can be consumed only once.
class TripleStore {
 public:
  void put(MatrixTriple t);
  MatrixTriple take(std::uint64_t nonce);
  std::size_t pending() const noexcept { return pending_.size(); }

 private:
  std::vector<MatrixTriple> pending_;
  std::set<std::uint64_t> consumed_;
};

// ---- dealer gates -----------------------------------------------------------------------

enum class GateKind : std::uint64_t { Truncate = 0, ReLU = 1, Square = 2 };

struct MaskShares {
  std::uint64_t nonce = 0;
  std::vector<Ring> first;
  std::vector<Ring> second;
};

/// The dealer's gate bookkeeping: masks are issued once and may be opened once.
class DealerGates {
 public:
  DealerGates(int scale_bits, Rng rng) : scale_bits_(scale_bits), rng_(std::move(rng)) {}

  MaskShares issue_mask(std::size_t len);
  /// Removes the mask, applies the gate to the reconstructed value and returns fresh shares.
  /// Throws ProtocolError on an unknown or already-used nonce, or on a length mismatch.
  std::pair<std::vector<Ring>, std::vector<Ring>> apply(std::uint64_t nonce, GateKind kind,
                                                        std::span<const Ring> masked_first,
                                                        std::span<const Ring> masked_second);
  std::uint64_t next_nonce() { return ++nonce_; }
  bool used(std::uint64_t nonce) const { return used_.count(nonce) != 0; }
  Rng& rng() noexcept { return rng_; }

 private:
  int scale_bits_;
  Rng rng_;
  std::uint64_t nonce_ = 0;
  std::vector<std::pair<std::uint64_t, std::vector<Ring>>> live_masks_;
  std::set<std::uint64_t> used_;
};

/// In-process evaluation of one Beaver product followed by dealer truncation, both parties
/// simulated locally. Returns output shares at scale 2^f.
std::pair<std::vector<Ring>, std::vector<Ring>> beaver_matvec(std::span<const Ring> w0, std::span<const Ring> w1,
                                                              std::span<const Ring> x0, std::span<const Ring> x1,
                                                              const std::pair<MatrixTriple, MatrixTriple>& triple,
                                                              DealerGates& dealer);

/// Reshares z through the dealer with the given non-linear gate.
std::pair<std::vector<Ring>, std::vector<Ring>> dealer_gate(std::span<const Ring> z0, std::span<const Ring> z1,
                                                            GateKind kind, DealerGates& dealer);

// ---- server behaviour -------------------------------------------------------------------

/// Server-side choices for one batch. Receives only the public batch shape, never the
/// client's permutation or (under two-party execution) the features.
class ServerBehavior {
 public:
  virtual ~ServerBehavior() = default;
  virtual const Model& model() const = 0;
  virtual void begin_batch(const BatchShape& shape) { (void)shape; }
  /// True when the server falsifies the result at this mixed-dataset position.
  virtual bool corrupts(std::size_t position) const {
    (void)position;
    return false;
  }
};

class HonestServer final : public ServerBehavior {
 public:
  explicit HonestServer(const Model& model) : model_(&model) {}
  const Model& model() const override { return *model_; }

 private:
  const Model* model_;
};

/// Under two-party execution a falsifying server cannot compute label+1; it adds this offset
/// to its share of logit kForcedClass, which forces that class.
inline constexpr Ring kForceOffset = Ring{1} << 48;
inline constexpr std::size_t kForcedClass = 0;

// ---- public architecture descriptor -----------------------------------------------------

struct LayerShape {
  std::uint64_t kind = 0;  // 0 dense, 1 relu, 2 square
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

struct Architecture {
  int scale_bits = kDefaultScaleBits;
  std::vector<LayerShape> layers;

  static Architecture of(const Model& model);
  std::vector<Ring> encode() const;
  static Architecture decode(std::span<const Ring> words);
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t dense_layers() const;
  std::size_t activation_layers() const;
};

/// Client<->server bytes one sample costs under the schedule above (headers excluded).
std::uint64_t per_sample_client_server_bytes(const Architecture& arch);

// ---- endpoints --------------------------------------------------------------------------

struct ClientResult {
  std::vector<Label> labels;
  std::uint64_t rounds = 0;
};

ClientResult run_client(Channel& server, Channel& dealer, std::span<const Sample> samples,
                        const BatchShape& shape, std::uint64_t seed);
void run_server(Channel& client, Channel& dealer, ServerBehavior& behavior, std::uint64_t seed);
/// Both links must be connected; roles are told apart by the session header.
void run_dealer(Channel& link_a, Channel& link_b, std::uint64_t seed);

// ---- backends ---------------------------------------------------------------------------

struct BatchOutput {
  std::vector<Label> labels;
  ChannelStats stats;
};

class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  /// One label per sample, revealed to the client only. `shape` is the public (R, B, T)
  /// the server is assumed to know.
  virtual BatchOutput run_batch(std::span<const Sample> samples, const BatchShape& shape) = 0;
  virtual std::string_view name() const = 0;
};

class OracleBackend final : public InferenceBackend {
 public:
  explicit OracleBackend(ServerBehavior& server) : server_(&server) {}
  BatchOutput run_batch(std::span<const Sample> samples, const BatchShape& shape) override;
  std::string_view name() const override { return "oracle"; }

 private:
  ServerBehavior* server_;
};

enum class Transport { InProcess, TcpLoopback, TcpRemote };

struct TwoPartyOptions {
  Transport transport = Transport::InProcess;
  HostPort dealer_addr;  // TcpRemote only
  HostPort server_addr;  // TcpRemote only
  std::uint64_t seed = 0;
  Channel::Observer client_observer;  // sees every frame on the client's two links
};

class TwoPartyBackend final : public InferenceBackend {
 public:
  /// `server` may be null for TcpRemote, where the server runs in another process.
  TwoPartyBackend(ServerBehavior* server, TwoPartyOptions options);
  BatchOutput run_batch(std::span<const Sample> samples, const BatchShape& shape) override;
  std::string_view name() const override { return "two-party"; }

 private:
  ServerBehavior* server_;
  TwoPartyOptions options_;
};

}  // namespace fusion
