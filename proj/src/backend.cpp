#include "fusion/backend.hpp"

#include <algorithm>
#include <exception>
#include <future>
#include <mutex>
#include <string>
#include <thread>

#include "fusion/error.hpp"

namespace fusion {
namespace {

using wire::Frame;
using wire::MsgType;

constexpr Ring kRoleClient = 1;
constexpr Ring kRoleServer = 2;
constexpr std::uint64_t kAbortProtocol = 1;

std::vector<Ring> random_words(std::size_t n, Rng& rng) {
  std::vector<Ring> out(n);
  for (auto& w : out) w = rng();
  return out;
}

std::vector<Ring> sub(std::span<const Ring> a, std::span<const Ring> b) {
  std::vector<Ring> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

std::vector<Ring> add(std::span<const Ring> a, std::span<const Ring> b) {
  std::vector<Ring> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
  return out;
}

// y += M v (mod 2^64), M row-major rows x cols.
void matvec_acc(std::span<const Ring> m, std::span<const Ring> v, std::size_t rows, std::size_t cols,
                std::vector<Ring>& y) {
  for (std::size_t r = 0; r < rows; ++r) {
    Ring acc = 0;
    const Ring* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
    y[r] += acc;
  }
}

void require_size(const Frame& f, std::size_t words, std::string_view what) {
  if (f.words.size() != words) {
    throw ProtocolError(std::string(what) + ": expected " + std::to_string(words) + " words, got " +
                        std::to_string(f.words.size()));
  }
}

// TripleIssue payloads: [nonce, rows, cols, A, b, c] for triples, [nonce, 0, len, m] for masks.
Frame triple_frame(const MatrixTriple& t) {
  Frame f{MsgType::TripleIssue, {t.nonce, t.rows, t.cols}};
  f.words.insert(f.words.end(), t.A.begin(), t.A.end());
  f.words.insert(f.words.end(), t.b.begin(), t.b.end());
  f.words.insert(f.words.end(), t.c.begin(), t.c.end());
  return f;
}

Frame mask_frame(std::uint64_t nonce, std::span<const Ring> m) {
  Frame f{MsgType::TripleIssue, {nonce, 0, m.size()}};
  f.words.insert(f.words.end(), m.begin(), m.end());
  return f;
}

struct MaskEntry {
  std::uint64_t nonce = 0;
  std::vector<Ring> m;
};

struct Preprocessing {
  TripleStore triples;
  std::vector<std::uint64_t> triple_order;
  std::vector<MaskEntry> masks;  // in gate order
};

Preprocessing receive_preprocessing(Channel& dealer, const Architecture& arch) {
  Preprocessing pre;
  for (const auto& layer : arch.layers) {
    if (layer.kind == 0) {
      Frame f = dealer.expect(MsgType::TripleIssue);
      if (f.words.size() < 3 || f.words[1] != layer.rows || f.words[2] != layer.cols) {
        throw ProtocolError("TripleIssue: triple shape does not match the architecture");
      }
      const std::size_t rows = layer.rows, cols = layer.cols;
      require_size(f, 3 + rows * cols + cols + rows, "TripleIssue");
      MatrixTriple t;
      t.nonce = f.words[0];
      t.rows = rows;
      t.cols = cols;
      auto it = f.words.begin() + 3;
      t.A.assign(it, it + static_cast<std::ptrdiff_t>(rows * cols));
      it += static_cast<std::ptrdiff_t>(rows * cols);
      t.b.assign(it, it + static_cast<std::ptrdiff_t>(cols));
      it += static_cast<std::ptrdiff_t>(cols);
      t.c.assign(it, it + static_cast<std::ptrdiff_t>(rows));
      pre.triple_order.push_back(t.nonce);
      pre.triples.put(std::move(t));
    }
    Frame f = dealer.expect(MsgType::TripleIssue);
    if (f.words.size() < 3 || f.words[1] != 0 || f.words[2] != layer.rows) {
      throw ProtocolError("TripleIssue: mask shape does not match the architecture");
    }
    require_size(f, 3 + layer.rows, "TripleIssue");
    pre.masks.push_back({f.words[0], std::vector<Ring>(f.words.begin() + 3, f.words.end())});
  }
  return pre;
}

Frame masked_frame(const MaskEntry& mask, std::span<const Ring> value) {
  Frame f{MsgType::MaskedValue, {mask.nonce}};
  for (std::size_t k = 0; k < value.size(); ++k) f.words.push_back(value[k] + mask.m[k]);
  return f;
}

Frame opening_frame(const BeaverOpening& o) {
  Frame f{MsgType::Opening, o.E};
  f.words.insert(f.words.end(), o.f.begin(), o.f.end());
  return f;
}

BeaverOpening parse_opening(const Frame& f, std::size_t rows, std::size_t cols) {
  require_size(f, rows * cols + cols, "Opening");
  BeaverOpening o;
  o.E.assign(f.words.begin(), f.words.begin() + static_cast<std::ptrdiff_t>(rows * cols));
  o.f.assign(f.words.begin() + static_cast<std::ptrdiff_t>(rows * cols), f.words.end());
  return o;
}

std::vector<Ring> reshare(Channel& dealer, std::size_t len) {
  Frame f = dealer.expect(MsgType::ShareVector);
  require_size(f, len, "ShareVector");
  return std::move(f.words);
}

}  // namespace

// ---- sharing ----------------------------------------------------------------------------

SharePair share(std::int64_t x, Rng& rng) {
  const Ring r = rng();
  return {r, to_ring(x) - r};
}

std::int64_t reconstruct(Ring a, Ring b) { return from_ring(a + b); }

// ---- triples ----------------------------------------------------------------------------

std::pair<MatrixTriple, MatrixTriple> deal_matrix_triple(std::size_t rows, std::size_t cols,
                                                         std::uint64_t nonce, Rng& rng) {
  const auto A = random_words(rows * cols, rng);
  const auto b = random_words(cols, rng);
  std::vector<Ring> c(rows, 0);
  matvec_acc(A, b, rows, cols, c);

  MatrixTriple t0{nonce, rows, cols, random_words(rows * cols, rng), random_words(cols, rng), random_words(rows, rng)};
  MatrixTriple t1{nonce, rows, cols, sub(A, t0.A), sub(b, t0.b), sub(c, t0.c)};
  return {std::move(t0), std::move(t1)};
}

BeaverOpening beaver_open(const MatrixTriple& t, std::span<const Ring> w_share, std::span<const Ring> x_share) {
  if (w_share.size() != t.rows * t.cols || x_share.size() != t.cols) {
    throw DomainError("beaver_open: operand shapes do not match the triple");
  }
  return {sub(w_share, t.A), sub(x_share, t.b)};
}

std::vector<Ring> beaver_combine(int party, const MatrixTriple& t, const BeaverOpening& mine,
                                 const BeaverOpening& theirs) {
  const auto E = add(mine.E, theirs.E);
  const auto f = add(mine.f, theirs.f);
  std::vector<Ring> z = t.c;
  matvec_acc(E, t.b, t.rows, t.cols, z);
  matvec_acc(t.A, f, t.rows, t.cols, z);
  if (party == 0) matvec_acc(E, f, t.rows, t.cols, z);
  return z;
}

void TripleStore::put(MatrixTriple t) {
  if (consumed_.count(t.nonce) != 0) throw ProtocolError("triple reuse detected: nonce already consumed");
  pending_.push_back(std::move(t));
}

MatrixTriple TripleStore::take(std::uint64_t nonce) {
  if (consumed_.count(nonce) != 0) {
    throw ProtocolError("triple reuse detected: nonce " + std::to_string(nonce) + " already consumed");
  }
  const auto it = std::find_if(pending_.begin(), pending_.end(), [&](const auto& t) { return t.nonce == nonce; });
  if (it == pending_.end()) throw ProtocolError("unknown triple nonce " + std::to_string(nonce));
  MatrixTriple t = std::move(*it);
  pending_.erase(it);
  consumed_.insert(nonce);
  return t;
}

// ---- dealer gates -----------------------------------------------------------------------

MaskShares DealerGates::issue_mask(std::size_t len) {
  MaskShares s;
  s.nonce = next_nonce();
  const auto m = random_words(len, rng_);
  s.first = random_words(len, rng_);
  s.second = sub(m, s.first);
  live_masks_.emplace_back(s.nonce, m);
  return s;
}

std::pair<std::vector<Ring>, std::vector<Ring>> DealerGates::apply(std::uint64_t nonce, GateKind kind,
                                                                   std::span<const Ring> masked_first,
                                                                   std::span<const Ring> masked_second) {
  if (used_.count(nonce) != 0) throw ProtocolError("mask reuse detected: nonce " + std::to_string(nonce));
  const auto it = std::find_if(live_masks_.begin(), live_masks_.end(), [&](const auto& e) { return e.first == nonce; });
  if (it == live_masks_.end()) throw ProtocolError("unknown mask nonce " + std::to_string(nonce));
  const std::vector<Ring> m = std::move(it->second);
  live_masks_.erase(it);
  used_.insert(nonce);
  if (masked_first.size() != m.size() || masked_second.size() != m.size()) {
    throw ProtocolError("masked value length does not match the issued mask");
  }

  std::vector<Ring> first(m.size()), second(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const std::int64_t z = from_ring(masked_first[k] + masked_second[k] - m[k]);
    std::int64_t y = z;
    switch (kind) {
      case GateKind::Truncate:
        y = static_cast<std::int64_t>(truncate(z, scale_bits_));
        break;
      case GateKind::ReLU:
        y = z > 0 ? z : 0;
        break;
      case GateKind::Square:
      {
        const Wide sq = truncate(static_cast<Wide>(z) * z, scale_bits_);
        if (!fits_int64(sq)) throw OverflowError("square gate overflows the 64-bit ring");
        y = static_cast<std::int64_t>(sq);
      }
        break;
    }
    first[k] = rng_();
    second[k] = to_ring(y) - first[k];
  }
  return {std::move(first), std::move(second)};
}

std::pair<std::vector<Ring>, std::vector<Ring>> dealer_gate(std::span<const Ring> z0, std::span<const Ring> z1,
                                                            GateKind kind, DealerGates& dealer) {
  if (z0.size() != z1.size()) throw DomainError("dealer_gate: share lengths differ");
  const MaskShares mask = dealer.issue_mask(z0.size());
  return dealer.apply(mask.nonce, kind, add(z0, mask.first), add(z1, mask.second));
}

std::pair<std::vector<Ring>, std::vector<Ring>> beaver_matvec(std::span<const Ring> w0, std::span<const Ring> w1,
                                                              std::span<const Ring> x0, std::span<const Ring> x1,
                                                              const std::pair<MatrixTriple, MatrixTriple>& triple,
                                                              DealerGates& dealer) {
  const BeaverOpening o0 = beaver_open(triple.first, w0, x0);
  const BeaverOpening o1 = beaver_open(triple.second, w1, x1);
  const auto z0 = beaver_combine(0, triple.first, o0, o1);
  const auto z1 = beaver_combine(1, triple.second, o1, o0);
  return dealer_gate(z0, z1, GateKind::Truncate, dealer);
}

// ---- architecture -----------------------------------------------------------------------

Architecture Architecture::of(const Model& model) {
  Architecture a;
  a.scale_bits = model.scale_bits();
  std::uint64_t dim = model.input_dim();
  for (const auto& layer : model.layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      a.layers.push_back({0, d->rows, d->cols});
      dim = d->rows;
    } else {
      const auto kind = std::get<ActivationLayer>(layer).kind;
      a.layers.push_back({kind == ActivationKind::ReLU ? 1u : 2u, dim, dim});
    }
  }
  return a;
}

std::vector<Ring> Architecture::encode() const {
  std::vector<Ring> w{static_cast<Ring>(scale_bits), layers.size()};
  for (const auto& l : layers) {
    w.push_back(l.kind);
    w.push_back(l.rows);
    w.push_back(l.cols);
  }
  return w;
}

Architecture Architecture::decode(std::span<const Ring> words) {
  if (words.size() < 2 || words.size() != 2 + 3 * words[1] || words[1] == 0 || words[0] > 30) {
    throw ProtocolError("malformed architecture descriptor");
  }
  Architecture a;
  a.scale_bits = static_cast<int>(words[0]);
  std::uint64_t dim = 0;
  bool any_dense = false;
  for (std::size_t l = 0; l < words[1]; ++l) {
    LayerShape s{words[2 + 3 * l], words[3 + 3 * l], words[4 + 3 * l]};
    if (s.kind > 2 || s.rows == 0 || s.cols == 0 || s.rows > (1u << 24) || s.cols > (1u << 24)) {
      throw ProtocolError("malformed architecture descriptor: bad layer");
    }
    if (s.kind != 0 && s.rows != s.cols) throw ProtocolError("malformed architecture descriptor: activation shape");
    if (dim != 0 && s.cols != dim) throw ProtocolError("malformed architecture descriptor: dimensions do not compose");
    any_dense |= s.kind == 0;
    dim = s.rows;
    a.layers.push_back(s);
  }
  if (!any_dense) throw ProtocolError("malformed architecture descriptor: no dense layer");
  return a;
}

std::size_t Architecture::input_dim() const { return layers.front().cols; }
std::size_t Architecture::output_dim() const { return layers.back().rows; }

std::size_t Architecture::dense_layers() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) { return l.kind == 0; }));
}

std::size_t Architecture::activation_layers() const { return layers.size() - dense_layers(); }

std::uint64_t per_sample_client_server_bytes(const Architecture& arch) {
  const std::uint64_t h = wire::kHeaderSize, w = wire::kWordSize;
  std::uint64_t bytes = (h + w * arch.input_dim()) + (h + w * arch.output_dim());
  for (const auto& l : arch.layers) {
    if (l.kind == 0) bytes += 2 * (h + w * (l.rows * l.cols + l.cols));
  }
  return bytes;
}

// ---- endpoints --------------------------------------------------------------------------

ClientResult run_client(Channel& server, Channel& dealer, std::span<const Sample> samples,
                        const BatchShape& shape, std::uint64_t seed) {
  ClientResult out;
  try {
    Rng rng = Rng(seed).derive("client");
    const std::uint64_t n = samples.size();
    server.send(Frame{MsgType::ShareVector, {n, shape.B, shape.T}});
    dealer.send(Frame{MsgType::ShareVector, {kRoleClient, n}});
    const Architecture arch = Architecture::decode(server.expect(MsgType::ShareVector).words);
    for (const auto& s : samples) {
      if (s.features.size() != arch.input_dim()) {
        throw DomainError("sample dimension " + std::to_string(s.features.size()) +
                          " does not match the server's model input " + std::to_string(arch.input_dim()));
      }
    }

    std::vector<std::vector<Ring>> zero_weights;
    for (const auto& l : arch.layers) zero_weights.emplace_back(l.kind == 0 ? l.rows * l.cols : 0, 0);

    out.labels.reserve(n);
    for (const auto& sample : samples) {
      Preprocessing pre = receive_preprocessing(dealer, arch);
      std::vector<Ring> cur(sample.features.size()), theirs(sample.features.size());
      for (std::size_t k = 0; k < cur.size(); ++k) {
        const SharePair sp = share(sample.features[k], rng);
        cur[k] = sp.first;
        theirs[k] = sp.second;
      }
      server.send(Frame{MsgType::ShareVector, std::move(theirs)});

      std::size_t next_triple = 0;
      for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const auto& layer = arch.layers[l];
        const MaskEntry& mask = pre.masks[l];
        if (layer.kind == 0) {
          const MatrixTriple t = pre.triples.take(pre.triple_order[next_triple++]);
          const BeaverOpening mine = beaver_open(t, zero_weights[l], cur);
          server.send(opening_frame(mine));
          const BeaverOpening peer = parse_opening(server.expect(MsgType::Opening), t.rows, t.cols);
          const auto z = beaver_combine(0, t, mine, peer);
          dealer.send(masked_frame(mask, z));
        } else {
          dealer.send(masked_frame(mask, cur));
        }
        cur = reshare(dealer, layer.rows);
        ++out.rounds;
      }

      Frame result = server.expect(MsgType::Result);
      require_size(result, arch.output_dim(), "Result");
      std::vector<std::int64_t> logits(cur.size());
      for (std::size_t k = 0; k < cur.size(); ++k) logits[k] = reconstruct(cur[k], result.words[k]);
      out.labels.push_back(argmax(logits));
      ++out.rounds;
    }
  } catch (...) {
    server.send_abort(kAbortProtocol);
    dealer.send_abort(kAbortProtocol);
    throw;
  }
  return out;
}

void run_server(Channel& client, Channel& dealer, ServerBehavior& behavior, std::uint64_t seed) {
  try {
    Rng rng = Rng(seed).derive("server");
    const Frame hdr = client.expect(MsgType::ShareVector);
    require_size(hdr, 3, "client header");
    const std::uint64_t n = hdr.words[0], B = hdr.words[1], T = hdr.words[2];
    const std::uint64_t R = (B == 0 || T > n) ? 0 : (n - T) / B;
    behavior.begin_batch(BatchShape{R, B, T});

    const Model& model = behavior.model();
    const Architecture arch = Architecture::of(model);
    Frame dealer_hdr{MsgType::ShareVector, {kRoleServer}};
    const auto arch_words = arch.encode();
    dealer_hdr.words.insert(dealer_hdr.words.end(), arch_words.begin(), arch_words.end());
    dealer.send(dealer_hdr);
    client.send(Frame{MsgType::ShareVector, arch_words});

    std::vector<std::vector<Ring>> weights, biases;
    for (const auto& layer : model.layers()) {
      if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        weights.emplace_back(d->weights.begin(), d->weights.end());
        biases.emplace_back(d->bias.begin(), d->bias.end());
      } else {
        weights.emplace_back();
        biases.emplace_back();
      }
    }

    for (std::uint64_t pos = 0; pos < n; ++pos) {
      Preprocessing pre = receive_preprocessing(dealer, arch);
      Frame x = client.expect(MsgType::ShareVector);
      require_size(x, arch.input_dim(), "ShareVector");
      std::vector<Ring> cur = std::move(x.words);

      std::size_t next_triple = 0;
      for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const auto& layer = arch.layers[l];
        const MaskEntry& mask = pre.masks[l];
        if (layer.kind == 0) {
          const MatrixTriple t = pre.triples.take(pre.triple_order[next_triple++]);
          const BeaverOpening peer = parse_opening(client.expect(MsgType::Opening), t.rows, t.cols);
          const BeaverOpening mine = beaver_open(t, weights[l], cur);
          client.send(opening_frame(mine));
          const auto z = beaver_combine(1, t, mine, peer);
          dealer.send(masked_frame(mask, z));
          cur = reshare(dealer, layer.rows);
          for (std::size_t k = 0; k < cur.size(); ++k) cur[k] += biases[l][k];
        } else {
          dealer.send(masked_frame(mask, cur));
          cur = reshare(dealer, layer.rows);
        }
      }
      if (behavior.corrupts(pos)) cur[kForcedClass % cur.size()] += kForceOffset;
      client.send(Frame{MsgType::Result, std::move(cur)});
    }
    (void)rng;
  } catch (...) {
    client.send_abort(kAbortProtocol);
    dealer.send_abort(kAbortProtocol);
    throw;
  }
}

void run_dealer(Channel& link_a, Channel& link_b, std::uint64_t seed) {
  try {
    Frame ha = link_a.expect(MsgType::ShareVector);
    Frame hb = link_b.expect(MsgType::ShareVector);
    if (ha.words.empty() || hb.words.empty()) throw ProtocolError("dealer: empty session header");
    Channel* client = &link_a;
    Channel* server = &link_b;
    if (ha.words[0] == kRoleServer && hb.words[0] == kRoleClient) {
      std::swap(client, server);
      std::swap(ha, hb);
    } else if (ha.words[0] != kRoleClient || hb.words[0] != kRoleServer) {
      throw ProtocolError("dealer: session headers must come from one client and one server");
    }
    require_size(ha, 2, "client header");
    const std::uint64_t n = ha.words[1];
    const Architecture arch = Architecture::decode(std::span<const Ring>(hb.words).subspan(1));

    DealerGates gates(arch.scale_bits, Rng(seed).derive("dealer"));
    for (std::uint64_t pos = 0; pos < n; ++pos) {
      std::vector<Frame> to_client, to_server;
      std::vector<std::uint64_t> gate_nonces;
      for (const auto& layer : arch.layers) {
        if (layer.kind == 0) {
          const std::uint64_t nonce = gates.next_nonce();
          auto [t0, t1] = deal_matrix_triple(layer.rows, layer.cols, nonce, gates.rng());
          to_client.push_back(triple_frame(t0));
          to_server.push_back(triple_frame(t1));
        }
        const MaskShares m = gates.issue_mask(layer.rows);
        gate_nonces.push_back(m.nonce);
        to_client.push_back(mask_frame(m.nonce, m.first));
        to_server.push_back(mask_frame(m.nonce, m.second));
      }
      for (const auto& f : to_client) client->send(f);
      for (const auto& f : to_server) server->send(f);

      for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const Frame mc = client->expect(MsgType::MaskedValue);
        const Frame ms = server->expect(MsgType::MaskedValue);
        if (mc.words.empty() || ms.words.empty()) throw ProtocolError("MaskedValue without a nonce");
        if (mc.words[0] != ms.words[0]) throw ProtocolError("parties disagree on the mask nonce");
        const std::uint64_t nonce = mc.words[0];
        const auto kind = arch.layers[l].kind == 0   ? GateKind::Truncate
                          : arch.layers[l].kind == 1 ? GateKind::ReLU
                                                     : GateKind::Square;
        if (gates.used(nonce)) throw ProtocolError("mask reuse detected: nonce " + std::to_string(nonce));
        if (nonce != gate_nonces[l]) throw ProtocolError("unexpected mask nonce " + std::to_string(nonce));
        auto [y0, y1] = gates.apply(nonce, kind, std::span<const Ring>(mc.words).subspan(1),
                                    std::span<const Ring>(ms.words).subspan(1));
        client->send(Frame{MsgType::ShareVector, std::move(y0)});
        server->send(Frame{MsgType::ShareVector, std::move(y1)});
      }
    }
  } catch (...) {
    link_a.send_abort(kAbortProtocol);
    link_b.send_abort(kAbortProtocol);
    throw;
  }
}

// ---- backends ---------------------------------------------------------------------------

BatchOutput OracleBackend::run_batch(std::span<const Sample> samples, const BatchShape& shape) {
  server_->begin_batch(shape);
  const Model& model = server_->model();
  BatchOutput out;
  out.labels.reserve(samples.size());
  for (std::size_t pos = 0; pos < samples.size(); ++pos) {
    Label label = forward(model, samples[pos].features).label;
    if (server_->corrupts(pos)) label = (label + 1) % static_cast<Label>(model.num_classes());
    out.labels.push_back(label);
  }
  return out;
}

TwoPartyBackend::TwoPartyBackend(ServerBehavior* server, TwoPartyOptions options)
    : server_(server), options_(std::move(options)) {
  if (options_.transport != Transport::TcpRemote && server_ == nullptr) {
    throw DomainError("two-party backend needs a local server unless endpoints are remote");
  }
}

namespace {

// Runs `fn` on a thread, recording any exception and closing `links` so peers unblock.
class Worker {
 public:
  template <class Fn>
  Worker(Fn fn, std::vector<Channel*> links)
      : thread_([this, fn = std::move(fn), links = std::move(links)]() mutable {
          try {
            fn();
          } catch (...) {
            error_ = std::current_exception();
            for (auto* c : links) {
              if (c) c->close();
            }
          }
        }) {}
  ~Worker() {
    if (thread_.joinable()) thread_.join();
  }
  void join() {
    if (thread_.joinable()) thread_.join();
  }
  std::exception_ptr error() const { return error_; }

 private:
  std::exception_ptr error_;
  std::thread thread_;
};

// The first error that is not merely a reaction to another endpoint giving up.
[[noreturn]] void rethrow_root(std::initializer_list<std::exception_ptr> errors) {
  std::exception_ptr fallback;
  for (const auto& e : errors) {
    if (!e) continue;
    if (!fallback) fallback = e;
    try {
      std::rethrow_exception(e);
    } catch (const PeerGoneError&) {
    } catch (...) {
      std::rethrow_exception(e);
    }
  }
  std::rethrow_exception(fallback);
}

}  // namespace

BatchOutput TwoPartyBackend::run_batch(std::span<const Sample> samples, const BatchShape& shape) {
  if (server_ != nullptr) {
    const Model& m = server_->model();
    if (m.classifier() == Classifier::Softmax && m.defense()) {
      throw PreconditionError("the two-party backend does not apply the output defense; use the oracle backend");
    }
  }
  const std::uint64_t seed = options_.seed;
  BatchOutput out;

  const auto finish = [&](Channel& to_server, Channel& to_dealer, ClientResult r) {
    out.labels = std::move(r.labels);
    out.stats.rounds = r.rounds;
    out.stats.bytes_client_to_server = to_server.bytes_sent();
    out.stats.bytes_server_to_client = to_server.bytes_received();
    out.stats.bytes_dealer_total = to_dealer.bytes_sent() + to_dealer.bytes_received();
  };

  switch (options_.transport) {
    case Transport::InProcess: {
      auto [c_s, s_c] = make_memory_channel_pair();
      auto [c_d, d_c] = make_memory_channel_pair();
      auto [s_d, d_s] = make_memory_channel_pair();
      if (options_.client_observer) {
        c_s->set_observer(options_.client_observer);
        c_d->set_observer(options_.client_observer);
      }
      std::vector<Channel*> all{c_s.get(), s_c.get(), c_d.get(), d_c.get(), s_d.get(), d_s.get()};
      Worker dealer([&] { run_dealer(*d_c, *d_s, seed); }, all);
      Worker server([&] { run_server(*s_c, *s_d, *server_, seed); }, all);
      ClientResult r;
      try {
        r = run_client(*c_s, *c_d, samples, shape, seed);
      } catch (...) {
        const auto mine = std::current_exception();
        for (auto* c : all) c->close();
        server.join();
        dealer.join();
        rethrow_root({mine, server.error(), dealer.error()});
      }
      server.join();
      dealer.join();
      if (server.error() || dealer.error()) rethrow_root({server.error(), dealer.error()});
      finish(*c_s, *c_d, std::move(r));
      out.stats.bytes_dealer_total += s_d->bytes_sent() + s_d->bytes_received();
      out.stats.dealer_links_observed = 2;
      return out;
    }
    case Transport::TcpLoopback: {
      std::promise<std::uint16_t> dealer_port, server_port;
      auto dealer_port_f = dealer_port.get_future();
      auto server_port_f = server_port.get_future().share();
      std::uint64_t server_dealer_bytes = 0;
      std::mutex mu;

      Worker dealer(
          [&] {
            TcpListener listener(HostPort{"127.0.0.1", 0});
            dealer_port.set_value(listener.port());
            auto a = listener.accept();
            auto b = listener.accept();
            run_dealer(*a, *b, seed);
          },
          {});
      const std::uint16_t dport = dealer_port_f.get();
      Worker server(
          [&] {
            auto to_dealer = tcp_connect(HostPort{"127.0.0.1", dport});
            TcpListener listener(HostPort{"127.0.0.1", 0});
            server_port.set_value(listener.port());
            auto to_client = listener.accept();
            try {
              run_server(*to_client, *to_dealer, *server_, seed);
            } catch (...) {
              to_dealer->close();
              to_client->close();
              throw;
            }
            std::lock_guard lock(mu);
            server_dealer_bytes = to_dealer->bytes_sent() + to_dealer->bytes_received();
          },
          {});
      auto to_dealer = tcp_connect(HostPort{"127.0.0.1", dport});
      auto to_server = tcp_connect(HostPort{"127.0.0.1", server_port_f.get()});
      if (options_.client_observer) {
        to_server->set_observer(options_.client_observer);
        to_dealer->set_observer(options_.client_observer);
      }
      ClientResult r;
      try {
        r = run_client(*to_server, *to_dealer, samples, shape, seed);
      } catch (...) {
        const auto mine = std::current_exception();
        to_server->close();
        to_dealer->close();
        server.join();
        dealer.join();
        rethrow_root({mine, server.error(), dealer.error()});
      }
      server.join();
      dealer.join();
      if (server.error() || dealer.error()) rethrow_root({server.error(), dealer.error()});
      finish(*to_server, *to_dealer, std::move(r));
      out.stats.bytes_dealer_total += server_dealer_bytes;
      out.stats.dealer_links_observed = 2;
      return out;
    }
    case Transport::TcpRemote: {
      auto to_dealer = tcp_connect(options_.dealer_addr);
      auto to_server = tcp_connect(options_.server_addr);
      if (options_.client_observer) {
        to_server->set_observer(options_.client_observer);
        to_dealer->set_observer(options_.client_observer);
      }
      finish(*to_server, *to_dealer, run_client(*to_server, *to_dealer, samples, shape, seed));
      out.stats.dealer_links_observed = 1;
      return out;
    }
  }
  return out;
}

}  // namespace fusion
