#include "fusion/rng.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>
#include <stdexcept>

namespace fusion {
namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  });
}

void store_le64(unsigned char* out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out[b] = static_cast<unsigned char>(v >> (8 * b));
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  ensure_sodium();
  unsigned char input[16] = {'f', 'u', 's', 'i', 'o', 'n', '-', 'r'};
  store_le64(input + 8, seed);
  crypto_generichash(key_.data(), key_.size(), input, sizeof input, nullptr, 0);
}

Rng::Rng(const Key& key) : key_(key) { ensure_sodium(); }

Rng Rng::derive(std::string_view label, std::uint64_t index) const {
  crypto_generichash_state st;
  crypto_generichash_init(&st, key_.data(), key_.size(), 32);
  crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(label.data()), label.size());
  unsigned char idx[8];
  store_le64(idx, index);
  crypto_generichash_update(&st, idx, sizeof idx);
  Key child{};
  crypto_generichash_final(&st, child.data(), child.size());
  return Rng(child);
}

void Rng::refill() {
  unsigned char nonce[crypto_stream_chacha20_NONCEBYTES];
  store_le64(nonce, block_nonce_++);
  crypto_stream_chacha20(buffer_.data(), buffer_.size(), nonce, key_.data());
  pos_ = 0;
}

Rng::result_type Rng::operator()() {
  if (pos_ + 8 > buffer_.size()) refill();
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(buffer_[pos_ + b]) << (8 * b);
  pos_ += 8;
  return v;
}

std::uint64_t Rng::uniform(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::uniform: bound must be nonzero");
  // Largest multiple of bound that fits; values at or above it are rejected.
  const std::uint64_t limit = max() - (max() % bound + 1) % bound;
  std::uint64_t v;
  do {
    v = (*this)();
  } while (v > limit);
  return v % bound;
}

double Rng::uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

}  // namespace fusion
