#pragma once

// Frame layout (bit-exact):
//   magic 0xFA51 (2 bytes, big-endian) | version 0x01 | msg_type (1 byte)
//   | payload_len (u32, little-endian) | payload: little-endian 64-bit ring words

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fusion/fixed_point.hpp"

namespace fusion::wire {

inline constexpr std::uint16_t kMagic = 0xFA51;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::size_t kWordSize = 8;
// Largest payload a peer may announce; keeps a corrupt length from allocating gigabytes.
inline constexpr std::uint32_t kMaxPayload = 1u << 30;

enum class MsgType : std::uint8_t {
  ShareVector = 0x01,
  Opening = 0x02,
  TripleIssue = 0x03,
  MaskedValue = 0x04,
  Result = 0x05,
  Abort = 0x06,
};

std::string_view to_string(MsgType type);

struct Frame {
  MsgType type = MsgType::ShareVector;
  std::vector<Ring> words;

  std::size_t encoded_size() const { return kHeaderSize + words.size() * kWordSize; }
  bool operator==(const Frame&) const = default;
};

struct Header {
  MsgType type = MsgType::ShareVector;
  std::uint32_t payload_len = 0;
};

std::vector<std::uint8_t> encode(const Frame& frame);
/// Validates magic, version, type and length; throws ProtocolError on any violation.
Header decode_header(std::span<const std::uint8_t, kHeaderSize> bytes);
Frame decode(std::span<const std::uint8_t> bytes);
std::vector<Ring> decode_payload(std::span<const std::uint8_t> payload);

}  // namespace fusion::wire
