#include "fusion/wire.hpp"

#include <string>

#include "fusion/error.hpp"

namespace fusion::wire {

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::ShareVector:
      return "ShareVector";
    case MsgType::Opening:
      return "Opening";
    case MsgType::TripleIssue:
      return "TripleIssue";
    case MsgType::MaskedValue:
      return "MaskedValue";
    case MsgType::Result:
      return "Result";
    case MsgType::Abort:
      return "Abort";
  }
  return "Unknown";
}

std::vector<std::uint8_t> encode(const Frame& frame) {
  const std::size_t payload = frame.words.size() * kWordSize;
  if (payload > kMaxPayload) throw ProtocolError("frame payload too large");
  std::vector<std::uint8_t> out(kHeaderSize + payload);
  out[0] = static_cast<std::uint8_t>(kMagic >> 8);
  out[1] = static_cast<std::uint8_t>(kMagic & 0xFF);
  out[2] = kVersion;
  out[3] = static_cast<std::uint8_t>(frame.type);
  const auto len = static_cast<std::uint32_t>(payload);
  for (int b = 0; b < 4; ++b) out[4 + b] = static_cast<std::uint8_t>(len >> (8 * b));
  std::uint8_t* p = out.data() + kHeaderSize;
  for (const Ring w : frame.words) {
    for (int b = 0; b < 8; ++b) *p++ = static_cast<std::uint8_t>(w >> (8 * b));
  }
  return out;
}

Header decode_header(std::span<const std::uint8_t, kHeaderSize> bytes) {
  const std::uint16_t magic = static_cast<std::uint16_t>(bytes[0] << 8 | bytes[1]);
  if (magic != kMagic) throw ProtocolError("framing violation: bad magic");
  if (bytes[2] != kVersion) throw ProtocolError("framing violation: unsupported version " + std::to_string(bytes[2]));
  if (bytes[3] < 0x01 || bytes[3] > 0x06) {
    throw ProtocolError("framing violation: unknown message type " + std::to_string(bytes[3]));
  }
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) len |= static_cast<std::uint32_t>(bytes[4 + b]) << (8 * b);
  if (len % kWordSize != 0) throw ProtocolError("framing violation: payload is not a whole number of words");
  if (len > kMaxPayload) throw ProtocolError("framing violation: payload length too large");
  return {static_cast<MsgType>(bytes[3]), len};
}

std::vector<Ring> decode_payload(std::span<const std::uint8_t> payload) {
  if (payload.size() % kWordSize != 0) throw ProtocolError("framing violation: truncated word");
  std::vector<Ring> words(payload.size() / kWordSize);
  for (std::size_t w = 0; w < words.size(); ++w) {
    Ring v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<Ring>(payload[w * 8 + b]) << (8 * b);
    words[w] = v;
  }
  return words;
}

Frame decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw ProtocolError("framing violation: short header");
  const Header h = decode_header(bytes.first<kHeaderSize>());
  if (bytes.size() != kHeaderSize + h.payload_len) {
    throw ProtocolError("framing violation: payload length mismatch");
  }
  return Frame{h.type, decode_payload(bytes.subspan(kHeaderSize))};
}

}  // namespace fusion::wire
