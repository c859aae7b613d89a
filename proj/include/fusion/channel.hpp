#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "fusion/wire.hpp"

namespace fusion {

enum class Direction { Sent, Received };

/// Reliable, ordered, duplex frame channel with blocking receive and byte accounting.
/// Each channel is owned by exactly one endpoint thread; the byte counters may be read from
/// any thread.
class Channel {
 public:
  using Observer = std::function<void(Direction, const wire::Frame&)>;

  virtual ~Channel() = default;
  Channel() = default;
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void send(const wire::Frame& frame);
  wire::Frame recv();
  /// Receives one frame and insists on its type. A peer Abort or any other type is a
  /// ProtocolError carrying a diagnostic.
  wire::Frame expect(wire::MsgType type);
  /// Best-effort Abort notification; never throws.
  void send_abort(std::uint64_t code) noexcept;

  /// Unblocks a pending receive on both ends; subsequent operations fail.
  virtual void close() noexcept = 0;

  std::uint64_t bytes_sent() const noexcept { return sent_.load(); }
  std::uint64_t bytes_received() const noexcept { return received_.load(); }
  void set_observer(Observer observer) { observer_ = std::move(observer); }

 protected:
  virtual void write_bytes(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::span<std::uint8_t> out) = 0;

 private:
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> received_{0};
  Observer observer_;
};

/// Two connected in-memory endpoints.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_channel_pair();

struct HostPort {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port".
HostPort parse_host_port(const std::string& text);

class TcpListener {
 public:
  explicit TcpListener(const HostPort& addr);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  std::unique_ptr<Channel> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Connects with retries for up to `timeout_ms` (peers may still be starting).
std::unique_ptr<Channel> tcp_connect(const HostPort& addr, int timeout_ms = 10000);

}  // namespace fusion
