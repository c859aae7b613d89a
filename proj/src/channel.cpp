#include "fusion/channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "fusion/error.hpp"

namespace fusion {

void Channel::send(const wire::Frame& frame) {
  const auto bytes = wire::encode(frame);
  write_bytes(bytes);
  sent_ += bytes.size();
  if (observer_) observer_(Direction::Sent, frame);
}

wire::Frame Channel::recv() {
  std::array<std::uint8_t, wire::kHeaderSize> head{};
  read_exact(head);
  const wire::Header h = wire::decode_header(std::span<const std::uint8_t, wire::kHeaderSize>(head));
  std::vector<std::uint8_t> payload(h.payload_len);
  if (!payload.empty()) read_exact(payload);
  received_ += wire::kHeaderSize + payload.size();
  wire::Frame frame{h.type, wire::decode_payload(payload)};
  if (observer_) observer_(Direction::Received, frame);
  return frame;
}

wire::Frame Channel::expect(wire::MsgType type) {
  wire::Frame f = recv();
  if (f.type == type) return f;
  if (f.type == wire::MsgType::Abort) {
    const std::uint64_t code = f.words.empty() ? 0 : f.words.front();
    throw PeerGoneError("peer aborted the session (code " + std::to_string(code) + ")");
  }
  throw ProtocolError("protocol message out of order: expected " + std::string(wire::to_string(type)) +
                      ", got " + std::string(wire::to_string(f.type)));
}

void Channel::send_abort(std::uint64_t code) noexcept {
  try {
    send(wire::Frame{wire::MsgType::Abort, {code}});
  } catch (...) {
  }
}

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> bytes;
  bool closed = false;
};

class MemoryChannel final : public Channel {
 public:
  MemoryChannel(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~MemoryChannel() override { close(); }

  void close() noexcept override {
    for (const auto& p : {in_, out_}) {
      std::lock_guard lock(p->mu);
      p->closed = true;
      p->cv.notify_all();
    }
  }

 protected:
  void write_bytes(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw PeerGoneError("transport failure: channel closed");
    out_->bytes.insert(out_->bytes.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  void read_exact(std::span<std::uint8_t> out) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return in_->bytes.size() >= out.size() || in_->closed; });
    if (in_->bytes.size() < out.size()) throw PeerGoneError("transport failure: channel closed");
    std::copy_n(in_->bytes.begin(), out.size(), out.begin());
    in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(out.size()));
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpChannel() override {
    close();
    ::close(fd_);
  }

  void close() noexcept override { ::shutdown(fd_, SHUT_RDWR); }

 protected:
  void write_bytes(std::span<const std::uint8_t> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ProtocolError(std::string("transport failure: send: ") + std::strerror(errno));
      done += static_cast<std::size_t>(n);
    }
  }

  void read_exact(std::span<std::uint8_t> out) override {
    std::size_t done = 0;
    while (done < out.size()) {
      const ssize_t n = ::recv(fd_, out.data() + done, out.size() - done, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n == 0) throw PeerGoneError("transport failure: connection closed by peer");
      if (n < 0) throw ProtocolError(std::string("transport failure: recv: ") + std::strerror(errno));
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  int fd_;
};

addrinfo* resolve(const HostPort& addr, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  const int rc = ::getaddrinfo(addr.host.empty() ? nullptr : addr.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw ProtocolError("cannot resolve " + addr.str() + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_channel_pair() {
  auto a = std::make_shared<Pipe>();
  auto b = std::make_shared<Pipe>();
  return {std::make_unique<MemoryChannel>(a, b), std::make_unique<MemoryChannel>(b, a)};
}

HostPort parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw FormatError("address must look like host:port, got \"" + text + "\"");
  HostPort hp;
  hp.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(port, &used);
    if (used != port.size() || v > 65535) throw std::out_of_range("port");
    hp.port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw FormatError("bad port in address \"" + text + "\"");
  }
  return hp;
}

TcpListener::TcpListener(const HostPort& addr) {
  addrinfo* res = resolve(addr, true);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    throw ProtocolError(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 4) != 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd_);
    throw ProtocolError("cannot listen on " + addr.str() + ": " + err);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<TcpChannel>(fd);
    if (errno != EINTR) throw ProtocolError(std::string("accept: ") + std::strerror(errno));
  }
}

std::unique_ptr<Channel> tcp_connect(const HostPort& addr, int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    addrinfo* res = resolve(addr, false);
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      return std::make_unique<TcpChannel>(fd);
    }
    const std::string err = std::strerror(errno);
    if (fd >= 0) ::close(fd);
    ::freeaddrinfo(res);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw ProtocolError("transport failure: cannot connect to " + addr.str() + ": " + err);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

}  // namespace fusion
