#include <gtest/gtest.h>

#include <thread>

#include "fusion/channel.hpp"
#include "fusion/error.hpp"

using namespace fusion;
using wire::Frame;
using wire::MsgType;

TEST(MemoryChannel, DeliversInOrderAndCountsBytes) {
  auto [a, b] = make_memory_channel_pair();
  a->send(Frame{MsgType::ShareVector, {1, 2}});
  a->send(Frame{MsgType::Opening, {3}});
  EXPECT_EQ(b->recv(), (Frame{MsgType::ShareVector, {1, 2}}));
  EXPECT_EQ(b->expect(MsgType::Opening).words, (std::vector<Ring>{3}));
  EXPECT_EQ(a->bytes_sent(), 24u + 16u);
  EXPECT_EQ(b->bytes_received(), 40u);
}

TEST(MemoryChannel, OutOfOrderAndAbort) {
  auto [a, b] = make_memory_channel_pair();
  a->send(Frame{MsgType::Result, {}});
  EXPECT_THROW(b->expect(MsgType::Opening), ProtocolError);
  a->send_abort(1);
  try {
    b->expect(MsgType::Opening);
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("abort"), std::string::npos);
  }
}

TEST(MemoryChannel, CloseUnblocksReceiver) {
  auto [a, b] = make_memory_channel_pair();
  std::thread t([&] { EXPECT_THROW(b->recv(), ProtocolError); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  a->close();
  t.join();
}

TEST(MemoryChannel, ObserverSeesFrames) {
  auto [a, b] = make_memory_channel_pair();
  int sent = 0, received = 0;
  a->set_observer([&](Direction d, const Frame&) { (d == Direction::Sent ? sent : received)++; });
  a->send(Frame{MsgType::Opening, {1}});
  b->send(Frame{MsgType::Opening, {1}});
  a->recv();
  EXPECT_EQ(sent, 1);
  EXPECT_EQ(received, 1);
}

TEST(TcpChannel, LoopbackExchange) {
  TcpListener listener(HostPort{"127.0.0.1", 0});
  ASSERT_NE(listener.port(), 0);
  std::thread server([&] {
    auto c = listener.accept();
    auto f = c->recv();
    f.words.push_back(99);
    c->send(f);
  });
  auto c = tcp_connect(HostPort{"127.0.0.1", listener.port()});
  c->send(Frame{MsgType::MaskedValue, {1, 2, 3}});
  EXPECT_EQ(c->recv(), (Frame{MsgType::MaskedValue, {1, 2, 3, 99}}));
  server.join();
  EXPECT_EQ(c->bytes_sent(), 32u);
  EXPECT_EQ(c->bytes_received(), 40u);
}

TEST(HostPort, Parse) {
  const auto hp = parse_host_port("10.0.0.1:8080");
  EXPECT_EQ(hp.host, "10.0.0.1");
  EXPECT_EQ(hp.port, 8080);
  EXPECT_THROW(parse_host_port("nohost"), FormatError);
  EXPECT_THROW(parse_host_port("h:99999"), FormatError);
}
