#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>

#include "deskcell/rtde_session.hpp"
#include "deskcell/rtde_wire.hpp"
#include "helpers.hpp"
#include "rtde_harness.hpp"

using namespace deskcell;
using namespace deskcell::rtde;

namespace {

std::vector<std::uint8_t> golden(const std::string& name) {
  std::ifstream in(testutil::source_dir() / "golden" / "rtdx" / (name + ".bin"), std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("rtde_wire") {
  TEST_CASE("HELLO encodes to the documented bytes") {
    const std::vector<std::uint8_t> expected{0x52, 0x54, 0x44, 0x58, 0x01, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00};
    CHECK(encode(Hello{1}) == expected);
  }

  TEST_CASE("STATE with six joints has a 176 byte payload") {
    StatePacket p;
    p.q.assign(6, 0.0);
    p.qd.assign(6, 0.0);
    const auto bytes = encode(p);
    const std::size_t payload = 8 + 8 + 6 * 8 + 6 * 8 + 7 * 8 + 8;
    CHECK(payload == 176);
    CHECK(bytes.size() == kHeaderSize + payload);
    CHECK(bytes[5] == 176);
    CHECK(bytes[6] == 0);
  }

  TEST_CASE("golden frames are byte exact in both directions") {
    for (const auto& [name, msg] : testutil::golden_messages()) {
      CAPTURE(name);
      const auto bytes = golden(name);
      CHECK(encode(msg) == bytes);
      const auto r = decode(bytes);
      REQUIRE(std::holds_alternative<Decoded>(r));
      CHECK(std::get<Decoded>(r).consumed == bytes.size());
      CHECK(std::get<Decoded>(r).message == msg);
    }
  }

  TEST_CASE("codec round trip over random messages of every kind") {
    std::mt19937_64 g(11);
    for (int i = 0; i < 10000; ++i) {
      const Message m = testutil::random_message(g, i);
      const auto bytes = encode(m);
      const auto r = decode(bytes);
      REQUIRE(std::holds_alternative<Decoded>(r));
      CHECK(std::get<Decoded>(r).consumed == bytes.size());
      CHECK(std::get<Decoded>(r).message == m);
    }
  }

  TEST_CASE("partial frames need more bytes") {
    const auto bytes = encode(SpeedJCommand{testutil::kQd6, 2.0, 0.1});
    for (std::size_t n = 0; n < bytes.size(); ++n)
      CHECK(std::holds_alternative<NeedMoreBytes>(decode(std::span(bytes.data(), n))));
  }

  TEST_CASE("bad magic is a framing error") {
    const std::vector<std::uint8_t> junk{0, 0, 0, 0, 1, 2, 0, 0, 0, 1, 0};
    CHECK_THROWS_AS(decode(junk), FramingError);
  }

  TEST_CASE("unknown kinds and oversized payloads are protocol errors") {
    auto bytes = encode(Start{});
    bytes[4] = 0x42;
    CHECK_THROWS_AS(decode(bytes), ProtocolError);
    std::vector<std::uint8_t> big{0x52, 0x54, 0x44, 0x58, 0x05, 0x01, 0x00, 0x10, 0x00};
    CHECK_THROWS_AS(decode(big), ProtocolError);
    auto state = encode(StatePacket{0, 0.0, {1.0}, {1.0}, {}, 1.0});
    state.push_back(0);
    state[5] += 1;
    CHECK_THROWS_AS(decode(state), ProtocolError);
  }

  TEST_CASE("two concatenated frames decode one at a time") {
    const auto a = encode(Hello{1});
    const auto b = encode(GripperCommand{GripperTarget::close});
    std::vector<std::uint8_t> both = a;
    both.insert(both.end(), b.begin(), b.end());
    const auto r = decode(both);
    REQUIRE(std::holds_alternative<Decoded>(r));
    CHECK(std::get<Decoded>(r).consumed == 11);
    CHECK(std::get<Decoded>(r).message == Message(Hello{1}));

    FrameReader reader;
    for (auto byte : both) reader.feed(std::span(&byte, 1));
    CHECK(reader.next() == Message(Hello{1}));
    CHECK(reader.next() == Message(GripperCommand{GripperTarget::close}));
    CHECK(!reader.next());
  }

  TEST_CASE("invalid messages are rejected") {
    CHECK_THROWS(validate(SubscribeRequest{0.0, {StateField::q}}));
    CHECK_THROWS(validate(SubscribeRequest{1001.0, {StateField::q}}));
    CHECK_THROWS(validate(SubscribeRequest{10.0, {}}));
    CHECK_THROWS(validate(SubscribeRequest{10.0, {StateField::q, StateField::q}}));
    CHECK_THROWS(validate(SpeedJCommand{{1.0}, 0.0, 0.1}));
    CHECK_THROWS(validate(SpeedJCommand{{std::nan("")}, 1.0, 0.1}));
    CHECK_THROWS(validate(SpeedJCommand{{1.0}, 1.0, 0.0}));
  }
}

TEST_SUITE("rtde_session") {
  TEST_CASE("HELLO opens the handshake") {
    SessionState s;
    const auto r = session_step(s, Received{Hello{1}, 0.0});
    CHECK(r.state.phase == SessionPhase::handshaken);
    REQUIRE(r.outgoing.size() == 1);
    CHECK(std::holds_alternative<HelloAck>(r.outgoing[0]));
  }

  TEST_CASE("out of order messages close the session") {
    SessionState s;
    auto r = session_step(s, Received{SubscribeRequest{}, 0.0});
    CHECK(r.state.phase == SessionPhase::closed);
    CHECK(r.protocol_error);
    r = session_step(s, Received{SpeedJCommand{{1.0}, 1.0, 0.1}, 0.0});
    CHECK(r.protocol_error);
    r = session_step(s, Received{Hello{7}, 0.0});
    CHECK(r.protocol_error);
  }

  TEST_CASE("streaming at 125 Hz for 2 s yields 250 packets") {
    testutil::SessionHarness h(125.0);
    for (int i = 0; i < 250; ++i) h.tick(i / 125.0);
    REQUIRE(h.packets.size() == 250);
    for (std::size_t i = 0; i < h.packets.size(); ++i) CHECK(h.packets[i].seq == i);
  }

  TEST_CASE("packet count is round(f T) for assorted rates") {
    for (double f : {1.0, 10.0, 30.0, 62.5, 100.0, 125.0, 500.0}) {
      CAPTURE(f);
      testutil::SessionHarness h(f);
      const double T = 8.0;
      const int ticks = static_cast<int>(T * 1000);
      for (int i = 0; i < ticks; ++i) h.tick(i / 1000.0);
      CHECK(h.packets.size() == static_cast<std::size_t>(std::llround(f * T)));
    }
  }

  TEST_CASE("sequence numbers are gapless over ten thousand packets") {
    testutil::SessionHarness h(125.0);
    for (int i = 0; i < 12000; ++i) h.tick(i / 125.0);
    REQUIRE(h.packets.size() == 12000);
    for (std::size_t i = 1; i < h.packets.size(); ++i) {
      CHECK(h.packets[i].seq == h.packets[i - 1].seq + 1);
      CHECK(h.packets[i].timestamp >= h.packets[i - 1].timestamp);
    }
  }

  TEST_CASE("unsubscribed fields are zero filled") {
    SessionState s;
    s = session_step(s, Received{Hello{1}, 0}).state;
    s = session_step(s, Received{SubscribeRequest{125.0, {StateField::q}}, 0}).state;
    s = session_step(s, Received{Start{}, 0}).state;
    RobotSnapshot snap{0.0, {1, 2}, {3, 4}, {1, 1, 1, 1, 0, 0, 0}, 0.5};
    const auto r = session_step(s, TimerTick{0.0, snap});
    REQUIRE(r.outgoing.size() == 1);
    const auto& p = std::get<StatePacket>(r.outgoing[0]);
    CHECK(p.q == std::vector<double>{1, 2});
    CHECK(p.qd == std::vector<double>{0, 0});
    CHECK(p.gripper == 0.0);
  }

  TEST_CASE("watchdog verdicts") {
    CHECK(watchdog_check(1.0, 1.05, 0.1) == WatchdogVerdict::ok);
    CHECK(watchdog_check(1.0, 1.11, 0.1) == WatchdogVerdict::safe_stop);
  }

  TEST_CASE("commands at 62.5 Hz never trip the watchdog") {
    testutil::SessionHarness h(125.0);
    for (int i = 0; i < 1250; ++i) {
      const double now = i / 125.0;
      if (i % 2 == 0) h.receive(SpeedJCommand{{0.1}, 1.0, 0.1}, now);
      h.tick(now);
    }
    CHECK(h.safe_stops.empty());
  }

  TEST_CASE("a single gap beyond the timeout trips the watchdog once within one tick") {
    testutil::SessionHarness h(125.0);
    const double dt = 1.0 / 125.0;
    std::vector<double> commands;
    for (int k = 0; k * 0.016 <= 1.0; ++k) commands.push_back(k * 0.016);
    const double last_before_gap = commands.back();
    for (double t = last_before_gap + 0.110; t < 10.0; t += 0.016) commands.push_back(t);
    std::size_t next = 0;
    for (int i = 0; i < 1250; ++i) {
      const double now = i * dt;
      while (next < commands.size() && commands[next] <= now) h.receive(SpeedJCommand{{0.1}, 1.0, 0.1}, commands[next++]);
      h.tick(now);
    }
    REQUIRE(h.safe_stops.size() == 1);
    CHECK(h.safe_stops[0] > last_before_gap + 0.1);
    CHECK(h.safe_stops[0] <= last_before_gap + 0.1 + dt + 1e-12);
  }

}
