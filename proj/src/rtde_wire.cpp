#include "deskcell/rtde_wire.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <stdexcept>

namespace deskcell::rtde {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string rest() {
    std::string s(reinterpret_cast<const char*>(b_.data()) + pos_, b_.size() - pos_);
    pos_ = b_.size();
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw ProtocolError("payload too short");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void write_payload(Writer& w, const Message& m) {
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Hello> || std::is_same_v<T, HelloAck>) {
          w.u16(msg.version);
        } else if constexpr (std::is_same_v<T, SubscribeRequest>) {
          w.f64(msg.frequency_hz);
          w.u8(static_cast<std::uint8_t>(msg.fields.size()));
          for (auto f : msg.fields) w.u8(static_cast<std::uint8_t>(f));
        } else if constexpr (std::is_same_v<T, StatePacket>) {
          w.u64(msg.seq);
          w.f64(msg.timestamp);
          for (double x : msg.q) w.f64(x);
          for (double x : msg.qd) w.f64(x);
          for (double x : msg.ee_pose) w.f64(x);
          w.f64(msg.gripper);
        } else if constexpr (std::is_same_v<T, SpeedJCommand>) {
          for (double x : msg.qd_target) w.f64(x);
          w.f64(msg.accel);
          w.f64(msg.valid_for);
        } else if constexpr (std::is_same_v<T, GripperCommand>) {
          w.u8(static_cast<std::uint8_t>(msg.target));
        } else if constexpr (std::is_same_v<T, ErrorMessage>) {
          w.u16(msg.code);
          w.bytes(msg.text);
        }
      },
      m);
}

Message read_payload(MessageKind kind, std::span<const std::uint8_t> payload) {
  Reader r(payload);
  auto done = [&](Message m) {
    if (r.remaining() != 0) throw ProtocolError(std::string("trailing bytes in ") + kind_name(kind));
    try {
      validate(m);
    } catch (const std::invalid_argument& e) {
      throw ProtocolError(e.what());
    }
    return m;
  };
  switch (kind) {
    case MessageKind::hello:
      return done(Hello{r.u16()});
    case MessageKind::hello_ack:
      return done(HelloAck{r.u16()});
    case MessageKind::subscribe: {
      SubscribeRequest s;
      s.frequency_hz = r.f64();
      const auto n = r.u8();
      s.fields.clear();
      for (int i = 0; i < n; ++i) {
        const auto code = r.u8();
        if (code > 3) throw ProtocolError("unknown state field code " + std::to_string(code));
        s.fields.push_back(static_cast<StateField>(code));
      }
      return done(s);
    }
    case MessageKind::start:
      return done(Start{});
    case MessageKind::state: {
      constexpr std::size_t fixed = 8 + 8 + 56 + 8;
      if (payload.size() < fixed + 16 || (payload.size() - fixed) % 16 != 0)
        throw ProtocolError("STATE payload length " + std::to_string(payload.size()) + " is not a valid layout");
      const std::size_t dof = (payload.size() - fixed) / 16;
      StatePacket s;
      s.seq = r.u64();
      s.timestamp = r.f64();
      s.q.resize(dof);
      s.qd.resize(dof);
      for (auto& x : s.q) x = r.f64();
      for (auto& x : s.qd) x = r.f64();
      for (auto& x : s.ee_pose) x = r.f64();
      s.gripper = r.f64();
      return done(s);
    }
    case MessageKind::cmd_speedj: {
      if (payload.size() < 24 || payload.size() % 8 != 0)
        throw ProtocolError("CMD_SPEEDJ payload length " + std::to_string(payload.size()) + " is not a valid layout");
      SpeedJCommand c;
      c.qd_target.resize((payload.size() - 16) / 8);
      for (auto& x : c.qd_target) x = r.f64();
      c.accel = r.f64();
      c.valid_for = r.f64();
      return done(c);
    }
    case MessageKind::cmd_gripper: {
      const auto t = r.u8();
      if (t > 1) throw ProtocolError("unknown gripper target " + std::to_string(t));
      return done(GripperCommand{static_cast<GripperTarget>(t)});
    }
    case MessageKind::stop:
      return done(Stop{});
    case MessageKind::error: {
      ErrorMessage e;
      e.code = r.u16();
      e.text = r.rest();
      return done(e);
    }
  }
  throw ProtocolError("unknown message kind");
}

bool known_kind(std::uint8_t k) {
  switch (k) {
    case 0x01: case 0x02: case 0x03: case 0x04: case 0x05:
    case 0x06: case 0x07: case 0x08: case 0x7F:
      return true;
    default:
      return false;
  }
}

}  // namespace

MessageKind kind_of(const Message& m) {
  static constexpr MessageKind kinds[] = {
      MessageKind::hello,      MessageKind::hello_ack,   MessageKind::subscribe,
      MessageKind::start,      MessageKind::state,       MessageKind::cmd_speedj,
      MessageKind::cmd_gripper, MessageKind::stop,       MessageKind::error};
  return kinds[m.index()];
}

const char* kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::hello: return "HELLO";
    case MessageKind::hello_ack: return "HELLO_ACK";
    case MessageKind::subscribe: return "SUBSCRIBE";
    case MessageKind::start: return "START";
    case MessageKind::state: return "STATE";
    case MessageKind::cmd_speedj: return "CMD_SPEEDJ";
    case MessageKind::cmd_gripper: return "CMD_GRIPPER";
    case MessageKind::stop: return "STOP";
    case MessageKind::error: return "ERROR";
  }
  return "?";
}

void validate(const Message& m) {
  std::visit(
      [](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, SubscribeRequest>) {
          if (!(msg.frequency_hz > 0.0 && msg.frequency_hz <= 1000.0))
            throw std::invalid_argument("subscription frequency must be in (0, 1000] Hz");
          if (msg.fields.empty()) throw std::invalid_argument("subscription field list is empty");
          std::set<StateField> seen(msg.fields.begin(), msg.fields.end());
          if (seen.size() != msg.fields.size())
            throw std::invalid_argument("subscription field list has duplicates");
        } else if constexpr (std::is_same_v<T, StatePacket>) {
          if (msg.q.empty() || msg.q.size() != msg.qd.size())
            throw std::invalid_argument("STATE q/qd must have equal, non-zero length");
        } else if constexpr (std::is_same_v<T, SpeedJCommand>) {
          if (msg.qd_target.empty()) throw std::invalid_argument("CMD_SPEEDJ has no joints");
          if (!all_finite(msg.qd_target) || !std::isfinite(msg.accel) || !std::isfinite(msg.valid_for))
            throw std::invalid_argument("CMD_SPEEDJ has non-finite values");
          if (!(msg.accel > 0.0)) throw std::invalid_argument("CMD_SPEEDJ accel must be positive");
          if (!(msg.valid_for > 0.0)) throw std::invalid_argument("CMD_SPEEDJ valid_for must be positive");
        }
      },
      m);
}

std::vector<std::uint8_t> encode(const Message& m) {
  Writer payload;
  write_payload(payload, m);
  auto body = payload.take();

  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u8(static_cast<std::uint8_t>(kind_of(m)));
  w.u32(static_cast<std::uint32_t>(body.size()));
  auto out = w.take();
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_check = std::min(bytes.size(), kMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(magic_check), kMagic.begin()))
    throw FramingError("bad frame magic");
  if (bytes.size() < kHeaderSize) return NeedMoreBytes{};

  const std::uint8_t kind = bytes[4];
  if (!known_kind(kind)) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02X", kind);
    throw ProtocolError(std::string("unknown message kind ") + buf);
  }
  Reader hdr(bytes.subspan(5, 4));
  const std::uint32_t len = hdr.u32();
  if (len > kMaxPayload) throw ProtocolError("payload length exceeds 1 MiB");
  if (bytes.size() < kHeaderSize + len) return NeedMoreBytes{};

  auto msg = read_payload(static_cast<MessageKind>(kind), bytes.subspan(kHeaderSize, len));
  return Decoded{std::move(msg), kHeaderSize + len};
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next() {
  auto r = decode(std::span<const std::uint8_t>(buf_).subspan(pos_));
  if (std::holds_alternative<NeedMoreBytes>(r)) return std::nullopt;
  auto& d = std::get<Decoded>(r);
  pos_ += d.consumed;
  if (pos_ > 4096 && pos_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  return std::move(d.message);
}

}  // namespace deskcell::rtde
