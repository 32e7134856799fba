#pragma once

// Binary real-time data-exchange framing.
//
// Every frame is little-endian:
//   magic "RTDX" (52 54 44 58) | kind u8 | payload_len u32 | payload
// so a frame is always 9 + payload_len bytes. Unknown kinds are rejected,
// never skipped, and a bad magic means the stream cannot be trusted again.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "deskcell/errors.hpp"

namespace deskcell::rtde {

inline constexpr std::array<std::uint8_t, 4> kMagic{0x52, 0x54, 0x44, 0x58};
inline constexpr std::size_t kHeaderSize = 9;
inline constexpr std::uint32_t kMaxPayload = 1u << 20;
inline constexpr std::uint16_t kProtocolVersion = 1;

enum class MessageKind : std::uint8_t {
  hello = 0x01,
  hello_ack = 0x02,
  subscribe = 0x03,
  start = 0x04,
  state = 0x05,
  cmd_speedj = 0x06,
  cmd_gripper = 0x07,
  stop = 0x08,
  error = 0x7F,
};

enum class StateField : std::uint8_t { q = 0, qd = 1, ee_pose = 2, gripper = 3 };

struct Hello {
  std::uint16_t version = kProtocolVersion;
  bool operator==(const Hello&) const = default;
};

struct HelloAck {
  std::uint16_t version = kProtocolVersion;
  bool operator==(const HelloAck&) const = default;
};

/// Output recipe: a rate in (0, 1000] Hz and a non-empty, duplicate-free
/// list of fields. Unsubscribed fields are sent zero-filled.
struct SubscribeRequest {
  double frequency_hz = 125.0;
  std::vector<StateField> fields{StateField::q, StateField::qd, StateField::ee_pose,
                                 StateField::gripper};
  bool operator==(const SubscribeRequest&) const = default;
};

struct Start {
  bool operator==(const Start&) const = default;
};

struct StatePacket {
  std::uint64_t seq = 0;
  double timestamp = 0.0;        // node clock, s
  std::vector<double> q;         // rad
  std::vector<double> qd;        // rad/s
  std::array<double, 7> ee_pose{0, 0, 0, 1, 0, 0, 0};  // x y z qw qx qy qz
  double gripper = 1.0;          // aperture, 1 = open
  bool operator==(const StatePacket&) const = default;
};

struct SpeedJCommand {
  std::vector<double> qd_target;  // rad/s
  double accel = 1.0;             // rad/s^2
  double valid_for = 0.1;         // s
  bool operator==(const SpeedJCommand&) const = default;
};

enum class GripperTarget : std::uint8_t { open = 0, close = 1 };

struct GripperCommand {
  GripperTarget target = GripperTarget::open;
  bool operator==(const GripperCommand&) const = default;
};

struct Stop {
  bool operator==(const Stop&) const = default;
};

enum class ErrorCode : std::uint16_t {
  protocol = 1,
  not_commander = 2,
  unsupported_version = 3,
  overload = 4,
};

struct ErrorMessage {
  std::uint16_t code = 0;
  std::string text;
  bool operator==(const ErrorMessage&) const = default;
};

using Message = std::variant<Hello, HelloAck, SubscribeRequest, Start, StatePacket, SpeedJCommand,
                             GripperCommand, Stop, ErrorMessage>;

MessageKind kind_of(const Message& m);
const char* kind_name(MessageKind k);

/// Throws std::invalid_argument when a message violates its type invariants.
void validate(const Message& m);

std::vector<std::uint8_t> encode(const Message& m);

struct NeedMoreBytes {};
struct Decoded {
  Message message;
  std::size_t consumed = 0;
};
using DecodeResult = std::variant<NeedMoreBytes, Decoded>;

/// Decodes at most one frame from the front of `bytes`.
/// Throws FramingError on bad magic and ProtocolError on unknown kinds,
/// oversized or malformed payloads.
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Accumulates a byte stream and yields complete messages in order.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete message, or nullopt. Propagates decode errors.
  std::optional<Message> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace deskcell::rtde
