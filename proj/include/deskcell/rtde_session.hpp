#pragma once

// Server-side session state machine. The core never reads a clock: every
// event carries the caller's notion of "now", which keeps timing tests
// deterministic on a simulated clock.
//
//   CLOSED --HELLO--> HANDSHAKEN --SUBSCRIBE--> SUBSCRIBED --START--> STREAMING
//
// Anything out of order closes the session with a protocol error.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "deskcell/rtde_wire.hpp"

namespace deskcell::rtde {

enum class SessionPhase { closed, handshaken, subscribed, streaming };

enum class WatchdogVerdict { ok, safe_stop };

/// SAFE_STOP iff now - last_cmd_time > timeout.
WatchdogVerdict watchdog_check(double last_cmd_time, double now, double timeout);

struct SessionState {
  SessionPhase phase = SessionPhase::closed;
  SubscribeRequest subscription;
  double watchdog_timeout = 0.1;

  // streaming schedule; packet k is due at stream_start + k / frequency
  bool stream_clock_started = false;
  double stream_start = 0.0;
  std::uint64_t next_seq = 0;

  std::optional<double> last_cmd_time;
  bool watchdog_tripped = false;
};

/// Robot state as seen by the session at a tick.
struct RobotSnapshot {
  double t = 0.0;
  std::vector<double> q, qd;
  std::array<double, 7> ee_pose{0, 0, 0, 1, 0, 0, 0};
  double gripper = 1.0;
};

struct Received {
  Message message;
  double now = 0.0;
};

struct TimerTick {
  double now = 0.0;
  RobotSnapshot snapshot;
};

using SessionEvent = std::variant<Received, TimerTick>;

struct ApplySpeedJ {
  SpeedJCommand command;
  double received_at = 0.0;
};
struct ApplyGripper {
  GripperTarget target = GripperTarget::open;
};
struct SafeStop {};
using SessionAction = std::variant<ApplySpeedJ, ApplyGripper, SafeStop>;

struct StepResult {
  SessionState state;
  std::vector<Message> outgoing;
  std::vector<SessionAction> actions;
  std::optional<std::string> protocol_error;  // set => state is CLOSED and the link must drop
};

StepResult session_step(SessionState state, const SessionEvent& event);

}  // namespace deskcell::rtde
