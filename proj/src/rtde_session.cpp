#include "deskcell/rtde_session.hpp"

namespace deskcell::rtde {

namespace {

StatePacket make_packet(const SessionState& s, const RobotSnapshot& snap) {
  StatePacket p;
  p.seq = s.next_seq;
  p.timestamp = snap.t;
  p.q.assign(snap.q.size(), 0.0);
  p.qd.assign(snap.qd.size(), 0.0);
  p.ee_pose = {0, 0, 0, 0, 0, 0, 0};
  p.gripper = 0.0;
  for (auto f : s.subscription.fields) {
    switch (f) {
      case StateField::q: p.q = snap.q; break;
      case StateField::qd: p.qd = snap.qd; break;
      case StateField::ee_pose: p.ee_pose = snap.ee_pose; break;
      case StateField::gripper: p.gripper = snap.gripper; break;
    }
  }
  return p;
}

StepResult fail(StepResult r, std::string why) {
  r.state.phase = SessionPhase::closed;
  r.outgoing.push_back(ErrorMessage{static_cast<std::uint16_t>(ErrorCode::protocol), why});
  r.protocol_error = std::move(why);
  return r;
}

StepResult on_message(StepResult r, const Message& m, double now) {
  auto& s = r.state;
  const auto kind = kind_of(m);
  auto out_of_order = [&] {
    return fail(std::move(r), std::string(kind_name(kind)) + " not allowed in this session phase");
  };

  switch (kind) {
    case MessageKind::hello: {
      if (s.phase != SessionPhase::closed) return out_of_order();
      const auto& h = std::get<Hello>(m);
      if (h.version != kProtocolVersion) {
        auto res = fail(std::move(r), "unsupported protocol version " + std::to_string(h.version));
        res.outgoing.back() = ErrorMessage{static_cast<std::uint16_t>(ErrorCode::unsupported_version),
                                           *res.protocol_error};
        return res;
      }
      s.phase = SessionPhase::handshaken;
      r.outgoing.push_back(HelloAck{kProtocolVersion});
      return r;
    }
    case MessageKind::subscribe:
      if (s.phase != SessionPhase::handshaken && s.phase != SessionPhase::subscribed) return out_of_order();
      s.subscription = std::get<SubscribeRequest>(m);
      s.phase = SessionPhase::subscribed;
      return r;
    case MessageKind::start:
      if (s.phase != SessionPhase::subscribed) return out_of_order();
      s.phase = SessionPhase::streaming;
      s.stream_clock_started = false;
      return r;
    case MessageKind::cmd_speedj:
      if (s.phase != SessionPhase::streaming) return out_of_order();
      s.last_cmd_time = now;
      s.watchdog_tripped = false;
      r.actions.push_back(ApplySpeedJ{std::get<SpeedJCommand>(m), now});
      return r;
    case MessageKind::cmd_gripper:
      if (s.phase != SessionPhase::streaming) return out_of_order();
      s.last_cmd_time = now;
      s.watchdog_tripped = false;
      r.actions.push_back(ApplyGripper{std::get<GripperCommand>(m).target});
      return r;
    case MessageKind::stop:
      if (s.phase != SessionPhase::streaming) return out_of_order();
      s.phase = SessionPhase::subscribed;
      s.last_cmd_time.reset();
      r.actions.push_back(SafeStop{});
      return r;
    case MessageKind::error:
      s.phase = SessionPhase::closed;
      r.protocol_error = "peer reported: " + std::get<ErrorMessage>(m).text;
      return r;
    case MessageKind::hello_ack:
    case MessageKind::state:
      return out_of_order();
  }
  return out_of_order();
}

StepResult on_tick(StepResult r, const TimerTick& tick) {
  auto& s = r.state;
  if (s.phase != SessionPhase::streaming) return r;

  if (!s.stream_clock_started) {
    s.stream_clock_started = true;
    s.stream_start = tick.now;
    s.next_seq = 0;
  }
  // Due times are computed from the packet index, never accumulated.
  constexpr double eps = 1e-9;
  const double period = 1.0 / s.subscription.frequency_hz;
  while (s.stream_start + static_cast<double>(s.next_seq) * period <= tick.now + eps) {
    r.outgoing.push_back(make_packet(s, tick.snapshot));
    ++s.next_seq;
  }

  if (s.last_cmd_time && !s.watchdog_tripped &&
      watchdog_check(*s.last_cmd_time, tick.now, s.watchdog_timeout) == WatchdogVerdict::safe_stop) {
    s.watchdog_tripped = true;
    r.actions.push_back(SafeStop{});
  }
  return r;
}

}  // namespace

WatchdogVerdict watchdog_check(double last_cmd_time, double now, double timeout) {
  return (now - last_cmd_time > timeout) ? WatchdogVerdict::safe_stop : WatchdogVerdict::ok;
}

StepResult session_step(SessionState state, const SessionEvent& event) {
  StepResult r;
  r.state = std::move(state);
  if (const auto* rx = std::get_if<Received>(&event)) return on_message(std::move(r), rx->message, rx->now);
  return on_tick(std::move(r), std::get<TimerTick>(event));
}

}  // namespace deskcell::rtde
