#include "deskcell/sim_robot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deskcell {

namespace {

struct JointMotion {
  double q, qd;
};

// Velocity ramps toward target at rate a, then holds; q is the exact integral.
JointMotion ramp(double q, double qd, double target, double a, double dt) {
  const double diff = target - qd;
  const double dv = a * dt;
  if (std::abs(diff) <= dv) {
    const double tau = a > 0.0 ? std::abs(diff) / a : 0.0;
    return {q + 0.5 * (qd + target) * tau + target * (dt - tau), target};
  }
  const double qd_new = qd + std::copysign(dv, diff);
  return {q + 0.5 * (qd + qd_new) * dt, qd_new};
}

bool brakeable(const JointMotion& m, double a, double q_min, double q_max) {
  constexpr double eps = 1e-12;
  if (m.q > q_max + eps || m.q < q_min - eps) return false;
  const double stop = m.qd * m.qd / (2.0 * a);
  if (m.qd > 0.0) return m.q + stop <= q_max + eps;
  if (m.qd < 0.0) return m.q - stop >= q_min - eps;
  return true;
}

}  // namespace

JointLimits JointLimits::stack(const JointLimits& a, const JointLimits& b) {
  auto cat = [](const JointVector& x, const JointVector& y) {
    JointVector r(x.size() + y.size());
    r << x, y;
    return r;
  };
  return {cat(a.q_min, b.q_min), cat(a.q_max, b.q_max), cat(a.qd_max, b.qd_max), cat(a.qdd_max, b.qdd_max)};
}

ArmState step(const JointLimits& lim, const ArmState& s, const std::optional<JointCommand>& cmd, double dt) {
  ArmState out = s;
  const auto n = s.q.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a_max = lim.qdd_max[i];
    double target = cmd ? cmd->qd_target[i] : 0.0;
    if (!std::isfinite(target)) target = 0.0;
    target = std::clamp(target, -lim.qd_max[i], lim.qd_max[i]);
    const double a = cmd ? std::min(cmd->accel, a_max) : a_max;

    JointMotion m = ramp(s.q[i], s.qd[i], target, a, dt);
    if (!brakeable(m, a_max, lim.q_min[i], lim.q_max[i])) m = ramp(s.q[i], s.qd[i], 0.0, a_max, dt);

    if (m.q >= lim.q_max[i]) {
      m.q = lim.q_max[i];
      if (m.qd > 0.0) m.qd = 0.0;
    } else if (m.q <= lim.q_min[i]) {
      m.q = lim.q_min[i];
      if (m.qd < 0.0) m.qd = 0.0;
    }
    out.q[i] = m.q;
    out.qd[i] = m.qd;
  }
  out.t = s.t + dt;
  return out;
}

ArmState apply_gripper(ArmState state, GripperGoal goal, double dt, double rate) {
  const double target = goal == GripperGoal::open ? 1.0 : 0.0;
  const double dv = rate * dt;
  const double diff = target - state.gripper;
  state.gripper = std::abs(diff) <= dv ? target : state.gripper + std::copysign(dv, diff);
  state.gripper = std::clamp(state.gripper, 0.0, 1.0);
  return state;
}

JointVector leader_follower(const JointVector& leader_q, const FollowerMap& map) {
  if (static_cast<std::size_t>(leader_q.size()) != map.sign.size() || map.sign.size() != map.offset.size())
    throw DimensionError("follower map does not match the leader joint count");
  JointVector out(leader_q.size());
  for (Eigen::Index i = 0; i < leader_q.size(); ++i)
    out[i] = map.sign[static_cast<std::size_t>(i)] * leader_q[i] + map.offset[static_cast<std::size_t>(i)];
  return out;
}

JointVector follower_to_leader(const JointVector& follower_q, const FollowerMap& map) {
  if (static_cast<std::size_t>(follower_q.size()) != map.sign.size() || map.sign.size() != map.offset.size())
    throw DimensionError("follower map does not match the follower joint count");
  JointVector out(follower_q.size());
  // sign is +-1, so it is its own inverse
  for (Eigen::Index i = 0; i < follower_q.size(); ++i)
    out[i] = map.sign[static_cast<std::size_t>(i)] * (follower_q[i] - map.offset[static_cast<std::size_t>(i)]);
  return out;
}

Pose SerialArmKinematics::ee_pose(const JointVector& q) const {
  return compose(model_.base_pose, fk(model_.dh, q));
}

Jacobian SerialArmKinematics::ee_jacobian(const JointVector& q) const {
  Jacobian J = jacobian(model_.dh, q);
  const Eigen::Matrix3d R = model_.base_pose.orientation.toRotationMatrix();
  J.topRows<3>() = R * J.topRows<3>();
  J.bottomRows<3>() = R * J.bottomRows<3>();
  return J;
}

BimanualKinematics::BimanualKinematics(BimanualModel model, int active_arm)
    : model_(std::move(model)), active_arm_(active_arm) {
  if (active_arm_ != 0 && active_arm_ != 1) throw std::invalid_argument("active arm must be 0 or 1");
  if (model_.left.dof() != model_.right.dof()) throw DimensionError("bimanual arms must have equal dof");
}

Pose BimanualKinematics::ee_pose(const JointVector& q) const {
  if (q.size() != dof()) throw DimensionError("bimanual joint vector has wrong length");
  const auto& arm = active();
  return compose(arm.base_pose, fk(arm.dh, q.segment(active_offset(), arm.dof())));
}

Jacobian BimanualKinematics::ee_jacobian(const JointVector& q) const {
  if (q.size() != dof()) throw DimensionError("bimanual joint vector has wrong length");
  const auto& arm = active();
  SerialArmKinematics single(arm);
  Jacobian J = Jacobian::Zero(6, dof());
  J.middleCols(active_offset(), arm.dof()) = single.ee_jacobian(q.segment(active_offset(), arm.dof()));
  return J;
}

JointVector follower_velocity(const JointVector& q, const FollowerCoupling& c) {
  const auto n = static_cast<Eigen::Index>(c.map.sign.size());
  const JointVector target = leader_follower(q.segment(c.leader_offset, n), c.map);
  return c.kp * (target - q.segment(c.follower_offset, n));
}

// ---------------------------------------------------------------------------

RobotNode::RobotNode(RobotBody body, Scene scene, NodeOptions options)
    : body_(std::move(body)), options_(std::move(options)), scene_(std::move(scene)) {
  reset(body_.home, scene_, 0.0);
}

void RobotNode::reset(const JointVector& q, const Scene& scene, double t) {
  arm_.q = q;
  arm_.qd = JointVector::Zero(q.size());
  arm_.gripper = 1.0;
  arm_.t = t;
  scene_ = scene;
  collided_ = false;
  safe_stopped_ = false;
  active_.reset();
  gripper_goal_ = GripperGoal::open;
}

int RobotNode::connect(std::shared_ptr<PipeEnd> link) {
  Session s{next_id_++, std::move(link), {}, {}, false};
  s.state.watchdog_timeout = options_.watchdog_timeout;
  sessions_.push_back(std::move(s));
  return sessions_.back().id;
}

void RobotNode::send(Session& s, const rtde::Message& m) {
  const auto bytes = rtde::encode(m);
  s.link->write(bytes);
}

void RobotNode::drop(Session& s) {
  s.dead = true;
  s.link->close();
  if (commander_ == s.id) {
    commander_.reset();
    safe_stop();
  }
}

void RobotNode::safe_stop() {
  active_.reset();
  safe_stopped_ = true;
}

rtde::RobotSnapshot RobotNode::wire_snapshot() const {
  rtde::RobotSnapshot snap;
  snap.t = arm_.t;
  snap.q.assign(arm_.q.data(), arm_.q.data() + arm_.q.size());
  snap.qd.assign(arm_.qd.data(), arm_.qd.data() + arm_.qd.size());
  snap.ee_pose = body_.kinematics->ee_pose(arm_.q).to_array();
  snap.gripper = arm_.gripper;
  return snap;
}

void RobotNode::handle_result(Session& s, rtde::StepResult r, double now) {
  s.state = std::move(r.state);
  for (const auto& m : r.outgoing) send(s, m);

  auto authorized = [&] {
    if (!commander_) commander_ = s.id;
    if (*commander_ == s.id) return true;
    send(s, rtde::ErrorMessage{static_cast<std::uint16_t>(rtde::ErrorCode::not_commander),
                               "another session holds command authority"});
    return false;
  };

  for (const auto& action : r.actions) {
    if (const auto* a = std::get_if<rtde::ApplySpeedJ>(&action)) {
      if (!authorized()) continue;
      if (static_cast<Eigen::Index>(a->command.qd_target.size()) != arm_.q.size()) {
        send(s, rtde::ErrorMessage{static_cast<std::uint16_t>(rtde::ErrorCode::protocol),
                                   "CMD_SPEEDJ dof does not match the robot"});
        continue;
      }
      JointCommand jc;
      jc.qd_target = Eigen::Map<const JointVector>(a->command.qd_target.data(),
                                                   static_cast<Eigen::Index>(a->command.qd_target.size()));
      jc.accel = a->command.accel;
      active_ = ActiveCommand{std::move(jc), a->received_at + a->command.valid_for};
      safe_stopped_ = false;
    } else if (const auto* g = std::get_if<rtde::ApplyGripper>(&action)) {
      if (!authorized()) continue;
      gripper_goal_ = g->target == rtde::GripperTarget::close ? GripperGoal::close : GripperGoal::open;
    } else if (std::holds_alternative<rtde::SafeStop>(action)) {
      if (commander_ == s.id) safe_stop();
    }
  }
  if (r.protocol_error) drop(s);
  (void)now;
}

void RobotNode::tick(double now, double dt) {
  // 1. inbound
  for (auto& s : sessions_) {
    if (s.dead) continue;
    const auto bytes = s.link->read_available();
    std::size_t decoded = 0;
    try {
      s.reader.feed(bytes);
      while (auto m = s.reader.next()) {
        if (++decoded > options_.inbound_capacity) {
          send(s, rtde::ErrorMessage{static_cast<std::uint16_t>(rtde::ErrorCode::overload),
                                     "inbound queue overflow"});
          drop(s);
          break;
        }
        handle_result(s, rtde::session_step(s.state, rtde::Received{std::move(*m), now}), now);
        if (s.dead) break;
      }
    } catch (const Error& e) {
      send(s, rtde::ErrorMessage{static_cast<std::uint16_t>(rtde::ErrorCode::protocol), e.what()});
      drop(s);
    }
    if (!s.dead && s.link->closed()) drop(s);
  }

  // 2. publish state at `now`, run watchdogs
  arm_.t = now;
  const auto snap = wire_snapshot();
  for (auto& s : sessions_) {
    if (s.dead) continue;
    handle_result(s, rtde::session_step(s.state, rtde::TimerTick{now, snap}), now);
  }
  std::erase_if(sessions_, [](const Session& s) { return s.dead; });

  // 3. plant
  std::optional<JointCommand> cmd;
  if (active_ && now < active_->expires_at) cmd = active_->cmd;
  if (body_.coupling) {
    const auto& c = *body_.coupling;
    if (!cmd) cmd = JointCommand{JointVector::Zero(arm_.q.size()), std::numeric_limits<double>::infinity()};
    cmd->qd_target.segment(c.follower_offset, static_cast<Eigen::Index>(c.map.sign.size())) =
        follower_velocity(arm_.q, c);
  }
  arm_ = step(body_.limits, arm_, cmd, dt);
  arm_ = apply_gripper(arm_, gripper_goal_, dt, body_.gripper_rate);

  const Pose ee = body_.kinematics->ee_pose(arm_.q);
  scene_ = update_attachment(scene_, ee, arm_.gripper, options_.grasp);
  if (ee_collides(scene_, ee)) collided_ = true;
}

void RobotNode::close_sessions() {
  for (auto& s : sessions_) s.link->close();
  sessions_.clear();
  commander_.reset();
  safe_stop();
}

NodeSnapshot RobotNode::snapshot() const {
  return {arm_, body_.kinematics->ee_pose(arm_.q), scene_, collided_, safe_stopped_};
}

}  // namespace deskcell
