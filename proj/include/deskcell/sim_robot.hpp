#pragma once

// Simulated velocity-controlled arms and the robot node that serves them
// over the wire protocol.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deskcell/channel.hpp"
#include "deskcell/geometry.hpp"
#include "deskcell/rtde_session.hpp"
#include "deskcell/scene.hpp"

namespace deskcell {

struct JointLimits {
  JointVector q_min, q_max;  // rad
  JointVector qd_max;        // rad/s
  JointVector qdd_max;       // rad/s^2

  Eigen::Index dof() const { return q_min.size(); }
  /// Concatenation (left then right) for multi-arm bodies.
  static JointLimits stack(const JointLimits& a, const JointLimits& b);
};

struct ArmModel {
  DHParams dh;
  JointLimits limits;
  Pose base_pose;  // world frame

  int dof() const { return static_cast<int>(dh.size()); }
};

struct ArmState {
  JointVector q;
  JointVector qd;
  double gripper = 1.0;  // aperture, 1 = open
  double t = 0.0;
};

struct JointCommand {
  JointVector qd_target;
  double accel = 0.0;  // rad/s^2; capped by qdd_max per joint
};

/// Advances the plant by dt (0 < dt <= 0.05). Velocity slews toward the
/// target (zero when cmd is empty) at no more than the acceleration limit;
/// position is the exact integral of that piecewise-linear velocity. Near a
/// joint limit the target is replaced by full braking whenever it would
/// leave the joint unable to stop before the limit.
ArmState step(const JointLimits& limits, const ArmState& state, const std::optional<JointCommand>& cmd,
              double dt);

enum class GripperGoal { open, close };

inline constexpr double kGripperSlewRate = 2.0;  // aperture / s

ArmState apply_gripper(ArmState state, GripperGoal goal, double dt, double rate = kGripperSlewRate);

/// follower[i] = sign[i] * leader[i] + offset[i]
struct FollowerMap {
  std::vector<double> sign;
  std::vector<double> offset;
};

JointVector leader_follower(const JointVector& leader_q, const FollowerMap& map);
JointVector follower_to_leader(const JointVector& follower_q, const FollowerMap& map);

struct BimanualModel {
  ArmModel left, right;
  std::optional<FollowerMap> follower_map;  // right follows left when present
};

/// World-frame end-effector kinematics of a whole robot body. Multi-arm
/// bodies expose one controlled end effector; the other arm's columns of
/// the Jacobian are zero.
class Kinematics {
 public:
  virtual ~Kinematics() = default;
  virtual int dof() const = 0;
  virtual Pose ee_pose(const JointVector& q) const = 0;
  virtual Jacobian ee_jacobian(const JointVector& q) const = 0;
};

class SerialArmKinematics final : public Kinematics {
 public:
  explicit SerialArmKinematics(ArmModel model) : model_(std::move(model)) {}
  int dof() const override { return model_.dof(); }
  Pose ee_pose(const JointVector& q) const override;
  Jacobian ee_jacobian(const JointVector& q) const override;
  const ArmModel& model() const { return model_; }

 private:
  ArmModel model_;
};

class BimanualKinematics final : public Kinematics {
 public:
  BimanualKinematics(BimanualModel model, int active_arm);
  int dof() const override { return model_.left.dof() + model_.right.dof(); }
  Pose ee_pose(const JointVector& q) const override;
  Jacobian ee_jacobian(const JointVector& q) const override;

 private:
  const ArmModel& active() const { return active_arm_ == 0 ? model_.left : model_.right; }
  Eigen::Index active_offset() const { return active_arm_ == 0 ? 0 : model_.left.dof(); }

  BimanualModel model_;
  int active_arm_;
};

/// Position-tracking coupling of a follower joint block onto a leader block:
/// qd_follower = kp * (map(q_leader) - q_follower).
struct FollowerCoupling {
  Eigen::Index leader_offset = 0;
  Eigen::Index follower_offset = 0;
  FollowerMap map;
  double kp = 10.0;  // 1/s
};

JointVector follower_velocity(const JointVector& q, const FollowerCoupling& c);

/// Everything the node needs to simulate one robot.
struct RobotBody {
  std::shared_ptr<const Kinematics> kinematics;
  JointLimits limits;
  JointVector home;
  std::optional<FollowerCoupling> coupling;
  double gripper_rate = kGripperSlewRate;
};

struct NodeOptions {
  double watchdog_timeout = 0.1;
  std::size_t inbound_capacity = 128;
  GraspParams grasp;
};

/// Immutable view handed out to other modules.
struct NodeSnapshot {
  ArmState arm;
  Pose ee;
  Scene scene;
  bool collided = false;
  bool safe_stopped = false;
};

/// One control-loop context owning the arm state and the scene. Sessions
/// connect through byte pipes; only the first session to send a command
/// gets command authority, the rest are observers.
class RobotNode {
 public:
  RobotNode(RobotBody body, Scene scene, NodeOptions options);

  /// Puts the arm at rest at q with the gripper open and clears commands.
  void reset(const JointVector& q, const Scene& scene, double t);

  /// Attaches a new session; returns its id.
  int connect(std::shared_ptr<PipeEnd> link);
  /// Closes every session link and releases command authority.
  void close_sessions();
  std::size_t session_count() const { return sessions_.size(); }
  std::optional<int> commander() const { return commander_; }

  /// One control period at time `now`: drain inbound frames, publish state
  /// for `now`, then advance the plant to now + dt.
  void tick(double now, double dt);

  NodeSnapshot snapshot() const;
  const RobotBody& body() const { return body_; }
  const ArmState& arm() const { return arm_; }
  const Scene& scene() const { return scene_; }

 private:
  struct Session {
    int id;
    std::shared_ptr<PipeEnd> link;
    rtde::FrameReader reader;
    rtde::SessionState state;
    bool dead = false;
  };

  void handle_result(Session& s, rtde::StepResult r, double now);
  void send(Session& s, const rtde::Message& m);
  void drop(Session& s);
  void safe_stop();
  rtde::RobotSnapshot wire_snapshot() const;

  RobotBody body_;
  NodeOptions options_;
  ArmState arm_;
  Scene scene_;
  bool collided_ = false;
  bool safe_stopped_ = false;

  struct ActiveCommand {
    JointCommand cmd;
    double expires_at;
  };
  std::optional<ActiveCommand> active_;
  GripperGoal gripper_goal_ = GripperGoal::open;

  std::vector<Session> sessions_;
  std::optional<int> commander_;
  int next_id_ = 0;
};

}  // namespace deskcell
