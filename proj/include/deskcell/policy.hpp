#pragma once

// Policy interface over both action spaces, and the scripted grasp-and-lift
// controller used as the evaluation oracle and demonstrator.

#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "deskcell/config.hpp"
#include "deskcell/perception.hpp"
#include "deskcell/recorder.hpp"
#include "deskcell/sim_robot.hpp"

namespace deskcell {

struct Observation {
  RobotStateRecord state;
  PointCloud cloud;
  double master_ts = 0.0;
};

enum class GripperAction { hold, open, close };

struct Action {
  std::variant<JointVector, Twist> command;  // joint velocities (rad/s) or an EE twist
  GripperAction gripper = GripperAction::hold;

  ActionSpace space() const {
    return std::holds_alternative<JointVector>(command) ? ActionSpace::joint_velocity : ActionSpace::ee_twist;
  }
};

/// What a policy may know about the workcell it runs in.
struct PolicyContext {
  ActionSpace action_space = ActionSpace::joint_velocity;
  std::shared_ptr<const Kinematics> kinematics;
  double dls_lambda = 0.05;
  double table_height = 0.0;
  Vec3 block_half_extents{0.02, 0.02, 0.02};
  GraspParams grasp;
  InputGains limits;
  PolicyConfig params;

  static PolicyContext from_config(const WorkcellConfig& config, std::shared_ptr<const Kinematics> kinematics);
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string id() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual void reset() {}
  virtual Action act(const Observation& obs) = 0;
};

enum class GraspPhase { approach, descend, grasp, lift, done };

const char* to_string(GraspPhase p);

struct ScriptedState {
  GraspPhase phase = GraspPhase::approach;
  std::optional<Vec3> block;           // latest block estimate, world frame
  std::optional<Quat> hold_orientation;  // EE orientation kept throughout
  std::optional<Vec3> lift_from;       // EE position when the grasp closed
};

/// One step of the grasp-and-lift state machine. Emits an EE twist; the
/// block is re-located from the observation's cloud on every call and the
/// previous estimate is held when perception finds no target.
std::pair<Action, ScriptedState> scripted_grasp_lift(const Observation& obs, ScriptedState state,
                                                     const PolicyContext& ctx);

/// Maps an EE twist to joint velocities through damped least squares at q.
JointVector twist_to_joints(const Kinematics& kin, const JointVector& q, const Twist& v, double lambda);

class ScriptedGraspLift final : public Policy {
 public:
  explicit ScriptedGraspLift(PolicyContext ctx) : ctx_(std::move(ctx)) {}
  std::string id() const override { return "scripted"; }
  ActionSpace action_space() const override { return ctx_.action_space; }
  void reset() override { state_ = {}; }
  Action act(const Observation& obs) override;
  const ScriptedState& state() const { return state_; }

 private:
  PolicyContext ctx_;
  ScriptedState state_;
};

/// Commands zero motion and holds the gripper.
class NullPolicy final : public Policy {
 public:
  explicit NullPolicy(PolicyContext ctx) : ctx_(std::move(ctx)) {}
  std::string id() const override { return "null"; }
  ActionSpace action_space() const override { return ctx_.action_space; }
  Action act(const Observation& obs) override;

 private:
  PolicyContext ctx_;
};

/// "scripted" or "null"; throws std::invalid_argument otherwise.
std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx);

}  // namespace deskcell
