#include "deskcell/policy.hpp"

#include <stdexcept>

#include "deskcell/errors.hpp"

namespace deskcell {

namespace {

Vec3 clamp_norm(const Vec3& v, double max_norm) {
  const double n = v.norm();
  return n > max_norm ? Vec3(v * (max_norm / n)) : v;
}

JointVector state_q(const RobotStateRecord& s) {
  return Eigen::Map<const JointVector>(s.q.data(), static_cast<Eigen::Index>(s.q.size()));
}

}  // namespace

PolicyContext PolicyContext::from_config(const WorkcellConfig& config, std::shared_ptr<const Kinematics> kinematics) {
  PolicyContext ctx;
  ctx.action_space = config.robot.action_space;
  ctx.kinematics = std::move(kinematics);
  ctx.dls_lambda = config.robot.dls_lambda;
  ctx.table_height = config.scene.table_height;
  ctx.block_half_extents = config.scene.block.half_extents;
  ctx.grasp = config.grasp;
  ctx.limits = config.input;
  ctx.params = config.policy;
  return ctx;
}

const char* to_string(GraspPhase p) {
  switch (p) {
    case GraspPhase::approach: return "approach";
    case GraspPhase::descend: return "descend";
    case GraspPhase::grasp: return "grasp";
    case GraspPhase::lift: return "lift";
    case GraspPhase::done: return "done";
  }
  return "?";
}

JointVector twist_to_joints(const Kinematics& kin, const JointVector& q, const Twist& v, double lambda) {
  return dls_velocity_ik(kin.ee_jacobian(q), v, lambda);
}

std::pair<Action, ScriptedState> scripted_grasp_lift(const Observation& obs, ScriptedState st,
                                                     const PolicyContext& ctx) {
  const Pose ee = Pose::from_array(obs.state.ee_pose);
  const auto& p = ctx.params;
  if (!st.hold_orientation) st.hold_orientation = ee.orientation;

  try {
    st.block = locate_block(obs.cloud, ctx.table_height);
  } catch (const NoTargetError&) {
  }

  Action action{Twist{}, GripperAction::open};
  if (!st.block) return {action, st};

  const double grasp_z = ctx.table_height + ctx.block_half_extents.z() - ctx.grasp.offset.z();
  auto toward = [&](const Vec3& target) {
    Twist t;
    t.linear = clamp_norm(p.gain * (target - ee.position), ctx.limits.v_max);
    const Quat err = (*st.hold_orientation * ee.orientation.inverse()).normalized();
    t.angular = clamp_norm(p.gain * quat_log(err), ctx.limits.w_max);
    return t;
  };

  for (;;) {
    switch (st.phase) {
      case GraspPhase::approach: {
        const Vec3 target(st.block->x(), st.block->y(), ctx.table_height + p.approach_height);
        const Vec3 err = target - ee.position;
        if (err.head<2>().norm() <= p.position_tolerance && std::abs(err.z()) <= 2.0 * p.position_tolerance) {
          st.phase = GraspPhase::descend;
          continue;
        }
        action = {toward(target), GripperAction::open};
        return {action, st};
      }
      case GraspPhase::descend: {
        const Vec3 target(st.block->x(), st.block->y(), grasp_z);
        if ((target - ee.position).norm() <= p.position_tolerance) {
          st.phase = GraspPhase::grasp;
          st.lift_from = ee.position;
          continue;
        }
        action = {toward(target), GripperAction::open};
        return {action, st};
      }
      case GraspPhase::grasp:
        if (obs.state.gripper <= ctx.grasp.close_threshold) {
          st.phase = GraspPhase::lift;
          continue;
        }
        action = {Twist{}, GripperAction::close};
        return {action, st};
      case GraspPhase::lift: {
        const Vec3 from = st.lift_from.value_or(ee.position);
        const Vec3 target(from.x(), from.y(), ctx.table_height + p.lift_height);
        if (ee.position.z() >= target.z() - p.position_tolerance) {
          st.phase = GraspPhase::done;
          continue;
        }
        action = {toward(target), GripperAction::close};
        return {action, st};
      }
      case GraspPhase::done:
        action = {Twist{}, GripperAction::close};
        return {action, st};
    }
  }
}

Action ScriptedGraspLift::act(const Observation& obs) {
  auto [action, next] = scripted_grasp_lift(obs, std::move(state_), ctx_);
  state_ = std::move(next);
  if (ctx_.action_space == ActionSpace::joint_velocity)
    action.command = twist_to_joints(*ctx_.kinematics, state_q(obs.state), std::get<Twist>(action.command),
                                      ctx_.dls_lambda);
  return action;
}

Action NullPolicy::act(const Observation& obs) {
  if (ctx_.action_space == ActionSpace::joint_velocity)
    return {JointVector::Zero(static_cast<Eigen::Index>(obs.state.q.size())), GripperAction::hold};
  return {Twist{}, GripperAction::hold};
}

std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx) {
  if (name == "scripted") return std::make_unique<ScriptedGraspLift>(ctx);
  if (name == "null") return std::make_unique<NullPolicy>(ctx);
  throw std::invalid_argument("unknown policy '" + name + "'");
}

}  // namespace deskcell
