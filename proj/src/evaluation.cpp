#include "deskcell/evaluation.hpp"

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "deskcell/errors.hpp"

namespace deskcell {

using nlohmann::json;

const char* to_string(FailureMode m) {
  switch (m) {
    case FailureMode::none: return "none";
    case FailureMode::no_grasp: return "no_grasp";
    case FailureMode::dropped: return "dropped";
    case FailureMode::collision: return "collision";
    case FailureMode::timeout: return "timeout";
  }
  return "?";
}

namespace {

constexpr double kCommandValidFor = 0.1;  // s

RobotStateRecord record_of(const rtde::StatePacket& p, std::uint64_t trigger_seq) {
  RobotStateRecord r;
  r.trigger_seq = trigger_seq;
  r.master_ts = p.timestamp;
  r.q = p.q;
  r.qd = p.qd;
  r.ee_pose = p.ee_pose;
  r.gripper = p.gripper;
  return r;
}

const char* to_string(GripperAction g) {
  switch (g) {
    case GripperAction::hold: return "hold";
    case GripperAction::open: return "open";
    case GripperAction::close: return "close";
  }
  return "?";
}

}  // namespace

PolicyDriver::PolicyDriver(Workcell& wc, Policy& policy)
    : wc_(wc), policy_(policy), client_(wc.connect()), accel_(wc.limits().qdd_max.maxCoeff()) {
  if (policy.action_space() != wc.config().robot.action_space)
    throw ActionSpaceError(std::string("policy emits ") + to_string(policy.action_space()) + " but the workcell takes " +
                           to_string(wc.config().robot.action_space));
  client_.open(wc.config().robot.state_rate_hz);
  wc_.add_listener(this);
}

PolicyDriver::~PolicyDriver() {
  wc_.remove_listener(this);
  client_.close();
}

void PolicyDriver::on_tick(double) {
  try {
    client_.poll();
  } catch (const Error& e) {
    error_ = e.what();
  }
}

void PolicyDriver::on_frameset(const Frameset& fs, double) {
  if (error_ || !client_.latest_state()) return;
  try {
    Observation obs;
    obs.state = record_of(*client_.latest_state(), fs.trigger_seq);
    obs.cloud = fuse(fs, wc_.calibration());
    obs.master_ts = fs.master_ts;

    const Action action = policy_.act(obs);
    if (action.space() != wc_.config().robot.action_space)
      throw ActionSpaceError("policy changed its action space mid-rollout");

    JointVector qd;
    std::vector<double> logged;
    if (const auto* t = std::get_if<Twist>(&action.command)) {
      if (!t->finite()) throw std::runtime_error("policy produced a non-finite twist");
      const JointVector q = Eigen::Map<const JointVector>(obs.state.q.data(), static_cast<Eigen::Index>(obs.state.q.size()));
      qd = twist_to_joints(*wc_.kinematics(), q, *t, wc_.config().robot.dls_lambda);
      const Vec6 v = t->as_vector();
      logged.assign(v.data(), v.data() + 6);
    } else {
      qd = std::get<JointVector>(action.command);
      if (qd.size() != static_cast<Eigen::Index>(obs.state.q.size()))
        throw DimensionError("policy joint command has the wrong length");
      if (!qd.allFinite()) throw std::runtime_error("policy produced non-finite joint velocities");
      logged.assign(qd.data(), qd.data() + qd.size());
    }

    client_.speedj(qd, accel_, kCommandValidFor);
    if (action.gripper != GripperAction::hold && action.gripper != sent_gripper_) {
      client_.gripper(action.gripper == GripperAction::close ? rtde::GripperTarget::close : rtde::GripperTarget::open);
      sent_gripper_ = action.gripper;
    }

    TraceStep step;
    step.master_ts = fs.master_ts;
    step.trigger_seq = fs.trigger_seq;
    step.ee_position = {obs.state.ee_pose[0], obs.state.ee_pose[1], obs.state.ee_pose[2]};
    step.gripper = obs.state.gripper;
    step.cloud_points = obs.cloud.size();
    step.space = action.space();
    step.command = std::move(logged);
    step.gripper_action = action.gripper;
    trace_.push_back(std::move(step));
  } catch (const std::exception& e) {
    error_ = e.what();
  }
}

RolloutResult run_rollout(Workcell& wc, Policy& policy, std::uint64_t seed, double max_duration_s) {
  wc.reset(seed);
  policy.reset();
  PolicyDriver driver(wc, policy);

  RolloutResult result;
  result.seed = seed;
  bool ever_attached = false;
  bool success = false, collided = false;
  wc.run_until(max_duration_s, [&] {
    const auto snap = wc.snapshot();
    ever_attached = ever_attached || snap.scene.block.attached;
    success = check_success(snap.scene);
    collided = snap.collided;
    return success || collided || driver.error().has_value();
  });
  result.duration_s = wc.now();
  result.trace = driver.trace();
  result.error = driver.error();

  const auto snap = wc.snapshot();
  if (success) {
    result.success = true;
    result.failure_mode = FailureMode::none;
  } else if (collided) {
    result.failure_mode = FailureMode::collision;
  } else if (result.error) {
    std::cerr << "rollout " << seed << ": policy error: " << *result.error << "\n";
    result.failure_mode = FailureMode::timeout;
  } else if (!ever_attached) {
    result.failure_mode = FailureMode::no_grasp;
  } else if (!snap.scene.block.attached) {
    result.failure_mode = FailureMode::dropped;
  } else {
    result.failure_mode = FailureMode::timeout;
  }
  return result;
}

EvalReport evaluate(Workcell& wc, Policy& policy, int n_trials, std::uint64_t base_seed) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be at least 1");
  EvalReport report;
  report.workcell_name = wc.config().name;
  report.config_hash = wc.hash();
  report.policy_id = policy.id();
  report.seed = base_seed;
  report.n_trials = n_trials;
  for (int i = 0; i < n_trials; ++i) {
    auto r = run_rollout(wc, policy, base_seed + static_cast<std::uint64_t>(i), wc.config().eval.max_duration_s);
    if (r.success) ++report.n_success;
    report.trials.push_back(std::move(r));
  }
  report.success_rate = static_cast<double>(report.n_success) / report.n_trials;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json trials = json::array();
  for (std::size_t i = 0; i < report.trials.size(); ++i) {
    const auto& r = report.trials[i];
    json t = {{"trial", i},
              {"seed", r.seed},
              {"success", r.success},
              {"failure_mode", to_string(r.failure_mode)},
              {"duration_s", r.duration_s},
              {"steps", r.trace.size()}};
    if (!r.trace.empty()) {
      const auto& last = r.trace.back();
      t["final_ee_position"] = last.ee_position;
      t["final_gripper"] = last.gripper;
      t["final_gripper_action"] = to_string(last.gripper_action);
    }
    if (r.error) t["error"] = *r.error;
    trials.push_back(std::move(t));
  }
  json j = {{"workcell_name", report.workcell_name},
            {"config_hash", report.config_hash},
            {"policy_id", report.policy_id},
            {"seed", report.seed},
            {"n_trials", report.n_trials},
            {"n_success", report.n_success},
            {"success_rate", report.success_rate},
            {"trials", trials}};
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << report_to_json(report);
  if (!os) throw WriteError("failed writing " + path.string());
}

}  // namespace deskcell
