#pragma once

// Closed-loop rollouts of a policy against a workcell and the multi-trial
// evaluation harness.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deskcell/policy.hpp"
#include "deskcell/workcell.hpp"

namespace deskcell {

enum class FailureMode { none, no_grasp, dropped, collision, timeout };

const char* to_string(FailureMode m);

struct TraceStep {
  double master_ts = 0.0;
  std::uint64_t trigger_seq = 0;
  std::array<double, 3> ee_position{};
  double gripper = 1.0;
  std::size_t cloud_points = 0;
  ActionSpace space = ActionSpace::joint_velocity;
  std::vector<double> command;  // joint velocities or (vx vy vz wx wy wz)
  GripperAction gripper_action = GripperAction::hold;
};

struct RolloutResult {
  bool success = false;
  FailureMode failure_mode = FailureMode::timeout;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  std::vector<TraceStep> trace;
  std::optional<std::string> error;
};

/// Drives the robot from a policy: one observation and one command per
/// aligned frameset, over its own RTDE session. EE twists are mapped to
/// joint velocities with damped least squares before sending.
class PolicyDriver : public WorkcellListener {
 public:
  /// Throws ActionSpaceError when the policy's action space differs from
  /// the workcell's.
  PolicyDriver(Workcell& wc, Policy& policy);
  ~PolicyDriver() override;

  void on_tick(double now) override;
  void on_frameset(const Frameset& fs, double now) override;

  const std::vector<TraceStep>& trace() const { return trace_; }
  const std::optional<std::string>& error() const { return error_; }

 private:
  Workcell& wc_;
  Policy& policy_;
  RtdeClient client_;
  std::optional<GripperAction> sent_gripper_;
  double accel_;
  std::vector<TraceStep> trace_;
  std::optional<std::string> error_;
};

/// Resets the workcell with `seed` and runs until success, collision, a
/// policy error or max_duration_s.
RolloutResult run_rollout(Workcell& wc, Policy& policy, std::uint64_t seed, double max_duration_s);

struct EvalReport {
  std::string workcell_name;
  std::string config_hash;
  std::string policy_id;
  std::uint64_t seed = 0;
  int n_trials = 0;
  int n_success = 0;
  double success_rate = 0.0;
  std::vector<RolloutResult> trials;
};

/// Trials use seeds base_seed + i, run sequentially.
EvalReport evaluate(Workcell& wc, Policy& policy, int n_trials, std::uint64_t base_seed);

std::string report_to_json(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace deskcell
