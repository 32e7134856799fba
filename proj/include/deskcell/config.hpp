#pragma once

// Declarative workcell description: one JSON document selects the robot,
// cameras, calibration, scene and input gains. Robot and camera types are
// looked up in a registry keyed by type string.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deskcell/camera_rig.hpp"
#include "deskcell/perception.hpp"
#include "deskcell/scene.hpp"
#include "deskcell/sim_robot.hpp"

namespace deskcell {

enum class ActionSpace { joint_velocity, ee_twist };

const char* to_string(ActionSpace a);

struct ArmConfig {
  DHParams dh;
  JointLimits limits;
  Pose base_pose;
};

struct RobotConfig {
  std::string type;
  int dof = 0;
  std::vector<ArmConfig> arms;
  JointVector home;
  int port = 30004;
  double control_rate_hz = 125.0;
  double state_rate_hz = 125.0;
  ActionSpace action_space = ActionSpace::joint_velocity;
  std::optional<FollowerMap> follower_map;
  int active_arm = 0;
  double follower_kp = 10.0;
  double dls_lambda = 0.05;
  double watchdog_timeout_s = 0.1;
  double gripper_rate = kGripperSlewRate;
};

struct CameraEntry {
  std::string type;
  CameraConfig camera;
};

struct InputGains {
  double v_max = 0.15;  // m/s
  double w_max = 0.6;   // rad/s
  double deadzone = 0.05;
};

struct RecorderConfig {
  std::size_t camera_queue = 64;
  std::size_t frameset_queue = 64;
  AlignMode align_mode = AlignMode::sequence;
  double align_window_s = 1.0 / 60.0;
  double episode_duration_s = 15.0;
  std::string output_dir = "data";
};

struct PolicyConfig {
  double approach_height = 0.15;  // EE above table during approach, m
  double lift_height = 0.12;      // EE above table after lifting, m
  double gain = 1.5;              // 1/s
  double position_tolerance = 0.005;
};

struct EvalConfig {
  double max_duration_s = 20.0;
};

struct WorkcellConfig {
  std::string name;
  RobotConfig robot;
  std::vector<CameraEntry> cameras;
  std::string calibration_path;  // resolved against the config file's directory
  std::optional<Calibration> calibration;
  Scene scene;
  GraspParams grasp;
  InputGains input;
  RecorderConfig recorder;
  PolicyConfig policy;
  EvalConfig eval;
  std::string canonical;  // sorted-key compact form of the source document

  std::vector<CameraConfig> camera_configs() const;
};

/// Parses and validates a document, collecting every violation. Touches no
/// files; an inline `calibration` object is checked against the cameras.
WorkcellConfig parse_and_validate(const std::string& text);

/// Reads a config file and, when the calibration file exists, loads and
/// checks it. A missing calibration file is left for build() to report.
WorkcellConfig load_workcell_config(const std::filesystem::path& path);

/// Throws StartupError naming the path when the file cannot be read.
Calibration load_calibration(const std::filesystem::path& path);
Calibration parse_calibration(const std::string& text);

/// ValidationError listing every camera without a calibration entry.
void check_calibration(const WorkcellConfig& config, const Calibration& calib);

std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash(const WorkcellConfig& config);
std::string canonicalize(const std::string& json_text);

// Component registry -----------------------------------------------------

struct RobotType {
  /// Extra per-type checks; appends violations.
  std::function<void(const RobotConfig&, std::vector<std::string>&)> validate;
  std::function<RobotBody(const RobotConfig&)> make_body;
};

struct CameraType {
  std::function<void(const CameraConfig&, std::vector<std::string>&)> validate;
};

void register_robot_type(const std::string& type, RobotType t);
void register_camera_type(const std::string& type, CameraType t);
const RobotType* find_robot_type(const std::string& type);
const CameraType* find_camera_type(const std::string& type);
std::vector<std::string> robot_type_names();

}  // namespace deskcell
