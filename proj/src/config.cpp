#include "deskcell/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "deskcell/errors.hpp"

namespace deskcell {

using nlohmann::json;

namespace {

// Collects violations while walking the document. Every accessor returns a
// usable default after recording a problem so one pass reports everything.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& what) { errors.push_back(path + ": " + what); }

  const json* object(const json& parent, const std::string& key, const std::string& path, bool required) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(path + key, "missing");
      return nullptr;
    }
    if (!it->is_object()) {
      fail(path + key, "must be an object");
      return nullptr;
    }
    return &*it;
  }

  const json* array(const json& parent, const std::string& key, const std::string& path, bool required) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(path + key, "missing");
      return nullptr;
    }
    if (!it->is_array()) {
      fail(path + key, "must be an array");
      return nullptr;
    }
    return &*it;
  }

  double number(const json& parent, const std::string& key, const std::string& path, std::optional<double> def) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (!def) fail(path + key, "missing");
      return def.value_or(0.0);
    }
    if (!it->is_number()) {
      fail(path + key, "must be a number");
      return def.value_or(0.0);
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) fail(path + key, "must be finite");
    return v;
  }

  long integer(const json& parent, const std::string& key, const std::string& path, std::optional<long> def) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (!def) fail(path + key, "missing");
      return def.value_or(0);
    }
    if (!it->is_number_integer()) {
      fail(path + key, "must be an integer");
      return def.value_or(0);
    }
    return it->get<long>();
  }

  std::string string(const json& parent, const std::string& key, const std::string& path,
                     std::optional<std::string> def) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (!def) fail(path + key, "missing");
      return def.value_or("");
    }
    if (!it->is_string()) {
      fail(path + key, "must be a string");
      return def.value_or("");
    }
    return it->get<std::string>();
  }

  std::vector<double> numbers(const json& parent, const std::string& key, const std::string& path,
                              std::optional<std::size_t> size, bool required = true) {
    const json* a = array(parent, key, path, required);
    if (!a) return {};
    std::vector<double> out;
    for (const auto& v : *a) {
      if (!v.is_number()) {
        fail(path + key, "must contain only numbers");
        return {};
      }
      out.push_back(v.get<double>());
    }
    if (size && out.size() != *size) {
      fail(path + key, "must have " + std::to_string(*size) + " entries, has " + std::to_string(out.size()));
      return {};
    }
    return out;
  }

  void known_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) fail(path + k, "unknown key");
  }

  Vec3 vec3(const json& parent, const std::string& key, const std::string& path, std::optional<Vec3> def) {
    if (!parent.contains(key) && def) return *def;
    const auto v = numbers(parent, key, path, 3);
    return v.size() == 3 ? Vec3(v[0], v[1], v[2]) : def.value_or(Vec3::Zero());
  }

  Pose pose(const json& parent, const std::string& key, const std::string& path) {
    const json* o = object(parent, key, path, false);
    if (!o) return Pose::identity();
    const std::string p = path + key + ".";
    known_keys(*o, p, {"position", "orientation"});
    const Vec3 pos = vec3(*o, "position", p, Vec3::Zero());
    Quat q = Quat::Identity();
    if (o->contains("orientation")) {
      const auto v = numbers(*o, "orientation", p, 4);
      if (v.size() == 4) {
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
        if (std::abs(n - 1.0) > 1e-6)
          fail(p + "orientation", "quaternion must have unit norm");
        else
          q = Quat(v[0], v[1], v[2], v[3]);
      }
    }
    return {pos, q};
  }

  Intrinsics intrinsics(const json& parent, const std::string& key, const std::string& path) {
    Intrinsics K;
    const json* o = object(parent, key, path, true);
    if (!o) return K;
    const std::string p = path + key + ".";
    known_keys(*o, p, {"fx", "fy", "cx", "cy", "width", "height"});
    K.fx = number(*o, "fx", p, std::nullopt);
    K.fy = number(*o, "fy", p, std::nullopt);
    K.cx = number(*o, "cx", p, std::nullopt);
    K.cy = number(*o, "cy", p, std::nullopt);
    K.width = static_cast<int>(integer(*o, "width", p, std::nullopt));
    K.height = static_cast<int>(integer(*o, "height", p, std::nullopt));
    if (!K.valid()) fail(path + key, "requires fx, fy > 0 and the principal point inside the image");
    if (K.width > 65535 || K.height > 65535) fail(path + key, "resolution exceeds 65535");
    return K;
  }
};

JointVector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const JointVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ArmConfig read_arm(Reader& r, const json& arm, const std::string& p) {
  ArmConfig a;
  r.known_keys(arm, p, {"dh", "limits", "base_pose"});
  if (const json* dh = r.array(arm, "dh", p, true)) {
    for (std::size_t i = 0; i < dh->size(); ++i) {
      const auto& row = (*dh)[i];
      const std::string rp = p + "dh[" + std::to_string(i) + "].";
      if (!row.is_object()) {
        r.fail(rp, "must be an object");
        continue;
      }
      r.known_keys(row, rp, {"a", "alpha", "d", "theta_offset"});
      a.dh.push_back({r.number(row, "a", rp, std::nullopt), r.number(row, "alpha", rp, std::nullopt),
                      r.number(row, "d", rp, std::nullopt), r.number(row, "theta_offset", rp, 0.0)});
    }
    if (a.dh.empty()) r.fail(p + "dh", "must have at least one row");
  }
  const auto n = a.dh.size();
  if (const json* lim = r.object(arm, "limits", p, true)) {
    const std::string lp = p + "limits.";
    r.known_keys(*lim, lp, {"q_min", "q_max", "qd_max", "qdd_max"});
    a.limits.q_min = to_vector(r.numbers(*lim, "q_min", lp, n));
    a.limits.q_max = to_vector(r.numbers(*lim, "q_max", lp, n));
    a.limits.qd_max = to_vector(r.numbers(*lim, "qd_max", lp, n));
    a.limits.qdd_max = to_vector(r.numbers(*lim, "qdd_max", lp, n));
    const auto m = static_cast<Eigen::Index>(n);
    if (a.limits.q_min.size() == m && a.limits.q_max.size() == m &&
        !(a.limits.q_min.array() < a.limits.q_max.array()).all())
      r.fail(lp + "q_min", "must be below q_max for every joint");
    if (a.limits.qd_max.size() == m && !(a.limits.qd_max.array() > 0.0).all())
      r.fail(lp + "qd_max", "must be positive");
    if (a.limits.qdd_max.size() == m && !(a.limits.qdd_max.array() > 0.0).all())
      r.fail(lp + "qdd_max", "must be positive");
  }
  a.base_pose = r.pose(arm, "base_pose", p);
  return a;
}

bool limits_complete(const JointLimits& l, Eigen::Index n) {
  return l.q_min.size() == n && l.q_max.size() == n && l.qd_max.size() == n && l.qdd_max.size() == n;
}

void read_robot(Reader& r, const json& doc, WorkcellConfig& cfg) {
  const json* robot = r.object(doc, "robot", "", true);
  if (!robot) return;
  const std::string p = "robot.";
  auto& rc = cfg.robot;
  r.known_keys(*robot, p,
               {"type", "dof", "arms", "home", "port", "control_rate_hz", "state_rate_hz", "action_space",
                "follower_map", "active_arm", "dls_lambda", "watchdog_timeout_s", "gripper_rate"});
  rc.type = r.string(*robot, "type", p, std::nullopt);
  rc.dof = static_cast<int>(r.integer(*robot, "dof", p, std::nullopt));
  if (const json* arms = r.array(*robot, "arms", p, true)) {
    for (std::size_t i = 0; i < arms->size(); ++i) {
      const std::string ap = p + "arms[" + std::to_string(i) + "].";
      if (!(*arms)[i].is_object()) {
        r.fail(ap, "must be an object");
        continue;
      }
      rc.arms.push_back(read_arm(r, (*arms)[i], ap));
    }
    if (rc.arms.empty()) r.fail(p + "arms", "must list at least one arm");
  }
  std::size_t rows = 0;
  for (const auto& a : rc.arms) rows += a.dh.size();
  if (rc.dof <= 0) r.fail(p + "dof", "must be positive");
  else if (static_cast<std::size_t>(rc.dof) != rows)
    r.fail(p + "dof", "is " + std::to_string(rc.dof) + " but the arms have " + std::to_string(rows) + " DH rows");

  rc.home = to_vector(r.numbers(*robot, "home", p, rows));
  bool all_limits = true;
  for (const auto& a : rc.arms) all_limits = all_limits && limits_complete(a.limits, static_cast<Eigen::Index>(a.dh.size()));
  if (all_limits && rc.home.size() == static_cast<Eigen::Index>(rows) && !rc.arms.empty()) {
    JointLimits lim = rc.arms[0].limits;
    for (std::size_t i = 1; i < rc.arms.size(); ++i) lim = JointLimits::stack(lim, rc.arms[i].limits);
    if (!((rc.home.array() >= lim.q_min.array()) && (rc.home.array() <= lim.q_max.array())).all())
      r.fail(p + "home", "must lie within the joint limits");
  }

  rc.port = static_cast<int>(r.integer(*robot, "port", p, 30004));
  if (rc.port < 0 || rc.port > 65535) r.fail(p + "port", "must be in 0..65535");
  rc.control_rate_hz = r.number(*robot, "control_rate_hz", p, 125.0);
  if (rc.control_rate_hz < 50.0 || rc.control_rate_hz > 1000.0) r.fail(p + "control_rate_hz", "must be in [50, 1000]");
  rc.state_rate_hz = r.number(*robot, "state_rate_hz", p, rc.control_rate_hz);
  if (!(rc.state_rate_hz > 0.0) || rc.state_rate_hz > 1000.0) r.fail(p + "state_rate_hz", "must be in (0, 1000]");

  const auto space = r.string(*robot, "action_space", p, std::nullopt);
  if (space == "joint_velocity") rc.action_space = ActionSpace::joint_velocity;
  else if (space == "ee_twist") rc.action_space = ActionSpace::ee_twist;
  else if (!space.empty()) r.fail(p + "action_space", "must be joint_velocity or ee_twist");

  if (const json* fm = r.object(*robot, "follower_map", p, false)) {
    const std::string fp = p + "follower_map.";
    r.known_keys(*fm, fp, {"sign", "offset", "kp"});
    FollowerMap map;
    map.sign = r.numbers(*fm, "sign", fp, std::nullopt);
    map.offset = r.numbers(*fm, "offset", fp, map.sign.size());
    for (double s : map.sign)
      if (s != 1.0 && s != -1.0) {
        r.fail(fp + "sign", "entries must be +1 or -1");
        break;
      }
    rc.follower_kp = r.number(*fm, "kp", fp, 10.0);
    if (!(rc.follower_kp > 0.0)) r.fail(fp + "kp", "must be positive");
    rc.follower_map = std::move(map);
  }
  rc.active_arm = static_cast<int>(r.integer(*robot, "active_arm", p, 0));
  if (rc.active_arm < 0 || static_cast<std::size_t>(rc.active_arm) >= std::max<std::size_t>(rc.arms.size(), 1))
    r.fail(p + "active_arm", "must index one of the arms");
  rc.dls_lambda = r.number(*robot, "dls_lambda", p, 0.05);
  if (rc.dls_lambda < 0.0) r.fail(p + "dls_lambda", "must be non-negative");
  rc.watchdog_timeout_s = r.number(*robot, "watchdog_timeout_s", p, 0.1);
  if (!(rc.watchdog_timeout_s > 0.0)) r.fail(p + "watchdog_timeout_s", "must be positive");
  rc.gripper_rate = r.number(*robot, "gripper_rate", p, kGripperSlewRate);
  if (!(rc.gripper_rate > 0.0)) r.fail(p + "gripper_rate", "must be positive");

  if (!rc.type.empty()) {
    const RobotType* t = find_robot_type(rc.type);
    if (!t) r.fail(p + "type", "unknown component '" + rc.type + "'");
    else if (t->validate) t->validate(rc, r.errors);
  }
}

void read_cameras(Reader& r, const json& doc, WorkcellConfig& cfg) {
  const json* cams = r.array(doc, "cameras", "", true);
  if (!cams) return;
  std::set<std::string> ids;
  int masters = 0;
  for (std::size_t i = 0; i < cams->size(); ++i) {
    const std::string p = "cameras[" + std::to_string(i) + "].";
    const auto& c = (*cams)[i];
    if (!c.is_object()) {
      r.fail(p, "must be an object");
      continue;
    }
    r.known_keys(c, p, {"id", "type", "role", "delay_us", "intrinsics", "extrinsic", "fps", "clock"});
    CameraEntry e;
    e.type = r.string(c, "type", p, std::nullopt);
    auto& cam = e.camera;
    cam.id = r.string(c, "id", p, std::nullopt);
    if (cam.id.empty() && c.contains("id")) r.fail(p + "id", "must not be empty");
    if (!cam.id.empty() && !ids.insert(cam.id).second) r.fail(p + "id", "duplicate camera id '" + cam.id + "'");
    const auto role = r.string(c, "role", p, std::nullopt);
    if (role == "master") {
      cam.role = CameraRole::master;
      ++masters;
    } else if (role == "subordinate") {
      cam.role = CameraRole::subordinate;
    } else if (!role.empty()) {
      r.fail(p + "role", "must be master or subordinate");
    }
    cam.delay_us = r.number(c, "delay_us", p, 0.0);
    if (cam.delay_us < 0.0) r.fail(p + "delay_us", "must be non-negative");
    if (cam.role == CameraRole::master && cam.delay_us != 0.0) r.fail(p + "delay_us", "must be 0 for the master");
    cam.intrinsics = r.intrinsics(c, "intrinsics", p);
    cam.extrinsic = r.pose(c, "extrinsic", p);
    cam.fps = r.number(c, "fps", p, 30.0);
    if (!(cam.fps > 0.0)) r.fail(p + "fps", "must be positive");
    if (const json* clk = r.object(c, "clock", p, false)) {
      const std::string cp = p + "clock.";
      r.known_keys(*clk, cp, {"offset_s", "drift_ppm", "jitter_sigma_us"});
      cam.clock.offset_s = r.number(*clk, "offset_s", cp, 0.0);
      cam.clock.drift_ppm = r.number(*clk, "drift_ppm", cp, 0.0);
      cam.clock.jitter_sigma_us = r.number(*clk, "jitter_sigma_us", cp, 0.0);
      if (cam.clock.jitter_sigma_us < 0.0) r.fail(cp + "jitter_sigma_us", "must be non-negative");
    }
    if (!e.type.empty()) {
      const CameraType* t = find_camera_type(e.type);
      if (!t) r.fail(p + "type", "unknown component '" + e.type + "'");
      else if (t->validate) t->validate(cam, r.errors);
    }
    cfg.cameras.push_back(std::move(e));
  }
  if (cams->empty()) r.fail("cameras", "must list at least one camera");
  else if (masters != 1) r.fail("cameras", "must have exactly one master, found " + std::to_string(masters));
  if (!cfg.cameras.empty()) {
    const double fps = cfg.cameras.front().camera.fps;
    for (const auto& e : cfg.cameras)
      if (e.camera.fps != fps) {
        r.fail("cameras", "all cameras on one trigger line must share the frame rate");
        break;
      }
  }
}

void read_scene(Reader& r, const json& doc, WorkcellConfig& cfg) {
  const json* s = r.object(doc, "scene", "", true);
  if (!s) return;
  const std::string p = "scene.";
  r.known_keys(*s, p, {"table_height", "block_half_extents", "spawn_region", "success_lift", "collision_margin", "grasp"});
  auto& sc = cfg.scene;
  sc.table_height = r.number(*s, "table_height", p, 0.0);
  sc.block.half_extents = r.vec3(*s, "block_half_extents", p, Vec3(0.02, 0.02, 0.02));
  if (!(sc.block.half_extents.array() > 0.0).all()) r.fail(p + "block_half_extents", "must be positive");
  if (const json* sr = r.object(*s, "spawn_region", p, true)) {
    const std::string rp = p + "spawn_region.";
    r.known_keys(*sr, rp, {"x_min", "x_max", "y_min", "y_max"});
    sc.spawn_region.x_min = r.number(*sr, "x_min", rp, std::nullopt);
    sc.spawn_region.x_max = r.number(*sr, "x_max", rp, std::nullopt);
    sc.spawn_region.y_min = r.number(*sr, "y_min", rp, std::nullopt);
    sc.spawn_region.y_max = r.number(*sr, "y_max", rp, std::nullopt);
    if (sc.spawn_region.x_min > sc.spawn_region.x_max || sc.spawn_region.y_min > sc.spawn_region.y_max)
      r.fail(p + "spawn_region", "min must not exceed max");
  }
  sc.success_lift = r.number(*s, "success_lift", p, 0.04);
  if (!(sc.success_lift > 0.0)) r.fail(p + "success_lift", "must be positive");
  sc.collision_margin = r.number(*s, "collision_margin", p, 0.005);
  if (sc.collision_margin < 0.0) r.fail(p + "collision_margin", "must be non-negative");
  sc.block.center = sc.spawn_region.center(sc.rest_z());
  if (const json* g = r.object(*s, "grasp", p, false)) {
    const std::string gp = p + "grasp.";
    r.known_keys(*g, gp, {"radius", "close_threshold", "offset"});
    cfg.grasp.grasp_radius = r.number(*g, "radius", gp, 0.04);
    cfg.grasp.close_threshold = r.number(*g, "close_threshold", gp, 0.4);
    cfg.grasp.offset = r.vec3(*g, "offset", gp, Vec3(0.0, 0.0, -0.02));
  }
  if (!(cfg.grasp.grasp_radius > 0.0)) r.fail(p + "grasp.radius", "must be positive");
  if (!(cfg.grasp.close_threshold > 0.0 && cfg.grasp.close_threshold < 1.0))
    r.fail(p + "grasp.close_threshold", "must be in (0, 1)");
}

void read_sections(Reader& r, const json& doc, WorkcellConfig& cfg) {
  if (const json* in = r.object(doc, "input", "", false)) {
    const std::string p = "input.";
    r.known_keys(*in, p, {"v_max", "w_max", "deadzone"});
    cfg.input.v_max = r.number(*in, "v_max", p, 0.15);
    cfg.input.w_max = r.number(*in, "w_max", p, 0.6);
    cfg.input.deadzone = r.number(*in, "deadzone", p, 0.05);
  }
  if (!(cfg.input.v_max > 0.0)) r.fail("input.v_max", "must be positive");
  if (!(cfg.input.w_max > 0.0)) r.fail("input.w_max", "must be positive");
  if (!(cfg.input.deadzone >= 0.0 && cfg.input.deadzone < 1.0)) r.fail("input.deadzone", "must be in [0, 1)");

  if (const json* rec = r.object(doc, "recorder", "", false)) {
    const std::string p = "recorder.";
    r.known_keys(*rec, p,
                 {"camera_queue", "frameset_queue", "align_mode", "align_window_s", "episode_duration_s", "output_dir"});
    const long cq = r.integer(*rec, "camera_queue", p, 64);
    const long fq = r.integer(*rec, "frameset_queue", p, 64);
    if (cq < 1) r.fail(p + "camera_queue", "must be at least 1");
    if (fq < 1) r.fail(p + "frameset_queue", "must be at least 1");
    cfg.recorder.camera_queue = static_cast<std::size_t>(std::max(cq, 1L));
    cfg.recorder.frameset_queue = static_cast<std::size_t>(std::max(fq, 1L));
    const auto mode = r.string(*rec, "align_mode", p, "sequence");
    if (mode == "sequence") cfg.recorder.align_mode = AlignMode::sequence;
    else if (mode == "timestamp") cfg.recorder.align_mode = AlignMode::timestamp;
    else r.fail(p + "align_mode", "must be sequence or timestamp");
    cfg.recorder.align_window_s = r.number(*rec, "align_window_s", p, cfg.recorder.align_window_s);
    if (!(cfg.recorder.align_window_s > 0.0)) r.fail(p + "align_window_s", "must be positive");
    cfg.recorder.episode_duration_s = r.number(*rec, "episode_duration_s", p, 15.0);
    if (!(cfg.recorder.episode_duration_s > 0.0)) r.fail(p + "episode_duration_s", "must be positive");
    cfg.recorder.output_dir = r.string(*rec, "output_dir", p, "data");
  }

  if (const json* pol = r.object(doc, "policy", "", false)) {
    const std::string p = "policy.";
    r.known_keys(*pol, p, {"approach_height", "lift_height", "gain", "position_tolerance"});
    cfg.policy.approach_height = r.number(*pol, "approach_height", p, 0.15);
    cfg.policy.lift_height = r.number(*pol, "lift_height", p, 0.12);
    cfg.policy.gain = r.number(*pol, "gain", p, 1.5);
    cfg.policy.position_tolerance = r.number(*pol, "position_tolerance", p, 0.005);
  }
  if (!(cfg.policy.gain > 0.0)) r.fail("policy.gain", "must be positive");
  if (!(cfg.policy.position_tolerance > 0.0)) r.fail("policy.position_tolerance", "must be positive");

  if (const json* ev = r.object(doc, "eval", "", false)) {
    r.known_keys(*ev, "eval.", {"max_duration_s"});
    cfg.eval.max_duration_s = r.number(*ev, "max_duration_s", "eval.", 20.0);
  }
  if (!(cfg.eval.max_duration_s > 0.0)) r.fail("eval.max_duration_s", "must be positive");
}

CameraCalibration read_camera_calibration(Reader& r, const json& c, const std::string& p) {
  CameraCalibration cc;
  r.known_keys(c, p, {"intrinsics", "extrinsic"});
  cc.intrinsics = r.intrinsics(c, "intrinsics", p);
  cc.extrinsic = r.pose(c, "extrinsic", p);
  return cc;
}

Calibration read_calibration(Reader& r, const json& doc, const std::string& p) {
  Calibration calib;
  const json* cams = r.object(doc, "cameras", p, true);
  if (!cams) return calib;
  for (const auto& [id, c] : cams->items()) {
    const std::string cp = p + "cameras." + id + ".";
    if (!c.is_object()) {
      r.fail(cp, "must be an object");
      continue;
    }
    calib[id] = read_camera_calibration(r, c, cp);
  }
  return calib;
}

void missing_entries(const WorkcellConfig& cfg, const Calibration& calib, std::vector<std::string>& errors) {
  for (const auto& e : cfg.cameras)
    if (!e.camera.id.empty() && !calib.count(e.camera.id))
      errors.push_back("calibration: no entry for camera '" + e.camera.id + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StartupError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Registry ----------------------------------------------------------------

struct Registry {
  std::mutex m;
  std::map<std::string, RobotType> robots;
  std::map<std::string, CameraType> cameras;
};

JointLimits stacked_limits(const RobotConfig& rc) {
  JointLimits lim = rc.arms.at(0).limits;
  for (std::size_t i = 1; i < rc.arms.size(); ++i) lim = JointLimits::stack(lim, rc.arms[i].limits);
  return lim;
}

RobotBody make_serial_body(const RobotConfig& rc) {
  const auto& a = rc.arms.at(0);
  RobotBody body;
  body.kinematics = std::make_shared<SerialArmKinematics>(ArmModel{a.dh, a.limits, a.base_pose});
  body.limits = a.limits;
  body.home = rc.home;
  body.gripper_rate = rc.gripper_rate;
  return body;
}

RobotBody make_bimanual_body(const RobotConfig& rc) {
  const auto& l = rc.arms.at(0);
  const auto& r = rc.arms.at(1);
  BimanualModel model{{l.dh, l.limits, l.base_pose}, {r.dh, r.limits, r.base_pose}, rc.follower_map};
  RobotBody body;
  body.kinematics = std::make_shared<BimanualKinematics>(model, rc.active_arm);
  body.limits = stacked_limits(rc);
  body.home = rc.home;
  body.gripper_rate = rc.gripper_rate;
  if (rc.follower_map) {
    const auto n = static_cast<Eigen::Index>(l.dh.size());
    FollowerCoupling c;
    c.leader_offset = rc.active_arm == 0 ? 0 : n;
    c.follower_offset = rc.active_arm == 0 ? n : 0;
    c.map = *rc.follower_map;
    c.kp = rc.follower_kp;
    body.coupling = c;
  }
  return body;
}

Registry& registry() {
  static Registry* reg = [] {
    auto* r = new Registry;
    r->robots["ur5_sim"] = RobotType{
        [](const RobotConfig& rc, std::vector<std::string>& errors) {
          if (rc.arms.size() != 1) errors.push_back("robot.arms: ur5_sim takes exactly one arm");
          if (rc.follower_map) errors.push_back("robot.follower_map: not supported by ur5_sim");
        },
        make_serial_body};
    r->robots["bimanual_sim"] = RobotType{
        [](const RobotConfig& rc, std::vector<std::string>& errors) {
          if (rc.arms.size() != 2) {
            errors.push_back("robot.arms: bimanual_sim takes exactly two arms");
            return;
          }
          if (rc.arms[0].dh.size() != rc.arms[1].dh.size())
            errors.push_back("robot.arms: left and right arms must have the same dof");
          if (!rc.follower_map) errors.push_back("robot.follower_map: missing");
          else if (rc.follower_map->sign.size() != rc.arms[0].dh.size())
            errors.push_back("robot.follower_map: must have one entry per arm joint");
        },
        make_bimanual_body};
    r->cameras["sim_rgbd"] = CameraType{[](const CameraConfig&, std::vector<std::string>&) {}};
    return r;
  }();
  return *reg;
}

}  // namespace

const char* to_string(ActionSpace a) { return a == ActionSpace::joint_velocity ? "joint_velocity" : "ee_twist"; }

std::vector<CameraConfig> WorkcellConfig::camera_configs() const {
  std::vector<CameraConfig> out;
  for (const auto& e : cameras) out.push_back(e.camera);
  return out;
}

std::string canonicalize(const std::string& json_text) {
  try {
    return json::parse(json_text).dump();
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("not valid JSON: ") + e.what()});
  }
}

WorkcellConfig parse_and_validate(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("not valid JSON: ") + e.what()});
  }
  if (!doc.is_object()) throw ValidationError({"document must be a JSON object"});

  Reader r;
  WorkcellConfig cfg;
  r.known_keys(doc, "",
               {"$schema", "name", "robot", "cameras", "calibration_path", "calibration", "scene", "input",
                "recorder", "policy", "eval"});
  cfg.name = r.string(doc, "name", "", std::nullopt);
  if (cfg.name.empty() && doc.contains("name")) r.fail("name", "must not be empty");
  read_robot(r, doc, cfg);
  read_cameras(r, doc, cfg);
  read_scene(r, doc, cfg);
  read_sections(r, doc, cfg);

  cfg.calibration_path = r.string(doc, "calibration_path", "", "");
  if (const json* inline_calib = r.object(doc, "calibration", "", false)) {
    cfg.calibration = read_calibration(r, *inline_calib, "calibration.");
    missing_entries(cfg, *cfg.calibration, r.errors);
  } else if (cfg.calibration_path.empty()) {
    r.fail("calibration_path", "missing (or give an inline calibration)");
  }

  if (!r.errors.empty()) throw ValidationError(std::move(r.errors));
  cfg.canonical = doc.dump();
  return cfg;
}

Calibration parse_calibration(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("calibration is not valid JSON: ") + e.what()});
  }
  Reader r;
  if (!doc.is_object()) throw ValidationError({"calibration must be a JSON object"});
  r.known_keys(doc, "", {"$schema", "cameras"});
  auto calib = read_calibration(r, doc, "");
  if (!r.errors.empty()) throw ValidationError(std::move(r.errors));
  return calib;
}

Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StartupError("calibration file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_calibration(ss.str());
}

void check_calibration(const WorkcellConfig& config, const Calibration& calib) {
  std::vector<std::string> errors;
  missing_entries(config, calib, errors);
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

WorkcellConfig load_workcell_config(const std::filesystem::path& path) {
  auto cfg = parse_and_validate(read_file(path));
  if (!cfg.calibration && !cfg.calibration_path.empty()) {
    std::filesystem::path cp(cfg.calibration_path);
    if (cp.is_relative()) cp = path.parent_path() / cp;
    cfg.calibration_path = cp.string();
    if (std::filesystem::exists(cp)) {
      auto calib = load_calibration(cp);
      check_calibration(cfg, calib);
      cfg.calibration = std::move(calib);
    }
  }
  return cfg;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const WorkcellConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.canonical)));
  return buf;
}

void register_robot_type(const std::string& type, RobotType t) {
  auto& reg = registry();
  std::lock_guard lock(reg.m);
  reg.robots[type] = std::move(t);
}

void register_camera_type(const std::string& type, CameraType t) {
  auto& reg = registry();
  std::lock_guard lock(reg.m);
  reg.cameras[type] = std::move(t);
}

const RobotType* find_robot_type(const std::string& type) {
  auto& reg = registry();
  std::lock_guard lock(reg.m);
  const auto it = reg.robots.find(type);
  return it == reg.robots.end() ? nullptr : &it->second;
}

const CameraType* find_camera_type(const std::string& type) {
  auto& reg = registry();
  std::lock_guard lock(reg.m);
  const auto it = reg.cameras.find(type);
  return it == reg.cameras.end() ? nullptr : &it->second;
}

std::vector<std::string> robot_type_names() {
  auto& reg = registry();
  std::lock_guard lock(reg.m);
  std::vector<std::string> out;
  for (const auto& [k, v] : reg.robots) out.push_back(k);
  return out;
}

}  // namespace deskcell
