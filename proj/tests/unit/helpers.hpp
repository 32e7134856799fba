#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "deskcell/geometry.hpp"
#include "oracles.hpp"

namespace testutil {

inline std::filesystem::path source_dir() { return TEST_SOURCE_DIR; }
inline std::filesystem::path configs_dir() { return source_dir().parent_path() / "configs"; }

inline std::vector<oracle::Row> to_rows(const deskcell::DHParams& dh) {
  std::vector<oracle::Row> rows;
  for (const auto& r : dh) rows.push_back({r.a, r.alpha, r.d, r.theta_offset});
  return rows;
}

inline std::vector<double> to_std(const deskcell::JointVector& q) { return {q.data(), q.data() + q.size()}; }

inline deskcell::DHParams random_model(std::mt19937_64& g, int dof) {
  std::uniform_real_distribution<double> len(-0.5, 0.5), ang(-3.14159, 3.14159), off(-0.3, 0.3);
  deskcell::DHParams dh;
  for (int i = 0; i < dof; ++i) dh.push_back({len(g), ang(g), off(g), ang(g)});
  return dh;
}

inline deskcell::JointVector random_q(std::mt19937_64& g, int dof, double span = 3.14159) {
  std::uniform_real_distribution<double> u(-span, span);
  deskcell::JointVector q(dof);
  for (int i = 0; i < dof; ++i) q[i] = u(g);
  return q;
}

inline deskcell::Quat random_quat(std::mt19937_64& g) {
  std::normal_distribution<double> n;
  return deskcell::Quat(n(g), n(g), n(g), n(g)).normalized();
}

/// Scratch directory under the build tree, emptied on construction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::path(TEST_BINARY_DIR) / "scratch" / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testutil

#include "deskcell/config.hpp"

namespace testutil {

inline deskcell::WorkcellConfig shipped(const std::string& name) {
  return deskcell::load_workcell_config(configs_dir() / (name + ".json"));
}

inline deskcell::RobotBody shipped_body(const std::string& name) {
  const auto cfg = shipped(name);
  return deskcell::find_robot_type(cfg.robot.type)->make_body(cfg.robot);
}

}  // namespace testutil

#include "deskcell/camera_rig.hpp"

namespace testutil {

/// Camera-to-world pose looking from eye at target: optical axis +z, image y down.
inline deskcell::Pose look_at(const deskcell::Vec3& eye, const deskcell::Vec3& target) {
  using deskcell::Vec3;
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = Vec3::UnitY().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Eigen::Matrix3d R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return {eye, deskcell::Quat(R)};
}

inline deskcell::CameraConfig camera(const std::string& id, const deskcell::Pose& pose, bool master = false,
                                     double delay_us = 0.0) {
  deskcell::CameraConfig c;
  c.id = id;
  c.role = master ? deskcell::CameraRole::master : deskcell::CameraRole::subordinate;
  c.delay_us = delay_us;
  c.intrinsics = {150.0, 150.0, 79.5, 59.5, 160, 120};
  c.extrinsic = pose;
  c.fps = 30.0;
  return c;
}

inline std::vector<deskcell::CameraConfig> ring_cameras(const deskcell::Vec3& target, int n, double radius = 0.5,
                                                        double height = 0.5) {
  std::vector<deskcell::CameraConfig> cams;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * 3.14159265358979 * i / n + 0.3;
    const deskcell::Vec3 eye = target + deskcell::Vec3(radius * std::cos(a), radius * std::sin(a), height);
    cams.push_back(camera("cam" + std::to_string(i), look_at(eye, target), i == 0, 160.0 * i));
  }
  return cams;
}

}  // namespace testutil
