#pragma once

// Multi-view depth fusion into a world-frame cloud, and block localization.

#include <map>
#include <string>
#include <vector>

#include "deskcell/camera_rig.hpp"
#include "deskcell/geometry.hpp"

namespace deskcell {

struct CameraCalibration {
  Intrinsics intrinsics;
  Pose extrinsic;  // camera-to-world
};

using Calibration = std::map<std::string, CameraCalibration>;

struct PointCloud {
  std::vector<Vec3> points;                // world frame, m
  std::vector<std::uint16_t> source;       // index into camera_ids, per point
  std::vector<std::string> camera_ids;

  std::size_t size() const { return points.size(); }
  const std::string& source_of(std::size_t i) const { return camera_ids[source[i]]; }
};

/// Deprojects every stride-th pixel (both axes) with valid depth through its
/// camera's intrinsics and extrinsic. Throws CalibrationError when a frame's
/// camera has no calibration entry.
PointCloud fuse_serial(const Frameset& frames, const Calibration& calib, int stride);
PointCloud fuse_parallel(const Frameset& frames, const Calibration& calib, int stride);

inline PointCloud fuse(const Frameset& frames, const Calibration& calib, int stride = 4) {
  return fuse_parallel(frames, calib, stride);
}

struct LocateParams {
  double above_table_margin = 0.005;
  std::size_t min_points = 10;
};

/// Centroid of the points above table + margin. Throws NoTargetError when
/// fewer than min_points qualify.
Vec3 locate_block(const PointCloud& cloud, double table_height, const LocateParams& params = {});

}  // namespace deskcell
