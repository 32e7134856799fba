#pragma once

// The shared world: a table plane, one graspable box, kinematic grasp
// attachment and the grasp-and-lift success predicate.

#include <cstdint>

#include "deskcell/geometry.hpp"

namespace deskcell {

struct Block {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents{0.02, 0.02, 0.02};
  bool attached = false;
};

/// Axis-aligned rectangle on the table, meters.
struct SpawnRegion {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;

  Vec3 center(double z) const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max), z}; }
};

struct GraspParams {
  double grasp_radius = 0.04;
  double close_threshold = 0.4;
  Vec3 offset{0.0, 0.0, -0.02};  // block center relative to the EE point while held
};

struct Scene {
  double table_height = 0.0;
  Block block;
  SpawnRegion spawn_region;
  double success_lift = 0.04;       // block bottom above table, m
  double collision_margin = 0.005;  // EE below table + margin counts as a collision

  double rest_z() const { return table_height + block.half_extents.z(); }
};

/// Places the block uniformly in the spawn region, resting, not attached.
Scene spawn_block(Scene scene, std::uint64_t seed);

/// Attach/detach rules. Attaches when close enough with the gripper closed,
/// stays rigidly attached while closed, and drops straight to the table
/// when the gripper opens past the threshold.
Scene update_attachment(Scene scene, const Pose& ee, double gripper, const GraspParams& grasp);

bool check_success(const Scene& scene);

/// EE point below the table plus margin.
bool ee_collides(const Scene& scene, const Pose& ee);

}  // namespace deskcell
