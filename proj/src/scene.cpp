#include "deskcell/scene.hpp"

#include <algorithm>

#include "deskcell/rng.hpp"

namespace deskcell {

Scene spawn_block(Scene scene, std::uint64_t seed) {
  Rng rng(seed);
  const auto& r = scene.spawn_region;
  // Both draws happen even for a degenerate axis so the stream layout is fixed.
  const double x = rng.uniform(r.x_min, r.x_max);
  const double y = rng.uniform(r.y_min, r.y_max);
  scene.block.center = Vec3(x, y, scene.rest_z());
  scene.block.attached = false;
  return scene;
}

Scene update_attachment(Scene scene, const Pose& ee, double gripper, const GraspParams& grasp) {
  auto& b = scene.block;
  const bool closed = gripper <= grasp.close_threshold;

  if (!b.attached) {
    if (closed && (ee.position - b.center).norm() <= grasp.grasp_radius) b.attached = true;
  } else if (!closed) {
    b.attached = false;
    b.center.z() = scene.rest_z();
    return scene;
  }

  if (b.attached) {
    b.center = ee.position + grasp.offset;
    b.center.z() = std::max(b.center.z(), scene.rest_z());
  }
  return scene;
}

bool check_success(const Scene& scene) {
  const auto& b = scene.block;
  return b.attached && (b.center.z() - b.half_extents.z() - scene.table_height) >= scene.success_lift;
}

bool ee_collides(const Scene& scene, const Pose& ee) {
  return ee.position.z() < scene.table_height + scene.collision_margin;
}

}  // namespace deskcell
