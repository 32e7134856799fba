#pragma once

// Rigid-body primitives, DH serial-arm kinematics, damped least-squares
// velocity IK and pinhole projection. Everything here is a pure function
// over values.

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

#include "deskcell/errors.hpp"

namespace deskcell {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using JointVector = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Position in meters and a unit quaternion, stored scalar-first on the wire
/// (w, x, y, z). The orientation is renormalized on construction.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Pose() = default;
  Pose(const Vec3& p, const Quat& q) : position(p), orientation(q.normalized()) {}

  static Pose identity() { return {}; }

  /// (x, y, z, qw, qx, qy, qz)
  std::array<double, 7> to_array() const;
  static Pose from_array(const std::array<double, 7>& a);

  Vec3 transform(const Vec3& p) const { return position + orientation * p; }
};

struct Twist {
  Vec3 linear = Vec3::Zero();   // m/s
  Vec3 angular = Vec3::Zero();  // rad/s

  Vec6 as_vector() const {
    Vec6 v;
    v << linear, angular;
    return v;
  }
  bool finite() const { return linear.allFinite() && angular.allFinite(); }
};

/// One standard (distal) Denavit-Hartenberg row. Every joint is revolute.
struct DHRow {
  double a = 0.0;             // link length, m
  double alpha = 0.0;         // link twist, rad
  double d = 0.0;             // link offset, m
  double theta_offset = 0.0;  // rad
};
using DHParams = std::vector<DHRow>;

struct Intrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
};

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& a);

/// Base-frame end-effector pose.
Pose fk(const DHParams& model, const JointVector& q);

/// 6 x dof geometric Jacobian in the base frame; rows are linear xyz then
/// angular xyz.
Jacobian jacobian(const DHParams& model, const JointVector& q);

/// q_dot = J^T (J J^T + lambda^2 I)^-1 v.
/// Throws SingularityError when lambda == 0 and J J^T is singular.
JointVector dls_velocity_ik(const Jacobian& J, const Twist& v, double lambda);

struct Pixel {
  double u = 0.0, v = 0.0;
};

Pixel project(const Intrinsics& K, const Vec3& p_cam);
Vec3 deproject(const Intrinsics& K, const Pixel& px, double depth);

/// Rotation vector of q (axis * angle), shortest arc.
Vec3 quat_log(const Quat& q);

/// Shortest-arc slerp; at an exactly antipodal pair the sign of `a` wins.
Quat slerp_shortest(const Quat& a, const Quat& b, double t);

}  // namespace deskcell
