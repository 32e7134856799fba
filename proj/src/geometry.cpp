#include "deskcell/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <string>

namespace deskcell {

namespace {

Eigen::Isometry3d dh_transform(const DHRow& row, double q) {
  const double th = q + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Eigen::Matrix4d m;
  m << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0.0, sa, ca, row.d,
       0.0, 0.0, 0.0, 1.0;
  Eigen::Isometry3d t;
  t.matrix() = m;
  return t;
}

void check_dims(const DHParams& model, const JointVector& q) {
  if (static_cast<std::size_t>(q.size()) != model.size()) {
    throw DimensionError("joint vector has " + std::to_string(q.size()) +
                         " entries, model has " + std::to_string(model.size()) + " joints");
  }
}

}  // namespace

std::array<double, 7> Pose::to_array() const {
  return {position.x(), position.y(), position.z(), orientation.w(),
          orientation.x(), orientation.y(), orientation.z()};
}

Pose Pose::from_array(const std::array<double, 7>& a) {
  return Pose(Vec3(a[0], a[1], a[2]), Quat(a[3], a[4], a[5], a[6]));
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.position + a.orientation * b.position, a.orientation * b.orientation);
}

Pose invert(const Pose& a) {
  const Quat qi = a.orientation.conjugate();
  return Pose(-(qi * a.position), qi);
}

Pose fk(const DHParams& model, const JointVector& q) {
  check_dims(model, q);
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  for (std::size_t i = 0; i < model.size(); ++i) t = t * dh_transform(model[i], q[static_cast<Eigen::Index>(i)]);
  return Pose(t.translation(), Quat(t.rotation()));
}

Jacobian jacobian(const DHParams& model, const JointVector& q) {
  check_dims(model, q);
  const auto n = static_cast<Eigen::Index>(model.size());
  std::vector<Eigen::Isometry3d> frames;
  frames.reserve(model.size() + 1);
  frames.push_back(Eigen::Isometry3d::Identity());
  for (Eigen::Index i = 0; i < n; ++i)
    frames.push_back(frames.back() * dh_transform(model[static_cast<std::size_t>(i)], q[i]));

  const Vec3 tip = frames.back().translation();
  Jacobian J(6, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = frames[static_cast<std::size_t>(i)];
    const Vec3 z = f.linear().col(2);
    J.block<3, 1>(0, i) = z.cross(tip - f.translation());
    J.block<3, 1>(3, i) = z;
  }
  return J;
}

JointVector dls_velocity_ik(const Jacobian& J, const Twist& v, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("damping must be non-negative");
  const Eigen::Matrix<double, 6, 6> A =
      J * J.transpose() + (lambda * lambda) * Eigen::Matrix<double, 6, 6>::Identity();
  const Vec6 rhs = v.as_vector();
  if (lambda > 0.0) return J.transpose() * A.ldlt().solve(rhs);

  Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(A);
  if (!lu.isInvertible()) throw SingularityError("J J^T is singular and damping is zero");
  return J.transpose() * lu.solve(rhs);
}

Pixel project(const Intrinsics& K, const Vec3& p) {
  if (!(p.z() > 0.0)) throw BehindCameraError("point is not in front of the camera");
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Vec3 deproject(const Intrinsics& K, const Pixel& px, double depth) {
  if (!(depth > 0.0)) throw InvalidDepthError("depth must be positive");
  return {(px.u - K.cx) * depth / K.fx, (px.v - K.cy) * depth / K.fy, depth};
}

Vec3 quat_log(const Quat& qin) {
  Quat q = qin.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 im = q.vec();
  const double s = im.norm();
  if (s < 1e-12) return 2.0 * im;
  return im * (2.0 * std::atan2(s, q.w()) / s);
}

Quat slerp_shortest(const Quat& a, const Quat& b, double t) {
  Quat bb = b;
  double dot = a.dot(b);
  if (dot < 0.0) {
    bb.coeffs() = -bb.coeffs();
    dot = -dot;
  }
  if (dot > 1.0 - 1e-12) {
    Quat r;
    r.coeffs() = (1.0 - t) * a.coeffs() + t * bb.coeffs();
    return r.normalized();
  }
  const double theta = std::acos(dot);
  const double s = std::sin(theta);
  Quat r;
  r.coeffs() = (std::sin((1.0 - t) * theta) / s) * a.coeffs() + (std::sin(t * theta) / s) * bb.coeffs();
  return r.normalized();
}

}  // namespace deskcell
