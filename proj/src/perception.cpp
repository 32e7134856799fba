#include "deskcell/perception.hpp"

#include <stdexcept>

namespace deskcell {

namespace {

struct FrameJob {
  const Frame* frame;
  Eigen::Matrix3d R;
  Vec3 t;
  Intrinsics K;
};

std::vector<FrameJob> plan(const Frameset& fs, const Calibration& calib, int stride, PointCloud& cloud) {
  if (stride < 1) throw std::invalid_argument("stride must be positive");
  std::vector<FrameJob> jobs;
  for (const auto& f : fs.frames) {
    const auto it = calib.find(f.camera_id);
    if (it == calib.end()) throw CalibrationError("no calibration for camera '" + f.camera_id + "'");
    jobs.push_back({&f, it->second.extrinsic.orientation.toRotationMatrix(), it->second.extrinsic.position,
                    it->second.intrinsics});
    cloud.camera_ids.push_back(f.camera_id);
  }
  return jobs;
}

// Same arithmetic as deproject() followed by the extrinsic, inlined.
inline Vec3 to_world(const FrameJob& j, int u, int v, std::uint16_t mm) {
  const double z = mm * 1e-3;
  const Vec3 pc((u - j.K.cx) * z / j.K.fx, (v - j.K.cy) * z / j.K.fy, z);
  return j.R * pc + j.t;
}

void fuse_row(const FrameJob& j, int v, int stride, std::vector<Vec3>& out) {
  const Frame& f = *j.frame;
  for (int u = 0; u < f.width; u += stride) {
    const auto mm = f.depth_at(u, v);
    if (mm > 0) out.push_back(to_world(j, u, v, mm));
  }
}

}  // namespace

PointCloud fuse_serial(const Frameset& fs, const Calibration& calib, int stride) {
  PointCloud cloud;
  const auto jobs = plan(fs, calib, stride, cloud);
  for (std::size_t c = 0; c < jobs.size(); ++c) {
    const auto& j = jobs[c];
    for (int v = 0; v < j.frame->height; v += stride) {
      const auto before = cloud.points.size();
      fuse_row(j, v, stride, cloud.points);
      cloud.source.insert(cloud.source.end(), cloud.points.size() - before, static_cast<std::uint16_t>(c));
    }
  }
  return cloud;
}

PointCloud fuse_parallel(const Frameset& fs, const Calibration& calib, int stride) {
  PointCloud cloud;
  const auto jobs = plan(fs, calib, stride, cloud);

  // One bucket per (camera, sampled row); concatenated in order afterwards so
  // the result matches the serial kernel exactly.
  std::vector<std::pair<std::size_t, int>> rows;
  for (std::size_t c = 0; c < jobs.size(); ++c)
    for (int v = 0; v < jobs[c].frame->height; v += stride) rows.emplace_back(c, v);
  std::vector<std::vector<Vec3>> buckets(rows.size());

  const auto n = static_cast<long>(rows.size());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) {
    const auto& [c, v] = rows[static_cast<std::size_t>(r)];
    fuse_row(jobs[c], v, stride, buckets[static_cast<std::size_t>(r)]);
  }

  std::size_t total = 0;
  for (const auto& b : buckets) total += b.size();
  cloud.points.reserve(total);
  cloud.source.reserve(total);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    cloud.points.insert(cloud.points.end(), buckets[r].begin(), buckets[r].end());
    cloud.source.insert(cloud.source.end(), buckets[r].size(), static_cast<std::uint16_t>(rows[r].first));
  }
  return cloud;
}

Vec3 locate_block(const PointCloud& cloud, double table_height, const LocateParams& params) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  const double z_min = table_height + params.above_table_margin;
  for (const auto& p : cloud.points) {
    if (p.z() > z_min) {
      sum += p;
      ++n;
    }
  }
  if (n < params.min_points)
    throw NoTargetError("only " + std::to_string(n) + " points above the table");
  return sum / static_cast<double>(n);
}

}  // namespace deskcell
