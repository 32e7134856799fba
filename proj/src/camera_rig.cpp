#include "deskcell/camera_rig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deskcell {

namespace {

struct RayCaster {
  Eigen::Matrix3d R;
  Vec3 origin;
  Intrinsics K;
  double table_z;
  Vec3 box_lo, box_hi;

  RayCaster(const Scene& scene, const CameraConfig& cam)
      : R(cam.extrinsic.orientation.toRotationMatrix()),
        origin(cam.extrinsic.position),
        K(cam.intrinsics),
        table_z(scene.table_height),
        box_lo(scene.block.center - scene.block.half_extents),
        box_hi(scene.block.center + scene.block.half_extents) {}

  // Writes depth (mm) and color for pixel (u, v). The ray direction has unit
  // camera-z, so the ray parameter is the optical-axis depth.
  void cast(int u, int v, std::uint16_t& depth, std::uint8_t* rgb) const {
    const Vec3 dc((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
    const Vec3 d = R * dc;
    double best = std::numeric_limits<double>::infinity();
    const std::uint8_t* color = nullptr;

    if (std::abs(d.z()) > 1e-15) {
      const double t = (table_z - origin.z()) / d.z();
      if (t > 0.0) {
        best = t;
        color = kTableRgb;
      }
    }

    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int i = 0; i < 3 && !miss; ++i) {
      if (std::abs(d[i]) < 1e-15) {
        if (origin[i] < box_lo[i] || origin[i] > box_hi[i]) miss = true;
        continue;
      }
      double t1 = (box_lo[i] - origin[i]) / d[i];
      double t2 = (box_hi[i] - origin[i]) / d[i];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
    }
    if (!miss && tmax >= tmin && tmin > 0.0 && tmin <= best) {
      best = tmin;
      color = kBlockRgb;
    }

    if (color && best <= kMaxDepthM) {
      depth = static_cast<std::uint16_t>(std::lround(best * 1000.0));
      rgb[0] = color[0];
      rgb[1] = color[1];
      rgb[2] = color[2];
    } else {
      depth = 0;
      rgb[0] = rgb[1] = rgb[2] = 0;
    }
  }
};

void prepare(const CameraConfig& cam, Frame& out) {
  out.camera_id = cam.id;
  out.width = cam.intrinsics.width;
  out.height = cam.intrinsics.height;
  const auto n = static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height);
  out.depth.resize(n);
  out.rgb.resize(3 * n);
}

}  // namespace

double trigger_time(double fps, std::uint64_t k, double delay_us) {
  return static_cast<double>(k) / fps + delay_us * 1e-6;
}

double device_timestamp(double true_t, const ClockModel& clock, Rng& rng) {
  double ts = true_t * (1.0 + clock.drift_ppm * 1e-6) + clock.offset_s;
  if (clock.jitter_sigma_us > 0.0) ts += clock.jitter_sigma_us * 1e-6 * rng.normal();
  return ts;
}

double correct_timestamp(double device_ts, const ClockModel& clock) {
  return (device_ts - clock.offset_s) / (1.0 + clock.drift_ppm * 1e-6);
}

void render_serial(const Scene& scene, const CameraConfig& cam, Frame& out) {
  prepare(cam, out);
  const RayCaster rc(scene, cam);
  for (int v = 0; v < out.height; ++v)
    for (int u = 0; u < out.width; ++u) {
      const auto i = static_cast<std::size_t>(v * out.width + u);
      rc.cast(u, v, out.depth[i], &out.rgb[3 * i]);
    }
}

void render_parallel(const Scene& scene, const CameraConfig& cam, Frame& out) {
  prepare(cam, out);
  const RayCaster rc(scene, cam);
  const int w = out.width, h = out.height;
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const auto i = static_cast<std::size_t>(v * w + u);
      rc.cast(u, v, out.depth[i], &out.rgb[3 * i]);
    }
}

Frame render(const Scene& scene, const CameraConfig& camera) {
  Frame f;
  render_parallel(scene, camera, f);
  return f;
}

// ---------------------------------------------------------------------------

CameraRig::CameraRig(std::vector<CameraConfig> cameras, std::uint64_t seed, std::size_t queue_capacity)
    : cameras_(std::move(cameras)), enabled_(cameras_.size(), true) {
  if (cameras_.empty()) throw std::invalid_argument("camera rig needs at least one camera");
  fps_ = cameras_.front().fps;
  for (std::size_t i = 0; i < cameras_.size(); ++i)
    queues_.push_back(std::make_unique<BoundedQueue<Frame>>(queue_capacity));
  reseed(seed);
}

void CameraRig::reseed(std::uint64_t seed) {
  rngs_.clear();
  for (std::size_t i = 0; i < cameras_.size(); ++i) rngs_.emplace_back(derive_seed(seed, i));
}

void CameraRig::set_enabled(const std::string& id, bool enabled) {
  for (std::size_t i = 0; i < cameras_.size(); ++i)
    if (cameras_[i].id == id) {
      enabled_[i] = enabled;
      return;
    }
  throw std::invalid_argument("no camera with id " + id);
}

void CameraRig::trigger(const Scene& scene, std::uint64_t k) {
  const auto n = static_cast<int>(cameras_.size());
  std::vector<Frame> frames(cameras_.size());
  // Timestamps are drawn serially so the per-camera streams stay in lockstep.
  for (int i = 0; i < n; ++i) {
    const auto& cam = cameras_[static_cast<std::size_t>(i)];
    frames[static_cast<std::size_t>(i)].trigger_seq = k;
    frames[static_cast<std::size_t>(i)].device_ts =
        device_timestamp(trigger_time(cam.fps, k, cam.delay_us), cam.clock, rngs_[static_cast<std::size_t>(i)]);
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (enabled_[idx]) render_serial(scene, cameras_[idx], frames[idx]);
  }
  for (std::size_t i = 0; i < cameras_.size(); ++i) {
    if (!enabled_[i]) continue;
    if (!queues_[i]->try_push(std::move(frames[i]))) ++dropped_;
  }
}

std::vector<Frame> CameraRig::drain() {
  std::vector<Frame> out;
  for (auto& q : queues_)
    while (auto f = q->try_pop()) out.push_back(std::move(*f));
  return out;
}

// ---------------------------------------------------------------------------

bool Aligner::Pending::complete() const {
  return std::all_of(frames.begin(), frames.end(), [](const auto& f) { return f.has_value(); });
}

Aligner::Aligner(std::vector<CameraConfig> cameras, AlignMode mode, double window_s)
    : cameras_(std::move(cameras)), mode_(mode), window_s_(window_s) {
  if (cameras_.empty()) throw std::invalid_argument("aligner needs cameras");
  if (!(window_s_ > 0.0)) throw std::invalid_argument("alignment window must be positive");
  const auto it = std::find_if(cameras_.begin(), cameras_.end(),
                               [](const CameraConfig& c) { return c.role == CameraRole::master; });
  if (it == cameras_.end()) throw std::invalid_argument("aligner needs a master camera");
  master_index_ = static_cast<std::size_t>(it - cameras_.begin());
  period_ = 1.0 / it->fps;
  candidates_.resize(cameras_.size());
}

std::optional<std::size_t> Aligner::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < cameras_.size(); ++i)
    if (cameras_[i].id == id) return i;
  return std::nullopt;
}

void Aligner::push(Frame frame) {
  const auto idx = index_of(frame.camera_id);
  if (!idx) return;
  if (mode_ == AlignMode::sequence) {
    auto& p = by_seq_[frame.trigger_seq];
    if (p.frames.empty()) {
      p.frames.resize(cameras_.size());
      p.seq = frame.trigger_seq;
      p.master_ts = trigger_time(cameras_[master_index_].fps, frame.trigger_seq, 0.0);
    }
    if (!p.frames[*idx]) p.frames[*idx] = std::move(frame);
    return;
  }

  const double true_ts = correct_timestamp(frame.device_ts, cameras_[*idx].clock);
  if (*idx == master_index_) {
    Pending p;
    p.master_ts = true_ts;
    p.seq = frame.trigger_seq;
    p.frames.resize(cameras_.size());
    p.frames[*idx] = std::move(frame);
    master_queue_.push_back(std::move(p));
  } else {
    candidates_[*idx].push_back({std::move(frame), true_ts});
  }
}

Frameset Aligner::finish(Pending&& p) const {
  Frameset fs;
  fs.trigger_seq = p.seq;
  fs.master_ts = p.master_ts;
  fs.partial = !p.complete();
  for (auto& f : p.frames)
    if (f) fs.frames.push_back(std::move(*f));
  return fs;
}

std::vector<Frameset> Aligner::poll_sequence(double now, bool force) {
  std::vector<Frameset> out;
  while (!by_seq_.empty()) {
    auto it = by_seq_.begin();
    const bool timed_out = now > it->second.master_ts + 2.0 * period_;
    if (!it->second.complete() && !timed_out && !force) break;
    out.push_back(finish(std::move(it->second)));
    by_seq_.erase(it);
  }
  return out;
}

std::vector<Frameset> Aligner::poll_timestamp(double now, bool force) {
  std::vector<Frameset> out;
  std::size_t consumed = 0;
  for (; consumed < master_queue_.size(); ++consumed) {
    auto& p = master_queue_[consumed];
    for (std::size_t c = 0; c < cameras_.size(); ++c) {
      if (p.frames[c]) continue;
      auto& cands = candidates_[c];
      const double expected = p.master_ts + cameras_[c].delay_us * 1e-6;
      std::optional<std::size_t> best;
      double best_err = 0.0;
      for (std::size_t j = 0; j < cands.size(); ++j) {
        const double err = std::abs(cands[j].true_ts - expected);
        if (err <= 0.5 * window_s_ && (!best || err < best_err)) {
          best = j;
          best_err = err;
        }
      }
      if (best) {
        p.frames[c] = std::move(cands[*best].frame);
        // Anything older than the match can no longer belong to a later master.
        cands.erase(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(*best) + 1);
      }
    }
    const bool timed_out = now > p.master_ts + 2.0 * period_;
    if (!p.complete() && !timed_out && !force) break;
    out.push_back(finish(std::move(p)));
  }
  master_queue_.erase(master_queue_.begin(), master_queue_.begin() + static_cast<std::ptrdiff_t>(consumed));

  // Drop subordinate frames too old to match anything still queued.
  const double horizon = master_queue_.empty() ? now - 2.0 * period_ : master_queue_.front().master_ts;
  for (std::size_t c = 0; c < cameras_.size(); ++c) {
    auto& cands = candidates_[c];
    const double limit = horizon + cameras_[c].delay_us * 1e-6 - 0.5 * window_s_;
    std::erase_if(cands, [&](const Candidate& x) { return x.true_ts < limit; });
  }
  return out;
}

std::vector<Frameset> Aligner::poll(double now) {
  return mode_ == AlignMode::sequence ? poll_sequence(now, false) : poll_timestamp(now, false);
}

std::vector<Frameset> Aligner::flush() {
  const double inf = std::numeric_limits<double>::infinity();
  return mode_ == AlignMode::sequence ? poll_sequence(inf, true) : poll_timestamp(inf, true);
}

std::size_t Aligner::pending() const {
  return mode_ == AlignMode::sequence ? by_seq_.size() : master_queue_.size();
}

}  // namespace deskcell
