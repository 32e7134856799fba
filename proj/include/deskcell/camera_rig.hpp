#pragma once

// Virtual RGB-D cameras on a master/subordinate hardware trigger, with
// imperfect device clocks, and the frameset aligner.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deskcell/channel.hpp"
#include "deskcell/geometry.hpp"
#include "deskcell/rng.hpp"
#include "deskcell/scene.hpp"

namespace deskcell {

enum class CameraRole { master, subordinate };

struct ClockModel {
  double offset_s = 0.0;
  double drift_ppm = 0.0;
  double jitter_sigma_us = 0.0;
};

struct CameraConfig {
  std::string id;
  CameraRole role = CameraRole::subordinate;
  double delay_us = 0.0;  // after the master trigger; 0 for the master
  Intrinsics intrinsics;
  Pose extrinsic;  // camera-to-world
  double fps = 30.0;
  ClockModel clock;
};

inline constexpr std::uint8_t kBlockRgb[3] = {200, 40, 40};
inline constexpr std::uint8_t kTableRgb[3] = {128, 128, 128};
inline constexpr double kMaxDepthM = 8.0;

struct Frame {
  std::string camera_id;
  std::uint64_t trigger_seq = 0;
  double device_ts = 0.0;  // device clock, s
  int width = 0, height = 0;
  std::vector<std::uint16_t> depth;  // mm, 0 = invalid, row-major
  std::vector<std::uint8_t> rgb;     // interleaved rgb, row-major

  std::uint16_t depth_at(int u, int v) const { return depth[static_cast<std::size_t>(v * width + u)]; }
  const std::uint8_t* rgb_at(int u, int v) const { return &rgb[3 * static_cast<std::size_t>(v * width + u)]; }
};

struct Frameset {
  std::uint64_t trigger_seq = 0;
  double master_ts = 0.0;  // true time, s
  std::vector<Frame> frames;
  bool partial = false;
};

/// True capture instant of trigger k for a camera delayed by delay_us.
double trigger_time(double fps, std::uint64_t k, double delay_us);

/// ts = t (1 + drift) + offset + N(0, sigma).
double device_timestamp(double true_t, const ClockModel& clock, Rng& rng);

/// Inverse of the deterministic part of device_timestamp.
double correct_timestamp(double device_ts, const ClockModel& clock);

/// Raycasts the table plane and the block into a depth + color frame.
/// Serial reference kernel and its row-parallel (OpenMP) twin; outputs are
/// identical.
void render_serial(const Scene& scene, const CameraConfig& cam, Frame& out);
void render_parallel(const Scene& scene, const CameraConfig& cam, Frame& out);

Frame render(const Scene& scene, const CameraConfig& camera);

/// N cameras sharing one trigger line. All randomness derives from the rig
/// seed; every camera has its own stream so rendering order cannot change
/// the output.
class CameraRig {
 public:
  CameraRig(std::vector<CameraConfig> cameras, std::uint64_t seed, std::size_t queue_capacity = 64);

  void reseed(std::uint64_t seed);
  void set_enabled(const std::string& id, bool enabled);

  /// Captures trigger k of the current scene into each camera's queue.
  void trigger(const Scene& scene, std::uint64_t k);

  /// Single consumer side: everything queued, camera by camera.
  std::vector<Frame> drain();

  const std::vector<CameraConfig>& cameras() const { return cameras_; }
  double fps() const { return fps_; }
  std::uint64_t dropped_frames() const { return dropped_; }

 private:
  std::vector<CameraConfig> cameras_;
  std::vector<Rng> rngs_;
  std::vector<bool> enabled_;
  std::vector<std::unique_ptr<BoundedQueue<Frame>>> queues_;
  double fps_ = 30.0;
  std::uint64_t dropped_ = 0;
};

enum class AlignMode { sequence, timestamp };

/// Groups per-camera frames into framesets, in trigger order. A set that is
/// still incomplete two frame periods after its master time is emitted
/// flagged partial.
class Aligner {
 public:
  Aligner(std::vector<CameraConfig> cameras, AlignMode mode, double window_s);

  void push(Frame frame);
  /// Framesets that are ready at true time `now`.
  std::vector<Frameset> poll(double now);
  /// Everything pending, incomplete sets flagged partial.
  std::vector<Frameset> flush();

  std::size_t pending() const;

 private:
  struct Pending {
    double master_ts = 0.0;
    std::uint64_t seq = 0;
    std::vector<std::optional<Frame>> frames;
    bool complete() const;
  };
  struct Candidate {
    Frame frame;
    double true_ts;
  };

  std::vector<Frameset> poll_sequence(double now, bool force);
  std::vector<Frameset> poll_timestamp(double now, bool force);
  Frameset finish(Pending&& p) const;
  std::optional<std::size_t> index_of(const std::string& id) const;

  std::vector<CameraConfig> cameras_;
  std::size_t master_index_ = 0;
  AlignMode mode_;
  double window_s_;
  double period_;

  std::map<std::uint64_t, Pending> by_seq_;
  std::vector<Pending> master_queue_;             // timestamp mode
  std::vector<std::vector<Candidate>> candidates_;  // timestamp mode, per camera
};

}  // namespace deskcell
