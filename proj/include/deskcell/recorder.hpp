#pragma once

// Episodic recording: framesets paired with robot state resampled at the
// frameset's master timestamp, stored as raw little-endian tracks.
//
// Episode directory layout
//   meta.json           EpisodeMeta, sorted keys
//   robot_states.bin    "EPRS" | version u16 | dof u16 | count u32 | records
//   frames_<id>.bin     "EPDF" | version u16 | width u16 | height u16 | fps f32 | count u32 | frames
// A record is trigger_seq u64, master_ts f64, q, qd, ee_pose[7], gripper (all f64).
// A frame is trigger_seq u64, device_ts f64, depth u16[W*H], rgb u8[3*W*H].

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deskcell/camera_rig.hpp"
#include "deskcell/channel.hpp"
#include "deskcell/rtde_wire.hpp"

namespace deskcell {

inline constexpr std::uint16_t kEpisodeFormatVersion = 1;
inline constexpr double kStateGapLimit = 0.1;  // s

struct CameraMeta {
  std::string id;
  int width = 0, height = 0;
  double fps = 30.0;
  bool operator==(const CameraMeta&) const = default;
};

struct EpisodeMeta {
  std::string episode_id;
  std::string workcell_name;
  std::string config_hash;  // 16 hex digits
  int dof = 0;
  std::vector<CameraMeta> cameras;
  std::string start_time;  // ISO-8601 UTC
  std::uint64_t frameset_count = 0;
  std::uint64_t dropped_framesets = 0;
  std::uint16_t format_version = kEpisodeFormatVersion;
  bool operator==(const EpisodeMeta&) const = default;
};

struct RobotStateRecord {
  std::uint64_t trigger_seq = 0;
  double master_ts = 0.0;
  std::vector<double> q, qd;
  std::array<double, 7> ee_pose{0, 0, 0, 1, 0, 0, 0};
  double gripper = 1.0;
  bool operator==(const RobotStateRecord&) const = default;
};

struct Episode {
  EpisodeMeta meta;
  std::vector<RobotStateRecord> records;
  std::vector<std::vector<Frame>> frames;  // per camera, in meta.cameras order
};

std::size_t robot_state_record_size(int dof);
std::size_t frame_record_size(int width, int height);

/// Interpolates q, qd and EE position linearly, EE orientation by shortest
/// arc slerp, and holds the gripper from the earlier sample. Returns the
/// packet's values bitwise when t hits a packet timestamp. Throws
/// StateGapError when no packet lies within 0.1 s of t.
RobotStateRecord resample_state(std::span<const rtde::StatePacket> states, double t);

/// Throws WriteError (after removing partial files) on I/O failure.
void write_episode(const std::filesystem::path& dir, const EpisodeMeta& meta,
                   const std::vector<RobotStateRecord>& records, const std::vector<std::vector<Frame>>& frames);

/// Throws FormatError on bad magic or unsupported version, and
/// CorruptEpisodeError on count or size mismatches.
Episode read_episode(const std::filesystem::path& dir);

std::string meta_to_json(const EpisodeMeta& meta);
EpisodeMeta meta_from_json(const std::string& text);

struct EpisodeCheck {
  bool valid = false;
  std::vector<std::string> problems;
};

/// Structural validation of an episode on disk: readable, tracks aligned,
/// master_ts strictly increasing and no dropped framesets.
EpisodeCheck validate_episode(const std::filesystem::path& dir);

/// `dataset.json` listing episode directories under a shared config hash.
void write_dataset_index(const std::filesystem::path& root, const std::string& config_hash,
                         const std::vector<std::string>& episode_dirs);
std::vector<std::string> read_dataset_index(const std::filesystem::path& root, std::string* config_hash = nullptr);

std::string episode_dir_name(std::size_t index);
std::string iso8601_utc_now();

/// Buffers one episode. Framesets arrive through a bounded queue (overflow
/// counts as a dropped frameset); robot state arrives as STATE packets.
/// Each frameset is resampled once a state at or after its master time has
/// been seen.
class EpisodeRecorder {
 public:
  EpisodeRecorder(EpisodeMeta meta_template, std::size_t queue_capacity);

  /// Non-blocking; false means the frameset was dropped.
  bool offer(Frameset fs);
  void on_state(const rtde::StatePacket& packet);

  /// Pairs queued framesets with state. Throws StateGapError when a
  /// frameset has waited past the gap limit without bracketing state.
  void process(double now);

  std::uint64_t recorded() const { return records_.size(); }
  std::uint64_t dropped() const { return dropped_; }

  /// Pairs whatever is still pending (holding the last state within the gap
  /// limit), writes the episode and returns its metadata.
  EpisodeMeta finish(const std::filesystem::path& dir);

 private:
  void pair(const Frameset& fs, bool allow_hold);

  EpisodeMeta meta_;
  BoundedQueue<Frameset> queue_;
  std::deque<Frameset> waiting_;
  std::vector<rtde::StatePacket> states_;
  std::vector<RobotStateRecord> records_;
  std::vector<std::vector<Frame>> frames_;
  std::uint64_t dropped_ = 0;
};

}  // namespace deskcell
