#pragma once

// Recording sessions: an EpisodeRecorder fed from a workcell's frameset
// stream and its own RTDE state subscription.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "deskcell/policy.hpp"
#include "deskcell/recorder.hpp"
#include "deskcell/workcell.hpp"

namespace deskcell {

EpisodeMeta episode_meta_template(const Workcell& wc, const std::string& episode_id);

/// Collects one episode while attached to the workcell. Errors raised while
/// pairing (StateGapError) are kept and rethrown by finish().
class RecordingListener : public WorkcellListener {
 public:
  RecordingListener(Workcell& wc, const std::string& episode_id);
  ~RecordingListener() override;

  void on_tick(double now) override;
  void on_frameset(const Frameset& fs, double now) override;

  std::uint64_t recorded() const { return recorder_.recorded(); }
  std::uint64_t dropped() const { return recorder_.dropped(); }
  bool failed() const { return error_ != nullptr; }

  /// Detaches, writes the episode into `dir` and returns its metadata. On
  /// any error the directory is removed and the error rethrown.
  EpisodeMeta finish(const std::filesystem::path& dir);
  /// Detaches and discards everything.
  void abort();

 private:
  void detach();

  Workcell& wc_;
  RtdeClient client_;
  EpisodeRecorder recorder_;
  std::exception_ptr error_;
  bool attached_ = true;
};

struct RecordOptions {
  double duration_s = 15.0;
  std::uint64_t seed = 0;
  Policy* demonstrator = nullptr;  // drives the robot while recording, if set
  std::function<bool()> stop;      // polled after every event
};

/// Resets the workcell, records one episode into `dir` and returns its meta.
EpisodeMeta record_episode(Workcell& wc, const std::filesystem::path& dir, const std::string& episode_id,
                           const RecordOptions& options);

struct DatasetOptions {
  int episodes = 1;
  double duration_s = 15.0;
  std::uint64_t base_seed = 0;
  Policy* demonstrator = nullptr;
};

/// Records episodes episode_0000.. under `root` (continuing the numbering
/// of an existing dataset) and rewrites dataset.json.
std::vector<EpisodeMeta> record_dataset(Workcell& wc, const std::filesystem::path& root, const DatasetOptions& options);

}  // namespace deskcell
