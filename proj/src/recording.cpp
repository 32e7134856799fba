#include "deskcell/recording.hpp"

#include "deskcell/errors.hpp"
#include "deskcell/evaluation.hpp"

namespace deskcell {

namespace fs = std::filesystem;

EpisodeMeta episode_meta_template(const Workcell& wc, const std::string& episode_id) {
  EpisodeMeta m;
  m.episode_id = episode_id;
  m.workcell_name = wc.config().name;
  m.config_hash = wc.hash();
  m.dof = wc.config().robot.dof;
  for (const auto& e : wc.config().cameras)
    m.cameras.push_back({e.camera.id, e.camera.intrinsics.width, e.camera.intrinsics.height, e.camera.fps});
  m.start_time = iso8601_utc_now();
  return m;
}

RecordingListener::RecordingListener(Workcell& wc, const std::string& episode_id)
    : wc_(wc),
      client_(wc.connect()),
      recorder_(episode_meta_template(wc, episode_id), wc.config().recorder.frameset_queue) {
  client_.open(wc.config().robot.state_rate_hz);
  wc_.add_listener(this);
}

RecordingListener::~RecordingListener() { detach(); }

void RecordingListener::detach() {
  if (!attached_) return;
  attached_ = false;
  wc_.remove_listener(this);
  client_.close();
}

void RecordingListener::on_tick(double now) {
  if (error_) return;
  try {
    for (const auto& m : client_.poll())
      if (const auto* s = std::get_if<rtde::StatePacket>(&m)) recorder_.on_state(*s);
    recorder_.process(now);
  } catch (...) {
    error_ = std::current_exception();
  }
}

void RecordingListener::on_frameset(const Frameset& fs, double) {
  if (!error_) recorder_.offer(fs);
}

EpisodeMeta RecordingListener::finish(const fs::path& dir) {
  detach();
  try {
    if (error_) std::rethrow_exception(error_);
    return recorder_.finish(dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw;
  }
}

void RecordingListener::abort() { detach(); }

EpisodeMeta record_episode(Workcell& wc, const fs::path& dir, const std::string& episode_id,
                           const RecordOptions& options) {
  wc.reset(options.seed);
  std::optional<PolicyDriver> driver;
  if (options.demonstrator) {
    options.demonstrator->reset();
    driver.emplace(wc, *options.demonstrator);
  }
  RecordingListener rec(wc, episode_id);
  wc.run_until(options.duration_s, [&] { return rec.failed() || (options.stop && options.stop()); });
  driver.reset();
  return rec.finish(dir);
}

std::vector<EpisodeMeta> record_dataset(Workcell& wc, const fs::path& root, const DatasetOptions& options) {
  fs::create_directories(root);
  std::string existing_hash;
  auto episodes = read_dataset_index(root, &existing_hash);
  if (!episodes.empty() && existing_hash != wc.hash())
    throw WriteError("dataset at " + root.string() + " was recorded with config " + existing_hash);

  std::vector<EpisodeMeta> metas;
  for (int i = 0; i < options.episodes; ++i) {
    const std::size_t index = episodes.size();
    const auto name = episode_dir_name(index);
    RecordOptions ro;
    ro.duration_s = options.duration_s;
    ro.seed = options.base_seed + index;
    ro.demonstrator = options.demonstrator;
    metas.push_back(record_episode(wc, root / name, name, ro));
    episodes.push_back(name);
    write_dataset_index(root, wc.hash(), episodes);
  }
  return metas;
}

}  // namespace deskcell
