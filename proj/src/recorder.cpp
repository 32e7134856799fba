#include "deskcell/recorder.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "deskcell/geometry.hpp"

namespace deskcell {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "episode tracks are written with native little-endian I/O");

constexpr char kStatesMagic[4] = {'E', 'P', 'R', 'S'};
constexpr char kFramesMagic[4] = {'E', 'P', 'D', 'F'};
constexpr std::size_t kStatesHeader = 12;
constexpr std::size_t kFramesHeader = 18;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void put_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

std::string frames_file(const std::string& id) { return "frames_" + id + ".bin"; }

void check_stream(const std::ostream& os, const fs::path& p) {
  if (!os) throw WriteError("failed writing " + p.string());
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorruptEpisodeError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T load(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

}  // namespace

std::size_t robot_state_record_size(int dof) { return 8 + 8 + 16 * static_cast<std::size_t>(dof) + 56 + 8; }

std::size_t frame_record_size(int width, int height) {
  return 16 + 5 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

// ---------------------------------------------------------------------------

RobotStateRecord resample_state(std::span<const rtde::StatePacket> states, double t) {
  if (states.empty()) throw StateGapError("no robot state available");
  auto from_packet = [](const rtde::StatePacket& p) {
    RobotStateRecord r;
    r.master_ts = p.timestamp;
    r.q = p.q;
    r.qd = p.qd;
    r.ee_pose = p.ee_pose;
    r.gripper = p.gripper;
    return r;
  };

  // first packet with timestamp >= t
  const auto hi = std::lower_bound(states.begin(), states.end(), t,
                                   [](const rtde::StatePacket& p, double x) { return p.timestamp < x; });
  if (hi != states.end() && hi->timestamp == t) {
    auto r = from_packet(*hi);
    r.master_ts = t;
    return r;
  }
  if (hi == states.begin()) {
    if (hi->timestamp - t > kStateGapLimit) throw StateGapError("no robot state within 0.1 s of t");
    auto r = from_packet(*hi);
    r.master_ts = t;
    return r;
  }
  const auto& a = *(hi - 1);
  if (hi == states.end()) {
    if (t - a.timestamp > kStateGapLimit) throw StateGapError("no robot state within 0.1 s of t");
    auto r = from_packet(a);
    r.master_ts = t;
    return r;
  }
  const auto& b = *hi;
  if (std::min(t - a.timestamp, b.timestamp - t) > kStateGapLimit)
    throw StateGapError("no robot state within 0.1 s of t");

  const double s = (t - a.timestamp) / (b.timestamp - a.timestamp);
  RobotStateRecord r;
  r.master_ts = t;
  r.q.resize(a.q.size());
  r.qd.resize(a.qd.size());
  for (std::size_t i = 0; i < a.q.size(); ++i) {
    r.q[i] = a.q[i] + s * (b.q[i] - a.q[i]);
    r.qd[i] = a.qd[i] + s * (b.qd[i] - a.qd[i]);
  }
  for (int i = 0; i < 3; ++i) r.ee_pose[i] = a.ee_pose[i] + s * (b.ee_pose[i] - a.ee_pose[i]);
  const Quat qa(a.ee_pose[3], a.ee_pose[4], a.ee_pose[5], a.ee_pose[6]);
  const Quat qb(b.ee_pose[3], b.ee_pose[4], b.ee_pose[5], b.ee_pose[6]);
  const Quat qs = slerp_shortest(qa, qb, s);
  r.ee_pose[3] = qs.w();
  r.ee_pose[4] = qs.x();
  r.ee_pose[5] = qs.y();
  r.ee_pose[6] = qs.z();
  r.gripper = a.gripper;
  return r;
}

// ---------------------------------------------------------------------------

std::string meta_to_json(const EpisodeMeta& m) {
  json cams = json::array();
  for (const auto& c : m.cameras) cams.push_back({{"id", c.id}, {"width", c.width}, {"height", c.height}, {"fps", c.fps}});
  json j = {{"episode_id", m.episode_id},
            {"workcell_name", m.workcell_name},
            {"config_hash", m.config_hash},
            {"dof", m.dof},
            {"cameras", cams},
            {"start_time", m.start_time},
            {"frameset_count", m.frameset_count},
            {"dropped_framesets", m.dropped_framesets},
            {"format_version", m.format_version}};
  return j.dump(2) + "\n";
}

EpisodeMeta meta_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    EpisodeMeta m;
    m.episode_id = j.at("episode_id").get<std::string>();
    m.workcell_name = j.at("workcell_name").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.dof = j.at("dof").get<int>();
    for (const auto& c : j.at("cameras"))
      m.cameras.push_back({c.at("id").get<std::string>(), c.at("width").get<int>(), c.at("height").get<int>(),
                           c.at("fps").get<double>()});
    m.start_time = j.at("start_time").get<std::string>();
    m.frameset_count = j.at("frameset_count").get<std::uint64_t>();
    m.dropped_framesets = j.at("dropped_framesets").get<std::uint64_t>();
    m.format_version = j.at("format_version").get<std::uint16_t>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }
}

void write_episode(const fs::path& dir, const EpisodeMeta& meta, const std::vector<RobotStateRecord>& records,
                   const std::vector<std::vector<Frame>>& frames) {
  if (records.size() != meta.frameset_count || frames.size() != meta.cameras.size())
    throw std::invalid_argument("episode counts are inconsistent with its metadata");
  for (const auto& track : frames)
    if (track.size() != meta.frameset_count) throw std::invalid_argument("frame track count mismatch");

  std::vector<fs::path> written;
  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw WriteError("cannot create " + dir.string() + ": " + ec.message());

    {
      const auto p = dir / "meta.json";
      written.push_back(p);
      std::ofstream os(p, std::ios::binary);
      os << meta_to_json(meta);
      check_stream(os, p);
    }
    {
      const auto p = dir / "robot_states.bin";
      written.push_back(p);
      std::ofstream os(p, std::ios::binary);
      os.write(kStatesMagic, 4);
      put<std::uint16_t>(os, meta.format_version);
      put<std::uint16_t>(os, static_cast<std::uint16_t>(meta.dof));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
      for (const auto& r : records) {
        if (r.q.size() != static_cast<std::size_t>(meta.dof) || r.qd.size() != static_cast<std::size_t>(meta.dof))
          throw std::invalid_argument("robot state record dof mismatch");
        put<std::uint64_t>(os, r.trigger_seq);
        put<double>(os, r.master_ts);
        put_doubles(os, r.q.data(), r.q.size());
        put_doubles(os, r.qd.data(), r.qd.size());
        put_doubles(os, r.ee_pose.data(), r.ee_pose.size());
        put<double>(os, r.gripper);
      }
      os.flush();
      check_stream(os, p);
    }
    for (std::size_t c = 0; c < meta.cameras.size(); ++c) {
      const auto& cam = meta.cameras[c];
      const auto p = dir / frames_file(cam.id);
      written.push_back(p);
      std::ofstream os(p, std::ios::binary);
      os.write(kFramesMagic, 4);
      put<std::uint16_t>(os, meta.format_version);
      put<std::uint16_t>(os, static_cast<std::uint16_t>(cam.width));
      put<std::uint16_t>(os, static_cast<std::uint16_t>(cam.height));
      put<float>(os, static_cast<float>(cam.fps));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(frames[c].size()));
      const auto px = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
      for (const auto& f : frames[c]) {
        if (f.depth.size() != px || f.rgb.size() != 3 * px)
          throw std::invalid_argument("frame of camera " + cam.id + " has the wrong resolution");
        put<std::uint64_t>(os, f.trigger_seq);
        put<double>(os, f.device_ts);
        os.write(reinterpret_cast<const char*>(f.depth.data()), static_cast<std::streamsize>(px * 2));
        os.write(reinterpret_cast<const char*>(f.rgb.data()), static_cast<std::streamsize>(px * 3));
      }
      os.flush();
      check_stream(os, p);
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

Episode read_episode(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("episode directory " + dir.string() + " does not exist");
  Episode ep;
  {
    std::ifstream in(dir / "meta.json");
    if (!in) throw FormatError("missing meta.json in " + dir.string());
    std::stringstream ss;
    ss << in.rdbuf();
    ep.meta = meta_from_json(ss.str());
  }
  const auto& meta = ep.meta;
  if (meta.format_version != kEpisodeFormatVersion)
    throw FormatError("unsupported episode format version " + std::to_string(meta.format_version));

  {
    const auto bytes = slurp(dir / "robot_states.bin");
    if (bytes.size() < kStatesHeader) throw CorruptEpisodeError("robot_states.bin is truncated");
    if (std::memcmp(bytes.data(), kStatesMagic, 4) != 0) throw FormatError("robot_states.bin has bad magic");
    const auto version = load<std::uint16_t>(&bytes[4]);
    if (version != kEpisodeFormatVersion)
      throw FormatError("unsupported robot_states.bin version " + std::to_string(version));
    const auto dof = load<std::uint16_t>(&bytes[6]);
    const auto count = load<std::uint32_t>(&bytes[8]);
    if (dof != meta.dof) throw CorruptEpisodeError("robot_states.bin dof disagrees with meta.json");
    if (count != meta.frameset_count) throw CorruptEpisodeError("robot_states.bin count disagrees with meta.json");
    const auto rec = robot_state_record_size(dof);
    if (bytes.size() != kStatesHeader + rec * count) throw CorruptEpisodeError("robot_states.bin size mismatch");
    ep.records.resize(count);
    const std::uint8_t* p = bytes.data() + kStatesHeader;
    for (auto& r : ep.records) {
      r.trigger_seq = load<std::uint64_t>(p);
      r.master_ts = load<double>(p + 8);
      p += 16;
      r.q.resize(dof);
      r.qd.resize(dof);
      std::memcpy(r.q.data(), p, 8 * dof);
      p += 8 * dof;
      std::memcpy(r.qd.data(), p, 8 * dof);
      p += 8 * dof;
      std::memcpy(r.ee_pose.data(), p, 56);
      p += 56;
      r.gripper = load<double>(p);
      p += 8;
    }
  }

  for (const auto& cam : meta.cameras) {
    const auto path = dir / frames_file(cam.id);
    const auto bytes = slurp(path);
    if (bytes.size() < kFramesHeader) throw CorruptEpisodeError("frames file of camera " + cam.id + " is truncated");
    if (std::memcmp(bytes.data(), kFramesMagic, 4) != 0)
      throw FormatError("frames file of camera " + cam.id + " has bad magic");
    const auto version = load<std::uint16_t>(&bytes[4]);
    if (version != kEpisodeFormatVersion)
      throw FormatError("unsupported frames version " + std::to_string(version) + " for camera " + cam.id);
    const auto w = load<std::uint16_t>(&bytes[6]);
    const auto h = load<std::uint16_t>(&bytes[8]);
    const auto count = load<std::uint32_t>(&bytes[14]);
    if (w != cam.width || h != cam.height)
      throw CorruptEpisodeError("frames file of camera " + cam.id + " has the wrong resolution");
    if (count != meta.frameset_count)
      throw CorruptEpisodeError("frames file of camera " + cam.id + " count disagrees with meta.json");
    const auto rec = frame_record_size(w, h);
    if (bytes.size() != kFramesHeader + rec * count)
      throw CorruptEpisodeError("frames file of camera " + cam.id + " is truncated or oversized");

    std::vector<Frame> track(count);
    const std::size_t px = static_cast<std::size_t>(w) * h;
    const std::uint8_t* p = bytes.data() + kFramesHeader;
    for (auto& f : track) {
      f.camera_id = cam.id;
      f.width = w;
      f.height = h;
      f.trigger_seq = load<std::uint64_t>(p);
      f.device_ts = load<double>(p + 8);
      p += 16;
      f.depth.resize(px);
      std::memcpy(f.depth.data(), p, 2 * px);
      p += 2 * px;
      f.rgb.assign(p, p + 3 * px);
      p += 3 * px;
    }
    ep.frames.push_back(std::move(track));
  }
  return ep;
}

EpisodeCheck validate_episode(const fs::path& dir) {
  EpisodeCheck check;
  try {
    const auto ep = read_episode(dir);
    if (ep.meta.dropped_framesets != 0)
      check.problems.push_back(std::to_string(ep.meta.dropped_framesets) + " dropped framesets");
    if (ep.records.empty()) check.problems.push_back("episode has no records");
    for (std::size_t i = 1; i < ep.records.size(); ++i) {
      if (ep.records[i].trigger_seq <= ep.records[i - 1].trigger_seq) {
        check.problems.push_back("trigger_seq not strictly increasing at record " + std::to_string(i));
        break;
      }
      if (ep.records[i].master_ts <= ep.records[i - 1].master_ts) {
        check.problems.push_back("master_ts not strictly increasing at record " + std::to_string(i));
        break;
      }
    }
    for (std::size_t c = 0; c < ep.frames.size(); ++c)
      for (std::size_t i = 0; i < ep.records.size(); ++i)
        if (ep.frames[c][i].trigger_seq != ep.records[i].trigger_seq) {
          check.problems.push_back("camera " + ep.meta.cameras[c].id + " track misaligned at record " +
                                   std::to_string(i));
          break;
        }
  } catch (const Error& e) {
    check.problems.push_back(e.what());
  }
  check.valid = check.problems.empty();
  return check;
}

void write_dataset_index(const fs::path& root, const std::string& config_hash,
                         const std::vector<std::string>& episode_dirs) {
  json j = {{"config_hash", config_hash}, {"episodes", episode_dirs}};
  std::ofstream os(root / "dataset.json");
  os << j.dump(2) << "\n";
  if (!os) throw WriteError("failed writing dataset.json");
}

std::vector<std::string> read_dataset_index(const fs::path& root, std::string* config_hash) {
  std::ifstream in(root / "dataset.json");
  if (!in) return {};
  try {
    const auto j = json::parse(in);
    if (config_hash) *config_hash = j.at("config_hash").get<std::string>();
    return j.at("episodes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset.json: ") + e.what());
  }
}

std::string episode_dir_name(std::size_t index) {
  std::ostringstream os;
  os << "episode_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

EpisodeRecorder::EpisodeRecorder(EpisodeMeta meta_template, std::size_t queue_capacity)
    : meta_(std::move(meta_template)), queue_(queue_capacity), frames_(meta_.cameras.size()) {}

bool EpisodeRecorder::offer(Frameset fs) {
  // Partial framesets cannot be stored without breaking track alignment.
  if (fs.partial || !queue_.try_push(std::move(fs))) {
    ++dropped_;
    return false;
  }
  return true;
}

void EpisodeRecorder::on_state(const rtde::StatePacket& packet) {
  if (!states_.empty() && packet.timestamp < states_.back().timestamp) return;
  states_.push_back(packet);
}

void EpisodeRecorder::pair(const Frameset& fs, bool allow_hold) {
  (void)allow_hold;
  auto rec = resample_state(states_, fs.master_ts);
  rec.trigger_seq = fs.trigger_seq;
  records_.push_back(std::move(rec));
  for (std::size_t c = 0; c < meta_.cameras.size(); ++c) {
    const auto it = std::find_if(fs.frames.begin(), fs.frames.end(),
                                 [&](const Frame& f) { return f.camera_id == meta_.cameras[c].id; });
    frames_[c].push_back(*it);
  }
}

void EpisodeRecorder::process(double now) {
  while (auto fs = queue_.try_pop()) waiting_.push_back(std::move(*fs));
  const double latest = states_.empty() ? -1e300 : states_.back().timestamp;
  while (!waiting_.empty()) {
    const auto& fs = waiting_.front();
    if (latest >= fs.master_ts) {
      pair(fs, false);
      waiting_.pop_front();
      continue;
    }
    if (now - fs.master_ts > kStateGapLimit && fs.master_ts - latest > kStateGapLimit)
      throw StateGapError("no robot state within 0.1 s of frameset " + std::to_string(fs.trigger_seq));
    break;
  }
  // Keep a short history behind the oldest frameset still waiting.
  const double keep_from = (waiting_.empty() ? latest : waiting_.front().master_ts) - 2 * kStateGapLimit;
  const auto first_kept = std::find_if(states_.begin(), states_.end(),
                                       [&](const rtde::StatePacket& p) { return p.timestamp >= keep_from; });
  if (first_kept - states_.begin() > 1) states_.erase(states_.begin(), first_kept - 1);
}

EpisodeMeta EpisodeRecorder::finish(const fs::path& dir) {
  while (auto fs = queue_.try_pop()) waiting_.push_back(std::move(*fs));
  while (!waiting_.empty()) {
    pair(waiting_.front(), true);
    waiting_.pop_front();
  }
  EpisodeMeta meta = meta_;
  meta.frameset_count = records_.size();
  meta.dropped_framesets = dropped_;
  write_episode(dir, meta, records_, frames_);
  return meta;
}

}  // namespace deskcell
