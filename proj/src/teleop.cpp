#include "deskcell/teleop.hpp"

#include <algorithm>
#include <cmath>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <json.hpp>

#include "deskcell/errors.hpp"
#include "deskcell/policy.hpp"

namespace deskcell {

using nlohmann::json;

Twist map_input(const InputSample& sample, const InputGains& gains) {
  auto shape = [&](double a) {
    a = std::clamp(std::isfinite(a) ? a : 0.0, -1.0, 1.0);
    const double m = std::abs(a);
    if (m <= gains.deadzone) return 0.0;
    return std::copysign((m - gains.deadzone) / (1.0 - gains.deadzone), a);
  };
  Twist t;
  for (int i = 0; i < 3; ++i) {
    t.linear[i] = shape(sample.axes[static_cast<std::size_t>(i)]) * gains.v_max;
    t.angular[i] = shape(sample.axes[static_cast<std::size_t>(i + 3)]) * gains.w_max;
  }
  return t;
}

Thumbnail downscale(const Frame& frame, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("thumbnail size must be positive");
  Thumbnail th{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * width * height))};
  const double sx = static_cast<double>(frame.width) / width;
  const double sy = static_cast<double>(frame.height) / height;
  for (int ty = 0; ty < height; ++ty) {
    const double y0 = ty * sy, y1 = (ty + 1) * sy;
    for (int tx = 0; tx < width; ++tx) {
      const double x0 = tx * sx, x1 = (tx + 1) * sx;
      double acc[3] = {0, 0, 0};
      double area = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)) && y < frame.height; ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)) && x < frame.width; ++x) {
          const double w = wy * (std::min<double>(x + 1, x1) - std::max<double>(x, x0));
          const auto* px = frame.rgb_at(x, y);
          for (int c = 0; c < 3; ++c) acc[c] += w * px[c];
          area += w;
        }
      }
      auto* out = &th.rgb[3 * static_cast<std::size_t>(ty * width + tx)];
      for (int c = 0; c < 3; ++c)
        out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc[c] / area), 0L, 255L));
    }
  }
  return th;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

namespace {

std::string error_message(const std::string& code, const std::string& text) {
  return json{{"type", "error"}, {"code", code}, {"message", text}}.dump();
}

InputSample parse_input(const json& j) {
  InputSample s;
  const auto& axes = j.at("axes");
  if (!axes.is_array() || axes.size() != 6) throw std::invalid_argument("axes must be an array of 6 numbers");
  for (std::size_t i = 0; i < 6; ++i) {
    if (!axes[i].is_number()) throw std::invalid_argument("axes must be numbers");
    const double a = axes[i].get<double>();
    s.axes[i] = std::isfinite(a) ? std::clamp(a, -1.0, 1.0) : 0.0;
  }
  if (j.contains("buttons")) {
    const auto& b = j.at("buttons");
    if (!b.is_object()) throw std::invalid_argument("buttons must be an object");
    s.gripper_toggle = b.value("gripper_toggle", false);
    s.estop = b.value("estop", false);
  }
  return s;
}

}  // namespace

GatewayCore::GatewayCore(Workcell& wc, GatewayOptions options)
    : wc_(wc), options_(std::move(options)), client_(wc.connect()), accel_(wc.limits().qdd_max.maxCoeff()) {
  client_.open(wc.config().robot.state_rate_hz);
  wc_.add_listener(this);
}

GatewayCore::~GatewayCore() {
  wc_.remove_listener(this);
  if (recording_) recording_->abort();
  client_.close();
}

void GatewayCore::set_notify(std::function<void(int)> notify) {
  std::lock_guard lock(m_);
  notify_ = std::move(notify);
}

int GatewayCore::open(bool wants_operator) {
  int id;
  {
    std::lock_guard lock(m_);
    id = next_id_++;
    auto& c = connections_[id];
    if (wants_operator && !operator_) {
      operator_ = id;
      c.is_operator = true;
    } else if (wants_operator) {
      push(id, error_message("busy", "another operator is connected; joined as observer"), false);
    }
    push(id, status_message(), false);
  }
  flush_notifications();
  return id;
}

void GatewayCore::close(int id) {
  std::lock_guard lock(m_);
  connections_.erase(id);
  if (operator_ == id) {
    operator_.reset();
    operator_left_ = true;
  }
}

void GatewayCore::receive(int id, std::string text) {
  std::lock_guard lock(m_);
  if (connections_.count(id)) inbox_.emplace_back(id, std::move(text));
}

std::vector<std::string> GatewayCore::take(int id) {
  std::lock_guard lock(m_);
  std::vector<std::string> out;
  const auto it = connections_.find(id);
  if (it == connections_.end()) return out;
  for (auto& o : it->second.outbox) out.push_back(std::move(o.text));
  it->second.outbox.clear();
  return out;
}

bool GatewayCore::is_open(int id) const {
  std::lock_guard lock(m_);
  return connections_.count(id) > 0;
}

std::optional<int> GatewayCore::operator_id() const {
  std::lock_guard lock(m_);
  return operator_;
}

std::size_t GatewayCore::episodes_recorded() const {
  std::lock_guard lock(m_);
  return episodes_recorded_;
}

bool GatewayCore::recording() const {
  std::lock_guard lock(m_);
  return recording_ != nullptr;
}

// Requires m_. Thumbnails may be evicted to make room; control and state
// messages never are, so a connection that cannot keep up with those is
// closed instead.
void GatewayCore::push(int id, std::string text, bool droppable) {
  const auto it = connections_.find(id);
  if (it == connections_.end()) return;
  auto& box = it->second.outbox;
  if (box.size() >= options_.outbox_capacity) {
    const auto victim = std::find_if(box.begin(), box.end(), [](const Outgoing& o) { return o.droppable; });
    if (victim != box.end()) {
      box.erase(victim);
    } else if (droppable) {
      return;
    } else {
      it->second.closed = true;
    }
  }
  box.push_back({std::move(text), droppable});
  to_notify_.push_back(id);
}

void GatewayCore::broadcast(const std::string& text, bool droppable) {
  for (auto& [id, c] : connections_) push(id, text, droppable);
}

void GatewayCore::flush_notifications() {
  std::vector<int> ids;
  std::function<void(int)> notify;
  {
    std::lock_guard lock(m_);
    ids.swap(to_notify_);
    notify = notify_;
  }
  if (!notify) return;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) notify(id);
}

std::string GatewayCore::status_message(bool aborted) const {
  json j = {{"type", "record_status"},
            {"active", recording_ != nullptr},
            {"episode_id", recording_id_},
            {"frameset_count", recording_ ? recording_->recorded() : 0},
            {"dropped_framesets", recording_ ? recording_->dropped() : 0},
            {"episodes_recorded", episodes_recorded_}};
  if (aborted) j["aborted"] = true;
  return j.dump();
}

void GatewayCore::start_recording(int id) {
  if (recording_) {
    push(id, error_message("recording_active", "a recording is already running"), false);
    return;
  }
  auto episodes = read_dataset_index(options_.out_dir);
  recording_id_ = episode_dir_name(episodes.size());
  recording_ = std::make_unique<RecordingListener>(wc_, recording_id_);
  broadcast(status_message(), false);
}

void GatewayCore::stop_recording(int id) {
  if (!recording_) {
    push(id, error_message("not_recording", "no recording is running"), false);
    return;
  }
  auto rec = std::move(recording_);
  try {
    std::filesystem::create_directories(options_.out_dir);
    std::string hash;
    auto episodes = read_dataset_index(options_.out_dir, &hash);
    if (!episodes.empty() && hash != wc_.hash())
      throw WriteError("dataset directory holds episodes of another config");
    const auto meta = rec->finish(options_.out_dir / recording_id_);
    episodes.push_back(recording_id_);
    write_dataset_index(options_.out_dir, wc_.hash(), episodes);
    ++episodes_recorded_;
    json j = json::parse(status_message());
    j["frameset_count"] = meta.frameset_count;
    j["dropped_framesets"] = meta.dropped_framesets;
    j["path"] = (options_.out_dir / recording_id_).string();
    broadcast(j.dump(), false);
  } catch (const std::exception& e) {
    broadcast(error_message("record_failed", e.what()), false);
    broadcast(status_message(true), false);
  }
}

void GatewayCore::handle_input(int id, const InputSample& s, double now) {
  if (operator_ != id) {
    push(id, error_message("not_operator", "observers cannot send input"), false);
    return;
  }
  if (s.gripper_toggle) {
    gripper_closed_ = !gripper_closed_;
    client_.gripper(gripper_closed_ ? rtde::GripperTarget::close : rtde::GripperTarget::open);
  }
  if (s.estop) {
    pending_twist_.reset();
    client_.speedj(JointVector::Zero(wc_.config().robot.dof), accel_, options_.command_valid_for);
    last_command_time_ = now;
    return;
  }
  pending_twist_ = map_input(s, wc_.config().input);
  send_command(now);
}

void GatewayCore::send_command(double now) {
  if (!pending_twist_ || !client_.latest_state()) return;
  if (now - last_command_time_ < 1.0 / options_.command_hz_cap - 1e-9) return;
  const auto& st = *client_.latest_state();
  const JointVector q = Eigen::Map<const JointVector>(st.q.data(), static_cast<Eigen::Index>(st.q.size()));
  const JointVector qd = twist_to_joints(*wc_.kinematics(), q, *pending_twist_, wc_.config().robot.dls_lambda);
  client_.speedj(qd, accel_, options_.command_valid_for);
  pending_twist_.reset();
  last_command_time_ = now;
}

void GatewayCore::handle(int id, const std::string& text, double now) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    push(id, error_message("malformed", e.what()), false);
    return;
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    push(id, error_message("malformed", "message needs a string 'type'"), false);
    return;
  }
  const auto type = j["type"].get<std::string>();
  try {
    if (type == "input") {
      handle_input(id, parse_input(j), now);
    } else if (type == "record_start" || type == "record_stop") {
      if (operator_ != id) {
        push(id, error_message("not_operator", "only the operator controls recording"), false);
        return;
      }
      if (type == "record_start") start_recording(id);
      else stop_recording(id);
    } else {
      push(id, error_message("unknown_type", "unsupported message type '" + type + "'"), false);
    }
  } catch (const json::exception& e) {
    push(id, error_message("malformed", e.what()), false);
  } catch (const std::invalid_argument& e) {
    push(id, error_message("malformed", e.what()), false);
  }
}

void GatewayCore::on_tick(double now) {
  {
    std::lock_guard lock(m_);
    client_.poll();
    if (now < state_epoch_ + static_cast<double>(state_index_) / options_.state_hz - 1.0) {
      state_epoch_ = now;
      state_index_ = thumb_index_ = 0;
      last_command_time_ = -1e300;
    }

    if (operator_left_) {
      operator_left_ = false;
      pending_twist_.reset();
      if (recording_) {
        recording_->abort();
        recording_.reset();
        broadcast(status_message(true), false);
      }
    }

    auto inbox = std::move(inbox_);
    inbox_.clear();
    for (const auto& [id, text] : inbox)
      if (connections_.count(id)) handle(id, text, now);
    send_command(now);

    if (now + 1e-9 >= state_epoch_ + static_cast<double>(state_index_) / options_.state_hz) {
      ++state_index_;
      const auto snap = wc_.snapshot();
      json j = {{"type", "state"},
                {"t", now},
                {"dof", wc_.config().robot.dof},
                {"q", std::vector<double>(snap.arm.q.data(), snap.arm.q.data() + snap.arm.q.size())},
                {"qd", std::vector<double>(snap.arm.qd.data(), snap.arm.qd.data() + snap.arm.qd.size())},
                {"ee_pose", snap.ee.to_array()},
                {"gripper", snap.arm.gripper},
                {"block", {{"center", {snap.scene.block.center.x(), snap.scene.block.center.y(), snap.scene.block.center.z()}},
                           {"attached", snap.scene.block.attached}}},
                {"table_height", snap.scene.table_height},
                {"spawn_region", {{"x_min", snap.scene.spawn_region.x_min}, {"x_max", snap.scene.spawn_region.x_max},
                                  {"y_min", snap.scene.spawn_region.y_min}, {"y_max", snap.scene.spawn_region.y_max}}},
                {"safe_stopped", snap.safe_stopped}};
      broadcast(j.dump(), false);
      if (recording_) broadcast(status_message(), false);
    }
    std::erase_if(connections_, [&](const auto& kv) {
      if (!kv.second.closed) return false;
      if (operator_ == kv.first) {
        operator_.reset();
        operator_left_ = true;
      }
      return true;
    });
  }
  flush_notifications();
}

void GatewayCore::on_frameset(const Frameset& fs, double now) {
  {
    std::lock_guard lock(m_);
    if (now + 1e-9 < state_epoch_ + static_cast<double>(thumb_index_) / options_.thumb_hz) return;
    ++thumb_index_;
    for (const auto& f : fs.frames) {
      const auto th = downscale(f);
      json j = {{"type", "thumb"},
                {"camera_id", f.camera_id},
                {"trigger_seq", fs.trigger_seq},
                {"width", th.width},
                {"height", th.height},
                {"rgb", base64_encode(th.rgb)}};
      broadcast(j.dump(), true);
    }
  }
  flush_notifications();
}

}  // namespace deskcell
