#pragma once

// Operator bridge: 6-axis input mapping, thumbnails, and the gateway core
// that multiplexes console connections onto one commanding RTDE session.
// The core is transport-free; a network layer feeds it text messages and
// drains per-connection outboxes.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deskcell/camera_rig.hpp"
#include "deskcell/config.hpp"
#include "deskcell/recording.hpp"
#include "deskcell/workcell.hpp"

namespace deskcell {

struct InputSample {
  std::array<double, 6> axes{};  // tx ty tz rx ry rz, clamped to [-1, 1]
  bool gripper_toggle = false;
  bool estop = false;
};

/// Per axis: zero inside the deadzone, then rescaled linearly to reach 1 at
/// full deflection; translation scales by v_max and rotation by w_max.
Twist map_input(const InputSample& sample, const InputGains& gains);

struct Thumbnail {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Area-averaging downscale of an RGB frame.
Thumbnail downscale(const Frame& frame, int width = 40, int height = 30);

std::string base64_encode(std::span<const std::uint8_t> bytes);

struct GatewayOptions {
  std::filesystem::path out_dir = "data";
  double state_hz = 15.0;
  double thumb_hz = 5.0;
  double command_hz_cap = 60.0;
  std::size_t outbox_capacity = 8;
  double command_valid_for = 0.1;
};

class GatewayCore : public WorkcellListener {
 public:
  GatewayCore(Workcell& wc, GatewayOptions options);
  ~GatewayCore() override;

  /// Registers a connection. The first connection asking for the operator
  /// role gets it; later ones become observers and receive a busy error.
  int open(bool wants_operator = true);
  void close(int id);
  /// Queues a text message; handled on the next control tick.
  void receive(int id, std::string text);
  /// Drains a connection's outbox.
  std::vector<std::string> take(int id);
  bool is_open(int id) const;
  std::optional<int> operator_id() const;
  /// Called (outside any lock) whenever a connection's outbox gains data.
  void set_notify(std::function<void(int)> notify);

  std::size_t episodes_recorded() const;
  bool recording() const;

  void on_tick(double now) override;
  void on_frameset(const Frameset& fs, double now) override;

 private:
  struct Outgoing {
    std::string text;
    bool droppable;
  };
  struct Connection {
    bool is_operator = false;
    std::deque<Outgoing> outbox;
    bool closed = false;
  };

  void push(int id, std::string text, bool droppable);
  void broadcast(const std::string& text, bool droppable);
  void handle(int id, const std::string& text, double now);
  void handle_input(int id, const InputSample& s, double now);
  void send_command(double now);
  void start_recording(int id);
  void stop_recording(int id);
  std::string status_message(bool aborted = false) const;
  void flush_notifications();

  Workcell& wc_;
  GatewayOptions options_;
  RtdeClient client_;
  double accel_;

  mutable std::mutex m_;
  std::map<int, Connection> connections_;
  std::vector<std::pair<int, std::string>> inbox_;
  std::optional<int> operator_;
  bool operator_left_ = false;
  int next_id_ = 0;
  std::vector<int> to_notify_;
  std::function<void(int)> notify_;

  // control state, touched only from the tick context
  std::optional<Twist> pending_twist_;
  double last_command_time_ = -1e300;
  bool gripper_closed_ = false;
  std::uint64_t state_index_ = 0;
  std::uint64_t thumb_index_ = 0;
  double state_epoch_ = 0.0;

  std::unique_ptr<RecordingListener> recording_;
  std::string recording_id_;
  std::size_t episodes_recorded_ = 0;
};

}  // namespace deskcell
