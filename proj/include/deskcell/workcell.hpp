#pragma once

// A running workcell: robot node, camera rig and aligner driven by one
// discrete-event clock. Control ticks fall at i / control_rate and camera
// triggers at k / fps; a tick sharing an instant with a trigger runs first.
// The same loop runs on the virtual clock (as fast as possible) or paced by
// the wall clock, with the RTDE endpoint optionally exposed over TCP.

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "deskcell/camera_rig.hpp"
#include "deskcell/config.hpp"
#include "deskcell/perception.hpp"
#include "deskcell/rtde_wire.hpp"
#include "deskcell/sim_robot.hpp"

namespace deskcell {

/// Client half of an RTDE session over a byte link.
class RtdeClient {
 public:
  explicit RtdeClient(std::shared_ptr<PipeEnd> link) : link_(std::move(link)) {}

  /// Sends HELLO, SUBSCRIBE and START back to back.
  void open(double frequency_hz, std::vector<rtde::StateField> fields = {rtde::StateField::q, rtde::StateField::qd,
                                                                         rtde::StateField::ee_pose,
                                                                         rtde::StateField::gripper});
  /// Decodes every complete message that has arrived.
  std::vector<rtde::Message> poll();

  void send(const rtde::Message& m);
  void speedj(const JointVector& qd, double accel, double valid_for);
  void gripper(rtde::GripperTarget target);
  void close();
  bool closed() const { return link_->closed(); }

  const std::optional<rtde::StatePacket>& latest_state() const { return latest_; }
  const std::optional<rtde::ErrorMessage>& last_error() const { return error_; }

 private:
  std::shared_ptr<PipeEnd> link_;
  rtde::FrameReader reader_;
  std::optional<rtde::StatePacket> latest_;
  std::optional<rtde::ErrorMessage> error_;
};

class WorkcellListener {
 public:
  virtual ~WorkcellListener() = default;
  /// After the robot node's control tick at `now`.
  virtual void on_tick(double /*now*/) {}
  /// An aligned frameset became available at `now`.
  virtual void on_frameset(const Frameset& /*fs*/, double /*now*/) {}
};

class RtdeTcpServer;

struct BuildOptions {
  bool listen = true;            // expose the RTDE endpoint on a TCP port
  std::optional<int> port;       // overrides robot.port; 0 picks a free port
  std::uint64_t seed = 0;
};

class Workcell {
 public:
  /// Throws StartupError when the calibration file is missing or the port
  /// cannot be bound.
  static std::unique_ptr<Workcell> build(WorkcellConfig config, BuildOptions options = {});
  ~Workcell();
  Workcell(const Workcell&) = delete;
  Workcell& operator=(const Workcell&) = delete;

  const WorkcellConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  const Calibration& calibration() const { return calibration_; }
  std::shared_ptr<const Kinematics> kinematics() const { return kinematics_; }
  const JointLimits& limits() const { return limits_; }
  /// Bound TCP port, or 0 when not listening.
  int rtde_port() const;

  /// New episode at t = 0: spawns the block from `seed`, homes the arm,
  /// reseeds the camera rig and closes every session.
  void reset(std::uint64_t seed);

  /// Opens an in-process RTDE session; safe from any thread.
  std::shared_ptr<PipeEnd> connect();

  void add_listener(WorkcellListener* l);
  void remove_listener(WorkcellListener* l);

  double now() const;
  double next_event_time() const;
  void step();
  /// Processes every event strictly before t_end, or until `stop` returns
  /// true after an event.
  void run_until(double t_end, const std::function<bool()>& stop = {});

  NodeSnapshot snapshot() const;
  void set_camera_enabled(const std::string& id, bool enabled);
  std::uint64_t dropped_frames() const;

  /// Paces the event loop with the wall clock on a background thread.
  void start_realtime();
  void stop_realtime();
  /// Idempotent; callable from any thread.
  void shutdown();

  /// Serializes access from other threads while the realtime loop runs.
  std::recursive_mutex& mutex() const { return m_; }

 private:
  Workcell(WorkcellConfig config, Calibration calib, RobotBody body);
  void deliver(const std::vector<Frameset>& sets, double now);
  bool registered(const WorkcellListener* l) const;

  WorkcellConfig config_;
  std::string hash_;
  Calibration calibration_;
  std::shared_ptr<const Kinematics> kinematics_;
  JointLimits limits_;

  mutable std::recursive_mutex m_;
  std::unique_ptr<RobotNode> node_;
  std::unique_ptr<CameraRig> rig_;
  std::unique_ptr<Aligner> aligner_;
  std::vector<WorkcellListener*> listeners_;
  std::uint64_t tick_index_ = 0;
  std::uint64_t trigger_index_ = 0;
  double now_ = 0.0;

  std::unique_ptr<RtdeTcpServer> server_;
  std::thread realtime_;
  std::atomic<bool> realtime_stop_{false};
  std::atomic<bool> shut_down_{false};
};

/// Accepts TCP connections on 127.0.0.1 and bridges each socket onto an
/// in-process session from `connect`.
class RtdeTcpServer {
 public:
  RtdeTcpServer(int port, std::function<std::shared_ptr<PipeEnd>()> connect);
  ~RtdeTcpServer();
  int port() const { return port_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace deskcell
