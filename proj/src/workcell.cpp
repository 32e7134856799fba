#include "deskcell/workcell.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include <boost/asio.hpp>

#include "deskcell/errors.hpp"
#include "deskcell/rng.hpp"

namespace deskcell {

namespace asio = boost::asio;
using asio::ip::tcp;

// RtdeClient ---------------------------------------------------------------

void RtdeClient::open(double frequency_hz, std::vector<rtde::StateField> fields) {
  send(rtde::Hello{rtde::kProtocolVersion});
  send(rtde::SubscribeRequest{frequency_hz, std::move(fields)});
  send(rtde::Start{});
}

std::vector<rtde::Message> RtdeClient::poll() {
  reader_.feed(link_->read_available());
  std::vector<rtde::Message> out;
  while (auto m = reader_.next()) {
    if (const auto* s = std::get_if<rtde::StatePacket>(&*m)) latest_ = *s;
    if (const auto* e = std::get_if<rtde::ErrorMessage>(&*m)) error_ = *e;
    out.push_back(std::move(*m));
  }
  return out;
}

void RtdeClient::send(const rtde::Message& m) { link_->write(rtde::encode(m)); }

void RtdeClient::speedj(const JointVector& qd, double accel, double valid_for) {
  send(rtde::SpeedJCommand{std::vector<double>(qd.data(), qd.data() + qd.size()), accel, valid_for});
}

void RtdeClient::gripper(rtde::GripperTarget target) { send(rtde::GripperCommand{target}); }

void RtdeClient::close() { link_->close(); }

// Workcell -----------------------------------------------------------------

Workcell::Workcell(WorkcellConfig config, Calibration calib, RobotBody body)
    : config_(std::move(config)),
      hash_(config_hash(config_)),
      calibration_(std::move(calib)),
      kinematics_(body.kinematics),
      limits_(body.limits) {
  NodeOptions opts;
  opts.watchdog_timeout = config_.robot.watchdog_timeout_s;
  opts.grasp = config_.grasp;
  node_ = std::make_unique<RobotNode>(std::move(body), config_.scene, opts);
  rig_ = std::make_unique<CameraRig>(config_.camera_configs(), 0, config_.recorder.camera_queue);
}

std::unique_ptr<Workcell> Workcell::build(WorkcellConfig config, BuildOptions options) {
  Calibration calib;
  if (config.calibration) {
    calib = *config.calibration;
  } else {
    if (config.calibration_path.empty()) throw StartupError("no calibration configured");
    calib = load_calibration(config.calibration_path);
  }
  check_calibration(config, calib);

  const RobotType* type = find_robot_type(config.robot.type);
  if (!type) throw StartupError("unknown robot type '" + config.robot.type + "'");
  RobotBody body = type->make_body(config.robot);

  std::unique_ptr<Workcell> wc(new Workcell(std::move(config), std::move(calib), std::move(body)));
  wc->reset(options.seed);
  if (options.listen) {
    const int port = options.port.value_or(wc->config_.robot.port);
    Workcell* self = wc.get();
    wc->server_ = std::make_unique<RtdeTcpServer>(port, [self] { return self->connect(); });
  }
  return wc;
}

Workcell::~Workcell() { shutdown(); }

int Workcell::rtde_port() const { return server_ ? server_->port() : 0; }

void Workcell::reset(std::uint64_t seed) {
  std::lock_guard lock(m_);
  node_->close_sessions();
  node_->reset(config_.robot.home, spawn_block(config_.scene, seed), 0.0);
  rig_->reseed(derive_seed(seed, 1000));
  rig_->drain();
  aligner_ = std::make_unique<Aligner>(config_.camera_configs(), config_.recorder.align_mode,
                                       config_.recorder.align_window_s);
  tick_index_ = 0;
  trigger_index_ = 0;
  now_ = 0.0;
}

std::shared_ptr<PipeEnd> Workcell::connect() {
  auto [ours, theirs] = make_pipe();
  std::lock_guard lock(m_);
  node_->connect(ours);
  return theirs;
}

void Workcell::add_listener(WorkcellListener* l) {
  std::lock_guard lock(m_);
  listeners_.push_back(l);
}

void Workcell::remove_listener(WorkcellListener* l) {
  std::lock_guard lock(m_);
  std::erase(listeners_, l);
}

bool Workcell::registered(const WorkcellListener* l) const {
  return std::find(listeners_.begin(), listeners_.end(), l) != listeners_.end();
}

double Workcell::now() const {
  std::lock_guard lock(m_);
  return now_;
}

double Workcell::next_event_time() const {
  std::lock_guard lock(m_);
  const double t_tick = static_cast<double>(tick_index_) / config_.robot.control_rate_hz;
  const double t_trig = static_cast<double>(trigger_index_) / rig_->fps();
  return std::min(t_tick, t_trig);
}

void Workcell::deliver(const std::vector<Frameset>& sets, double now) {
  if (sets.empty()) return;
  for (const auto& fs : sets)
    for (auto* l : std::vector(listeners_))
      if (registered(l)) l->on_frameset(fs, now);
}

void Workcell::step() {
  std::lock_guard lock(m_);
  const double rate = config_.robot.control_rate_hz;
  const double t_tick = static_cast<double>(tick_index_) / rate;
  const double t_trig = static_cast<double>(trigger_index_) / rig_->fps();
  if (t_tick <= t_trig) {
    now_ = t_tick;
    node_->tick(now_, 1.0 / rate);
    ++tick_index_;
    for (auto* l : std::vector(listeners_))
      if (registered(l)) l->on_tick(now_);
  } else {
    now_ = t_trig;
    rig_->trigger(node_->scene(), trigger_index_);
    ++trigger_index_;
    for (auto& f : rig_->drain()) aligner_->push(std::move(f));
  }
  deliver(aligner_->poll(now_), now_);
}

void Workcell::run_until(double t_end, const std::function<bool()>& stop) {
  while (next_event_time() < t_end) {
    step();
    if (stop && stop()) return;
  }
}

NodeSnapshot Workcell::snapshot() const {
  std::lock_guard lock(m_);
  return node_->snapshot();
}

void Workcell::set_camera_enabled(const std::string& id, bool enabled) {
  std::lock_guard lock(m_);
  rig_->set_enabled(id, enabled);
}

std::uint64_t Workcell::dropped_frames() const {
  std::lock_guard lock(m_);
  return rig_->dropped_frames();
}

void Workcell::start_realtime() {
  if (realtime_.joinable()) return;
  realtime_stop_ = false;
  realtime_ = std::thread([this] {
    using clock = std::chrono::steady_clock;
    auto wall0 = clock::now();
    double sim0 = now();
    while (!realtime_stop_) {
      {
        std::lock_guard lock(m_);
        if (now_ < sim0) {  // reset while running
          wall0 = clock::now();
          sim0 = now_;
        }
        const double target = sim0 + std::chrono::duration<double>(clock::now() - wall0).count();
        while (next_event_time() <= target && !realtime_stop_) step();
      }
      const double next = next_event_time();
      const auto wake = wall0 + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(next - sim0));
      std::this_thread::sleep_until(std::min(wake, clock::now() + std::chrono::milliseconds(5)));
    }
  });
}

void Workcell::stop_realtime() {
  realtime_stop_ = true;
  if (realtime_.joinable() && realtime_.get_id() != std::this_thread::get_id()) realtime_.join();
}

void Workcell::shutdown() {
  if (shut_down_.exchange(true)) return;
  stop_realtime();
  if (server_) server_->stop();
  std::lock_guard lock(m_);
  node_->close_sessions();
}

// RtdeTcpServer --------------------------------------------------------------

namespace {

class Bridge : public std::enable_shared_from_this<Bridge> {
 public:
  Bridge(tcp::socket socket, std::shared_ptr<PipeEnd> link)
      : socket_(std::move(socket)), link_(std::move(link)), timer_(socket_.get_executor()) {}

  void start() {
    read();
    pump();
  }

  void close() {
    boost::system::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
    timer_.cancel();
    link_->close();
  }

 private:
  void read() {
    auto self = shared_from_this();
    socket_.async_read_some(asio::buffer(in_), [self](boost::system::error_code ec, std::size_t n) {
      if (ec) {
        self->close();
        return;
      }
      self->link_->write(std::span<const std::uint8_t>(self->in_.data(), n));
      self->read();
    });
  }

  // Moves bytes from the node side onto the socket every millisecond.
  void pump() {
    auto self = shared_from_this();
    if (!writing_) {
      auto bytes = link_->read_available();
      if (!bytes.empty()) {
        writing_ = true;
        auto buf = std::make_shared<std::vector<std::uint8_t>>(std::move(bytes));
        asio::async_write(socket_, asio::buffer(*buf), [self, buf](boost::system::error_code ec, std::size_t) {
          self->writing_ = false;
          if (ec) self->close();
        });
      } else if (link_->closed()) {
        close();
        return;
      }
    }
    timer_.expires_after(std::chrono::milliseconds(1));
    timer_.async_wait([self](boost::system::error_code ec) {
      if (!ec && self->socket_.is_open()) self->pump();
    });
  }

  tcp::socket socket_;
  std::shared_ptr<PipeEnd> link_;
  asio::steady_timer timer_;
  std::array<std::uint8_t, 4096> in_{};
  bool writing_ = false;
};

}  // namespace

struct RtdeTcpServer::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::function<std::shared_ptr<PipeEnd>()> connect;
  std::vector<std::weak_ptr<Bridge>> bridges;
  std::thread thread;
  std::atomic<bool> stopped{false};

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) return;
      socket.set_option(tcp::no_delay(true), ec);
      auto b = std::make_shared<Bridge>(std::move(socket), connect());
      bridges.push_back(b);
      b->start();
      accept();
    });
  }
};

RtdeTcpServer::RtdeTcpServer(int port, std::function<std::shared_ptr<PipeEnd>()> connect)
    : impl_(std::make_unique<Impl>()) {
  impl_->connect = std::move(connect);
  boost::system::error_code ec;
  const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port));
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw StartupError("cannot listen on port " + std::to_string(port) + ": " + ec.message());
  port_ = impl_->acceptor.local_endpoint().port();
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

RtdeTcpServer::~RtdeTcpServer() { stop(); }

void RtdeTcpServer::stop() {
  if (impl_->stopped.exchange(true)) return;
  asio::post(impl_->io, [this] {
    boost::system::error_code ec;
    impl_->acceptor.close(ec);
    for (auto& w : impl_->bridges)
      if (auto b = w.lock()) b->close();
  });
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace deskcell
