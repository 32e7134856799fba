// Acceptance suite: one PASS/FAIL line per criterion.
// usage: acceptance <path to deskcell cli> [criterion ...]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "deskcell/camera_rig.hpp"
#include "deskcell/errors.hpp"
#include "deskcell/recording.hpp"
#include "deskcell/rtde_session.hpp"
#include "deskcell/workcell.hpp"
#include "helpers.hpp"
#include "rtde_harness.hpp"

using namespace deskcell;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Pinned tolerances and budgets.
constexpr int kJacobianConfigs = 1000;
constexpr double kJacobianTol = 1e-5;
constexpr double kDlsExactTol = 1e-9;
constexpr double kKinematicsBudget = 10.0;

constexpr int kRoundTrips = 10000;
constexpr double kStreamSeconds = 30.0;
constexpr std::size_t kStreamPackets = 3750;
constexpr double kGap = 0.110;
constexpr double kProtocolBudget = 30.0;

constexpr std::uint64_t kSyncTriggers = 450;
constexpr double kJitterSigmaUs = 100.0;
constexpr double kTimestampCompleteMin = 0.99;
constexpr int kDepthPixels = 100;
constexpr double kDepthTolMm = 0.5;
constexpr double kSyncBudget = 60.0;

constexpr std::uint64_t kSessionFramesets = 450;
constexpr int kBatchEpisodes = 100;
constexpr double kRecordingBudget = 600.0;

constexpr int kEvalTrials = 20;
constexpr int kEvalSuccessMin = 18;
constexpr double kEvalBudgetPerConfig = 300.0;

const std::vector<std::string> kConfigs = {"ur5_kinect4", "bimanual_rs3"};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "!! ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch() { return fs::path(TEST_BINARY_DIR) / "acceptance_scratch"; }

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

struct Cli {
  fs::path exe;

  /// Runs `deskcell <args>` with WORKCELL_CONFIG set; output goes to `log`.
  int run(const std::string& args, const fs::path& config, const fs::path& log) const {
    const std::string cmd = "WORKCELL_CONFIG=" + shell_quote(config.string()) + " " + shell_quote(exe.string()) + " " +
                            args + " > " + shell_quote(log.string()) + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path config_path(const std::string& name) { return testutil::configs_dir() / (name + ".json"); }

// ---------------------------------------------------------------------------

Outcome check_kinematics() {
  Outcome o;
  std::mt19937_64 g(20240601);
  std::vector<DHParams> models;
  for (const auto& name : kConfigs)
    for (const auto& arm : testutil::shipped(name).robot.arms) models.push_back(arm.dh);

  double worst_fd = 0.0;
  for (int i = 0; i < kJacobianConfigs; ++i) {
    const DHParams dh = i % 2 ? models[static_cast<std::size_t>(i / 2) % models.size()] : testutil::random_model(g, 6);
    const auto q = testutil::random_q(g, static_cast<int>(dh.size()));
    const Jacobian J = jacobian(dh, q);
    const auto fd = oracle::fd_jacobian(testutil::to_rows(dh), testutil::to_std(q));
    for (int c = 0; c < J.cols(); ++c)
      for (int r = 0; r < 6; ++r) worst_fd = std::max(worst_fd, std::abs(J(r, c) - fd[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)]));
  }
  o.require(worst_fd <= kJacobianTol, "jacobian vs finite differences over " + std::to_string(kJacobianConfigs) +
                                          " configs: worst " + fmt("%.2e", worst_fd));

  std::uniform_real_distribution<double> u(-1, 1);
  double worst_exact = 0.0;
  int exact_cases = 0;
  for (int i = 0; i < kJacobianConfigs && exact_cases < 500; ++i) {
    const auto& dh = models[static_cast<std::size_t>(i) % models.size()];
    const auto q = testutil::random_q(g, 6);
    const Jacobian J = jacobian(dh, q);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    if (svd.singularValues().minCoeff() < 1e-2) continue;
    Twist v{Vec3(u(g), u(g), u(g)) * 0.1, Vec3(u(g), u(g), u(g)) * 0.5};
    const JointVector qd = dls_velocity_ik(J, v, 0.0);
    worst_exact = std::max(worst_exact, (J * qd - v.as_vector()).norm() / v.as_vector().norm());
    ++exact_cases;
  }
  o.require(exact_cases == 500 && worst_exact <= kDlsExactTol,
            "undamped dls reproduces the twist on " + std::to_string(exact_cases) + " robot configs: worst relative " +
                fmt("%.2e", worst_exact));

  bool bounded = true;
  int singular_cases = 0;
  const auto& ur5 = models.front();
  for (int i = 0; i < 300; ++i) {
    auto q = testutil::random_q(g, 6);
    switch (i % 3) {
      case 0: q[4] = 0.0; break;                       // wrist aligned
      case 1: q[2] = 0.0; break;                       // elbow stretched
      default: q[1] = -1.5707963267948966; q[2] = 0.0;  // arm straight up
    }
    const Jacobian J = jacobian(ur5, q);
    for (double lambda : {0.01, 0.05, 0.2}) {
      Twist v{Vec3(u(g), u(g), u(g)), Vec3(u(g), u(g), u(g))};
      const JointVector qd = dls_velocity_ik(J, v, lambda);
      bounded = bounded && qd.allFinite() && qd.norm() <= v.as_vector().norm() / (2 * lambda) + 1e-12;
      ++singular_cases;
    }
  }
  const JointVector zero = dls_velocity_ik(Jacobian::Zero(6, 6), Twist{Vec3(1, 1, 1), Vec3(1, 1, 1)}, 0.05);
  o.require(bounded && zero.allFinite(), "damped dls finite and within |v|/(2 lambda) at " +
                                             std::to_string(singular_cases) + " singular configs");
  return o;
}

// ---------------------------------------------------------------------------

struct StreamCounter : WorkcellListener {
  RtdeClient client;
  std::vector<rtde::StatePacket> packets;
  explicit StreamCounter(Workcell& wc) : client(wc.connect()) { client.open(125.0); }
  void on_tick(double) override {
    for (auto& m : client.poll())
      if (auto* p = std::get_if<rtde::StatePacket>(&m)) packets.push_back(*p);
  }
  void on_frameset(const Frameset&, double) override {}
};

struct GappyCommander : WorkcellListener {
  RtdeClient client;
  double gap_start, gap_end;
  int safe_stops = 0;
  bool was_stopped = false;
  Workcell& wc;
  GappyCommander(Workcell& w, double start, double end) : client(w.connect()), gap_start(start), gap_end(end), wc(w) {
    client.open(125.0);
  }
  void on_tick(double now) override {
    client.poll();
    const bool stopped = wc.snapshot().safe_stopped;
    safe_stops += stopped && !was_stopped;
    was_stopped = stopped;
    if (now < gap_start || now >= gap_end) client.speedj(JointVector::Constant(6, 0.05), 10.0, 0.1);
  }
  void on_frameset(const Frameset&, double) override {}
};

Outcome check_protocol() {
  Outcome o;
  using namespace rtde;
  std::mt19937_64 g(99);
  int mismatches = 0;
  std::set<int> kinds;
  for (int i = 0; i < kRoundTrips; ++i) {
    const Message m = testutil::random_message(g, i);
    const auto bytes = encode(m);
    const auto r = decode(bytes);
    const auto* d = std::get_if<Decoded>(&r);
    if (!d || d->consumed != bytes.size() || !(d->message == m)) ++mismatches;
    kinds.insert(static_cast<int>(m.index()));
  }
  o.require(mismatches == 0 && kinds.size() == std::variant_size_v<Message>,
            std::to_string(kRoundTrips) + " random messages of " + std::to_string(kinds.size()) +
                " kinds round trip, mismatches " + std::to_string(mismatches));

  int golden_bad = 0, golden_n = 0;
  for (const auto& [name, msg] : testutil::golden_messages()) {
    const auto text = slurp(testutil::source_dir() / "golden" / "rtdx" / (name + ".bin"));
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    const auto r = decode(bytes);
    const auto* d = std::get_if<Decoded>(&r);
    golden_bad += encode(msg) != bytes || !d || !(d->message == msg);
    ++golden_n;
  }
  o.require(golden_bad == 0 && golden_n == 12,
            std::to_string(golden_n) + " golden files byte exact, failures " + std::to_string(golden_bad));

  BuildOptions bo;
  bo.listen = false;
  auto wc = Workcell::build(testutil::shipped("ur5_kinect4"), bo);
  wc->reset(1);
  StreamCounter counter(*wc);
  wc->add_listener(&counter);
  wc->run_until(kStreamSeconds);
  wc->remove_listener(&counter);
  bool gapless = !counter.packets.empty() && counter.packets.front().seq == 0;
  for (std::size_t i = 1; i < counter.packets.size(); ++i)
    gapless = gapless && counter.packets[i].seq == counter.packets[i - 1].seq + 1;
  o.require(counter.packets.size() == kStreamPackets && gapless,
            "125 Hz for 30 s: " + std::to_string(counter.packets.size()) + " STATE packets, gapless " +
                (gapless ? "yes" : "no"));

  testutil::SessionHarness h(125.0, 0.1);
  const double dt = 1.0 / 125.0;
  const double gap_from = 1.0;
  int sent = 0;
  for (int i = 0; i < 1250; ++i) {
    const double now = i * dt;
    if (now <= gap_from + 1e-12 || now >= gap_from + kGap - 1e-12) {
      h.receive(SpeedJCommand{{0.1}, 1.0, 0.1}, now);
      ++sent;
    }
    h.tick(now);
  }
  o.require(h.safe_stops.size() == 1, "session: one 110 ms command gap with a 100 ms timeout trips the watchdog " +
                                          std::to_string(h.safe_stops.size()) + " time(s)");

  wc->reset(2);
  GappyCommander cmd(*wc, 2.0, 2.0 + kGap);
  wc->add_listener(&cmd);
  wc->run_until(5.0);
  wc->remove_listener(&cmd);
  o.require(cmd.safe_stops == 1, "robot node: same gap gives " + std::to_string(cmd.safe_stops) + " safe stop(s)");
  return o;
}

// ---------------------------------------------------------------------------

std::vector<Frameset> align_run(std::vector<CameraConfig> cams, AlignMode mode, double window) {
  CameraRig rig(cams, 5);
  Aligner al(cams, mode, window);
  Scene s = testutil::shipped("ur5_kinect4").scene;
  s = spawn_block(s, 5);
  std::vector<Frameset> out;
  for (std::uint64_t k = 0; k < kSyncTriggers; ++k) {
    rig.trigger(s, k);
    for (auto& f : rig.drain()) al.push(std::move(f));
    for (auto& fs : al.poll(k / 30.0 + 0.001)) out.push_back(std::move(fs));
  }
  for (auto& fs : al.flush()) out.push_back(std::move(fs));
  return out;
}

std::size_t complete_sets(const std::vector<Frameset>& sets, std::size_t n_cams) {
  std::size_t n = 0;
  for (const auto& fs : sets) {
    bool ok = !fs.partial && fs.frames.size() == n_cams;
    for (const auto& f : fs.frames) ok = ok && f.trigger_seq == fs.trigger_seq;
    n += ok;
  }
  return n;
}

Outcome check_sync() {
  Outcome o;
  const auto cfg = testutil::shipped("ur5_kinect4");
  auto cams = cfg.camera_configs();

  const auto seq = align_run(cams, AlignMode::sequence, cfg.recorder.align_window_s);
  const auto seq_complete = complete_sets(seq, cams.size());
  o.require(seq.size() == kSyncTriggers && seq_complete == kSyncTriggers,
            "sequence mode: " + std::to_string(seq_complete) + "/" + std::to_string(seq.size()) +
                " complete framesets over 4 cameras");

  bool delays_ok = true;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    delays_ok = delays_ok && cams[i].delay_us == 160.0 * static_cast<double>(i);
    cams[i].clock.jitter_sigma_us = kJitterSigmaUs;
  }
  const auto ts = align_run(cams, AlignMode::timestamp, cfg.recorder.align_window_s);
  const double ratio = static_cast<double>(complete_sets(ts, cams.size())) / static_cast<double>(kSyncTriggers);
  o.require(delays_ok && ts.size() == kSyncTriggers && ratio >= kTimestampCompleteMin,
            "timestamp mode, delays 0/160/320/480 us, jitter 100 us: " + fmt("%.4f", ratio) + " complete");

  std::mt19937_64 g(17);
  std::uniform_int_distribution<int> pu(0, cams[0].intrinsics.width - 1), pv(0, cams[0].intrinsics.height - 1);
  double worst = 0.0;
  int checked = 0, block_px = 0, mismatched_validity = 0;
  const Scene s = spawn_block(cfg.scene, 17);
  std::vector<Frame> frames;
  for (const auto& c : cams) frames.push_back(render(s, c));
  const Vec3 lo = s.block.center - s.block.half_extents, hi = s.block.center + s.block.half_extents;
  while (checked < kDepthPixels) {
    const std::size_t ci = g() % cams.size();
    const auto& c = cams[ci];
    // Half the samples aim at the block so both surfaces are exercised.
    int u = pu(g), v = pv(g);
    if (checked % 2) {
      const Pixel p = project(c.intrinsics, invert(c.extrinsic).transform(s.block.center));
      u = std::clamp(static_cast<int>(p.u) + static_cast<int>(g() % 7) - 3, 0, c.intrinsics.width - 1);
      v = std::clamp(static_cast<int>(p.v) + static_cast<int>(g() % 7) - 3, 0, c.intrinsics.height - 1);
    }
    const auto& q = c.extrinsic.orientation;
    const auto hit = oracle::ray_depth(oracle::quat_matrix(q.w(), q.x(), q.y(), q.z()),
                                       {c.extrinsic.position.x(), c.extrinsic.position.y(), c.extrinsic.position.z()},
                                       c.intrinsics.fx, c.intrinsics.fy, c.intrinsics.cx, c.intrinsics.cy, u, v,
                                       s.table_height, {lo.x(), lo.y(), lo.z()}, {hi.x(), hi.y(), hi.z()});
    const std::uint16_t d = frames[ci].depth_at(u, v);
    ++checked;
    if (!hit || hit->depth > kMaxDepthM) {
      mismatched_validity += d != 0;
      continue;
    }
    block_px += hit->block;
    worst = std::max(worst, std::abs(d - hit->depth * 1000.0));
  }
  o.require(worst <= kDepthTolMm && mismatched_validity == 0 && block_px > 0,
            "depth vs ray oracle on " + std::to_string(checked) + " pixels (" + std::to_string(block_px) +
                " on the block): worst " + fmt("%.3f", worst) + " mm");
  return o;
}

// ---------------------------------------------------------------------------

Outcome check_recording(const Cli& cli) {
  Outcome o;
  fs::remove_all(scratch() / "recording");
  fs::create_directories(scratch() / "recording");
  const fs::path root = scratch() / "recording";

  BuildOptions bo;
  bo.listen = false;
  auto wc = Workcell::build(testutil::shipped("ur5_kinect4"), bo);
  RecordOptions ro;
  ro.duration_s = 15.0;
  ro.seed = 3;
  const auto meta = record_episode(*wc, root / "session", "session", ro);
  const auto ep = read_episode(root / "session");
  bool aligned = ep.records.size() == kSessionFramesets;
  for (const auto& cam : ep.frames) aligned = aligned && cam.size() == kSessionFramesets;
  o.require(meta.frameset_count == kSessionFramesets && meta.dropped_framesets == 0 && aligned,
            "15 s session: " + std::to_string(meta.frameset_count) + " framesets, " +
                std::to_string(ep.records.size()) + " state records, dropped " + std::to_string(meta.dropped_framesets));

  bool sizes = fs::file_size(root / "session" / "robot_states.bin") ==
               oracle::states_file_bytes(static_cast<std::size_t>(meta.dof), kSessionFramesets);
  std::uintmax_t frames_bytes = 0;
  for (const auto& c : meta.cameras) {
    const auto n = fs::file_size(root / "session" / ("frames_" + c.id + ".bin"));
    frames_bytes += n;
    sizes = sizes && n == oracle::frames_file_bytes(static_cast<std::size_t>(c.width), static_cast<std::size_t>(c.height),
                                                     kSessionFramesets);
  }
  o.require(sizes, "file sizes match the record layout (states " +
                       std::to_string(fs::file_size(root / "session" / "robot_states.bin")) + " B, frames " +
                       std::to_string(frames_bytes) + " B)");

  write_episode(root / "copy", ep.meta, ep.records, ep.frames);
  bool identical = true;
  for (const auto& entry : fs::directory_iterator(root / "session"))
    identical = identical && slurp(entry.path()) == slurp(root / "copy" / entry.path().filename());
  const auto back = read_episode(root / "copy");
  identical = identical && back.records == ep.records && back.meta == ep.meta;
  o.require(identical, "read, rewrite and reread is lossless and byte identical");
  fs::remove_all(root / "session");
  fs::remove_all(root / "copy");

  const int rc_rec = cli.run("record --config " + shell_quote(config_path("ur5_kinect4").string()) + " --out " +
                                 shell_quote((root / "batch").string()) + " --episodes " + std::to_string(kBatchEpisodes),
                             config_path("ur5_kinect4"), root / "batch_record.log");
  const int rc_val = cli.run("validate --dataset " + shell_quote((root / "batch").string()), config_path("ur5_kinect4"),
                             root / "batch_validate.log");
  std::size_t listed = 0;
  bool all_valid = rc_rec == 0 && rc_val == 0;
  try {
    const auto names = read_dataset_index(root / "batch");
    listed = names.size();
    for (const auto& n : names) all_valid = all_valid && validate_episode(root / "batch" / n).valid;
  } catch (const std::exception& e) {
    all_valid = false;
  }
  o.require(all_valid && listed == static_cast<std::size_t>(kBatchEpisodes),
            std::to_string(listed) + "-episode batch via the cli, all valid: " + (all_valid ? "yes" : "no") +
                " (record rc " + std::to_string(rc_rec) + ", validate rc " + std::to_string(rc_val) + ")");
  fs::remove_all(root / "batch");
  return o;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::pair<std::string, std::string>> eval_reports;  // config -> two report texts
std::map<std::string, int> eval_codes;

const std::string kEvalArgs = "eval --policy scripted --trials 20 --seed 7 --out ";

Outcome check_e2e(const Cli& cli) {
  Outcome o;
  const std::set<std::string> modes{"none", "no_grasp", "dropped", "collision", "timeout"};
  for (const auto& name : kConfigs) {
    const fs::path dir = scratch() / ("eval_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto t0 = std::chrono::steady_clock::now();
    const int rc1 = cli.run(kEvalArgs + shell_quote((dir / "a.json").string()), config_path(name), dir / "a.log");
    const int rc2 = cli.run(kEvalArgs + shell_quote((dir / "b.json").string()), config_path(name), dir / "b.log");
    const double took = seconds_since(t0) / 2.0;
    eval_codes[name] = rc1 | rc2;
    const auto a = slurp(dir / "a.json"), b = slurp(dir / "b.json");
    eval_reports[name] = {a, b};
    int n_success = -1, n_trials = -1;
    bool classified = true;
    try {
      const auto doc = json::parse(a);
      n_success = doc.at("n_success");
      n_trials = doc.at("n_trials");
      classified = doc.at("trials").size() == static_cast<std::size_t>(kEvalTrials);
      for (const auto& t : doc.at("trials")) {
        const std::string m = t.at("failure_mode");
        classified = classified && modes.count(m) && (t.at("success").get<bool>() == (m == "none"));
      }
    } catch (const std::exception&) {
      classified = false;
    }
    o.require(rc1 == 0 && rc2 == 0 && n_trials == kEvalTrials && n_success >= kEvalSuccessMin,
              name + ": scripted " + std::to_string(n_success) + "/" + std::to_string(n_trials));
    o.require(!a.empty() && a == b, name + ": repeat run gives an identical report");
    o.require(classified, name + ": every trial has exactly one failure_mode from the closed set");
    o.require(took <= kEvalBudgetPerConfig, name + ": " + fmt("%.1f", took) + " s per run");
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome check_config_switch(const Cli& cli) {
  Outcome o;
  const std::string record_args = "record --episodes 1 --out ";
  for (const auto& name : kConfigs) {
    const fs::path dir = scratch() / ("switch_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    const int rc = cli.run(record_args + shell_quote((dir / "data").string()), config_path(name), dir / "record.log");
    bool valid = false;
    try {
      const auto names = read_dataset_index(dir / "data");
      valid = names.size() == 1 && validate_episode(dir / "data" / names[0]).valid;
    } catch (const std::exception&) {
    }
    o.require(rc == 0 && valid, name + ": `deskcell " + record_args + "<dir>` exits 0 with a valid episode");
    if (!eval_reports.count(name)) {
      const int erc = cli.run(kEvalArgs + shell_quote((dir / "eval.json").string()), config_path(name), dir / "eval.log");
      eval_codes[name] = erc;
    }
    o.require(eval_codes[name] == 0, name + ": `deskcell " + kEvalArgs + "<file>` exits 0");
    fs::remove_all(dir);
  }

  const fs::path src = testutil::source_dir().parent_path();
  const std::regex tags(R"(ur5_sim|bimanual_sim|ur5_kinect4|bimanual_rs3|kinect|realsense)", std::regex::icase);
  std::vector<std::string> hits;
  int scanned = 0;
  for (const auto* stem : {"recorder", "recording", "perception", "policy", "evaluation"}) {
    for (const fs::path p : {src / "src" / (std::string(stem) + ".cpp"), src / "include" / "deskcell" / (std::string(stem) + ".hpp")}) {
      std::ifstream in(p);
      if (!in) {
        hits.push_back(p.string() + ": missing");
        continue;
      }
      ++scanned;
      std::string line;
      for (int n = 1; std::getline(in, line); ++n)
        if (std::regex_search(line, tags)) hits.push_back(p.filename().string() + ":" + std::to_string(n));
    }
  }
  std::string where;
  for (const auto& h : hits) where += " " + h;
  o.require(hits.empty() && scanned == 10,
            "arch lint over " + std::to_string(scanned) + " recorder/perception/policy/eval sources: " +
                std::to_string(hits.size()) + " type-tag references" + where);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <deskcell cli> [criterion ...]\n";
    return 2;
  }
  const Cli cli{fs::absolute(argv[1])};
  std::set<std::string> only(argv + 2, argv + argc);
  fs::create_directories(scratch());

  struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"kinematics", kKinematicsBudget, check_kinematics},
      {"protocol", kProtocolBudget, check_protocol},
      {"sync", kSyncBudget, check_sync},
      {"recording", kRecordingBudget, [&] { return check_recording(cli); }},
      {"e2e_eval", 2 * 2 * kEvalBudgetPerConfig, [&] { return check_e2e(cli); }},
      {"config_switch", 600.0, [&] { return check_config_switch(cli); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.require(false, std::string("threw: ") + e.what());
    }
    const double took = seconds_since(t0);
    out.require(took <= c.budget_s, "wall time " + fmt("%.1f", took) + " s within " + fmt("%.0f", c.budget_s) + " s");
    failed += !out.pass;
    std::cout << (out.pass ? "PASS " : "FAIL ") << c.name << " (" << fmt("%.1f", took) << " s)\n";
    for (const auto& n : out.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
