#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "deskcell/errors.hpp"
#include "deskcell/evaluation.hpp"
#include "deskcell/gateway_server.hpp"
#include "deskcell/recording.hpp"
#include "deskcell/teleop.hpp"
#include "deskcell/workcell.hpp"

namespace fs = std::filesystem;
using namespace deskcell;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::string default_config() {
  const char* env = std::getenv("WORKCELL_CONFIG");
  return env ? env : "";
}

BuildOptions listening(bool listen) {
  BuildOptions o;
  o.listen = listen;
  return o;
}

WorkcellConfig load(const std::string& path) {
  if (path.empty()) throw StartupError("no config given: pass --config or set WORKCELL_CONFIG");
  return load_workcell_config(path);
}

int cmd_record(const std::string& config_path, const fs::path& out, int episodes, std::uint64_t seed,
               double duration) {
  auto cfg = load(config_path);
  const double d = duration > 0.0 ? duration : cfg.recorder.episode_duration_s;
  const fs::path root = out.empty() ? fs::path(cfg.recorder.output_dir) : out;
  auto wc = Workcell::build(std::move(cfg), listening(false));
  auto demo = make_policy("scripted", PolicyContext::from_config(wc->config(), wc->kinematics()));
  DatasetOptions opts;
  opts.episodes = episodes;
  opts.duration_s = d;
  opts.base_seed = seed;
  opts.demonstrator = demo.get();
  const auto metas = record_dataset(*wc, root, opts);
  for (const auto& m : metas)
    std::printf("%s  framesets=%llu dropped=%llu\n", m.episode_id.c_str(),
                static_cast<unsigned long long>(m.frameset_count), static_cast<unsigned long long>(m.dropped_framesets));
  std::printf("wrote %zu episode(s) to %s (config %s)\n", metas.size(), root.string().c_str(), wc->hash().c_str());
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& policy_name, int trials, std::uint64_t seed,
             const fs::path& out) {
  auto wc = Workcell::build(load(config_path), listening(false));
  auto policy = make_policy(policy_name, PolicyContext::from_config(wc->config(), wc->kinematics()));
  const auto report = evaluate(*wc, *policy, trials, seed);
  write_report(out, report);
  for (const auto& t : report.trials)
    std::printf("seed %llu  %-7s %-9s %.2fs\n", static_cast<unsigned long long>(t.seed), t.success ? "success" : "fail",
                to_string(t.failure_mode), t.duration_s);
  std::printf("%s: %d/%d (%.2f) -> %s\n", report.workcell_name.c_str(), report.n_success, report.n_trials,
              report.success_rate, out.string().c_str());
  return 0;
}

int cmd_replay(const fs::path& dir, int every) {
  const auto ep = read_episode(dir);
  const auto& m = ep.meta;
  std::printf("episode %s  workcell %s  config %s  dof %d  started %s\n", m.episode_id.c_str(),
              m.workcell_name.c_str(), m.config_hash.c_str(), m.dof, m.start_time.c_str());
  std::printf("framesets %llu  dropped %llu  cameras", static_cast<unsigned long long>(m.frameset_count),
              static_cast<unsigned long long>(m.dropped_framesets));
  for (const auto& c : m.cameras) std::printf(" %s(%dx%d@%g)", c.id.c_str(), c.width, c.height, c.fps);
  std::printf("\n%8s %9s %9s %9s %9s %8s %10s\n", "seq", "t", "x", "y", "z", "gripper", "valid_px");
  double last_gripper = -1.0;
  for (std::size_t i = 0; i < ep.records.size(); ++i) {
    const auto& r = ep.records[i];
    const bool gripper_changed = last_gripper >= 0.0 && (r.gripper < 0.5) != (last_gripper < 0.5);
    last_gripper = r.gripper;
    if (i % static_cast<std::size_t>(every) != 0 && i + 1 != ep.records.size() && !gripper_changed) continue;
    std::size_t valid = 0;
    for (const auto& cam : ep.frames)
      for (auto d : cam[i].depth) valid += d != 0;
    std::printf("%8llu %9.3f %9.4f %9.4f %9.4f %8.3f %10zu\n", static_cast<unsigned long long>(r.trigger_seq),
                r.master_ts, r.ee_pose[0], r.ee_pose[1], r.ee_pose[2], r.gripper, valid);
  }
  return 0;
}

int cmd_validate(const std::string& config_path, const std::vector<std::string>& episodes, const std::string& dataset) {
  int bad = 0;
  const bool only_data = !episodes.empty() || !dataset.empty();
  if (!only_data || !config_path.empty()) {
    auto cfg = load(config_path);
    if (!cfg.calibration) load_calibration(cfg.calibration_path);
    std::printf("config %s ok: %s, dof %d, %zu cameras, %s, hash %s\n", config_path.c_str(), cfg.name.c_str(),
                cfg.robot.dof, cfg.cameras.size(), to_string(cfg.robot.action_space), config_hash(cfg).c_str());
  }
  std::vector<fs::path> dirs(episodes.begin(), episodes.end());
  if (!dataset.empty())
    for (const auto& name : read_dataset_index(dataset)) dirs.push_back(fs::path(dataset) / name);
  for (const auto& d : dirs) {
    const auto check = validate_episode(d);
    if (check.valid) {
      std::printf("%s ok\n", d.string().c_str());
    } else {
      ++bad;
      std::printf("%s INVALID\n", d.string().c_str());
      for (const auto& p : check.problems) std::printf("  - %s\n", p.c_str());
    }
  }
  return bad == 0 ? 0 : 1;
}

int cmd_serve(const std::string& config_path, int port, const fs::path& static_root, const fs::path& out,
              bool rtde) {
  auto cfg = load(config_path);
  GatewayOptions go;
  go.out_dir = out.empty() ? fs::path(cfg.recorder.output_dir) : out;
  auto wc = Workcell::build(std::move(cfg), listening(rtde));
  GatewayCore core(*wc, go);
  GatewayServer server(core, port, static_root);
  std::printf("workcell %s (config %s)\n", wc->config().name.c_str(), wc->hash().c_str());
  if (wc->rtde_port()) std::printf("rtde on 127.0.0.1:%d\n", wc->rtde_port());
  std::printf("teleop on ws://127.0.0.1:%d/teleop, static files from %s\n", server.port(), static_root.string().c_str());
  std::fflush(stdout);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  wc->start_realtime();
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  wc->stop_realtime();
  wc->shutdown();
  std::printf("episodes recorded: %zu\n", core.episodes_recorded());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated tabletop workcell: record, evaluate, replay and teleoperate"};
  app.require_subcommand(1);

  std::string config = default_config();
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config, "workcell config file (default: $WORKCELL_CONFIG)");
  };

  auto* record = app.add_subcommand("record", "record demonstration episodes on the virtual clock");
  add_config(record);
  std::string record_out;
  int episodes = 1;
  std::uint64_t record_seed = 0;
  double duration = 0.0;
  record->add_option("--out", record_out, "dataset directory (default: recorder.output_dir)");
  record->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
  record->add_option("--seed", record_seed, "seed of the first new episode");
  record->add_option("--duration", duration, "episode length, s (default: recorder.episode_duration_s)");

  auto* eval = app.add_subcommand("eval", "evaluate a policy over seeded trials");
  add_config(eval);
  std::string policy = "scripted";
  int trials = 20;
  std::uint64_t eval_seed = 7;
  std::string eval_out = "eval_report.json";
  eval->add_option("--policy", policy, "policy id (scripted, null)");
  eval->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "base seed; trial i uses seed + i");
  eval->add_option("--out", eval_out, "report path");

  auto* replay = app.add_subcommand("replay", "print the trace summary of a recorded episode");
  std::string episode;
  int every = 30;
  replay->add_option("--episode", episode, "episode directory")->required();
  replay->add_option("--every", every, "print every n-th frameset")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "validate a config and/or recorded episodes");
  std::string validate_config;
  std::vector<std::string> validate_episodes;
  std::string validate_dataset;
  validate->add_option("--config", validate_config, "workcell config file (default: $WORKCELL_CONFIG)");
  validate->add_option("--episode", validate_episodes, "episode directory (repeatable)");
  validate->add_option("--dataset", validate_dataset, "dataset directory with dataset.json");

  auto* serve = app.add_subcommand("serve", "run the workcell in real time behind the teleop gateway");
  add_config(serve);
  int port = 8800;
  std::string static_root = "web";
  std::string serve_out;
  bool no_rtde = false;
  serve->add_option("--port", port, "gateway port");
  serve->add_option("--static", static_root, "directory served at /");
  serve->add_option("--out", serve_out, "dataset directory for recordings (default: recorder.output_dir)");
  serve->add_flag("--no-rtde", no_rtde, "do not expose the RTDE endpoint over TCP");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*record) return cmd_record(config, record_out, episodes, record_seed, duration);
    if (*eval) return cmd_eval(config, policy, trials, eval_seed, eval_out);
    if (*replay) return cmd_replay(episode, every);
    if (*validate) {
      if (validate_config.empty() && validate_episodes.empty() && validate_dataset.empty())
        validate_config = default_config();
      return cmd_validate(validate_config, validate_episodes, validate_dataset);
    }
    if (*serve) return cmd_serve(config, port, static_root, serve_out, !no_rtde);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const StartupError& e) {
    std::fprintf(stderr, "startup failed: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
