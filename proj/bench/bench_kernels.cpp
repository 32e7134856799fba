#include <benchmark/benchmark.h>

#include "deskcell/config.hpp"
#include "deskcell/perception.hpp"

using namespace deskcell;

namespace {

const WorkcellConfig& cell() {
  static const WorkcellConfig cfg = load_workcell_config(BENCH_CONFIG);
  return cfg;
}

Scene scene() { return spawn_block(cell().scene, 1); }

Frameset frameset() {
  Frameset fs;
  for (const auto& c : cell().camera_configs()) fs.frames.push_back(render(scene(), c));
  return fs;
}

void BM_render_serial(benchmark::State& state) {
  const auto cam = cell().camera_configs().front();
  const Scene s = scene();
  Frame f;
  for (auto _ : state) {
    render_serial(s, cam, f);
    benchmark::DoNotOptimize(f.depth.data());
  }
  state.SetItemsProcessed(state.iterations() * cam.intrinsics.width * cam.intrinsics.height);
}

void BM_render_parallel(benchmark::State& state) {
  const auto cam = cell().camera_configs().front();
  const Scene s = scene();
  Frame f;
  for (auto _ : state) {
    render_parallel(s, cam, f);
    benchmark::DoNotOptimize(f.depth.data());
  }
  state.SetItemsProcessed(state.iterations() * cam.intrinsics.width * cam.intrinsics.height);
}

void BM_fuse_serial(benchmark::State& state) {
  const auto fs = frameset();
  const int stride = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fuse_serial(fs, *cell().calibration, stride));
}

void BM_fuse_parallel(benchmark::State& state) {
  const auto fs = frameset();
  const int stride = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fuse_parallel(fs, *cell().calibration, stride));
}

}  // namespace

BENCHMARK(BM_render_serial);
BENCHMARK(BM_render_parallel);
BENCHMARK(BM_fuse_serial)->ArgName("stride")->Arg(1)->Arg(4);
BENCHMARK(BM_fuse_parallel)->ArgName("stride")->Arg(1)->Arg(4);

BENCHMARK_MAIN();
