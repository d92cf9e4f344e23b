#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "solarmon/fleet.hpp"
#include "solarmon/sim_farm.hpp"
#include "solarmon/ts_store.hpp"

using namespace solarmon;

namespace {

constexpr Timestamp kDay0 = 1735646400;

Fleet fleet_of(std::size_t panels) {
  UniformFleetOptions o;
  o.n_sites = 1;
  o.panels_per_site = panels;
  return make_uniform_fleet(o);
}

std::vector<std::vector<PanelReading>> day_of_steps(const Fleet& fleet) {
  SimConfig c;
  c.start_ts = kDay0;
  SolarFarm farm(fleet, c);
  std::vector<std::vector<PanelReading>> steps;
  for (Timestamp t = kDay0; t < kDay0 + 86400; t += 300) steps.push_back(farm.step(t));
  return steps;
}

}  // namespace

// One simulated day of 100 panels appended per iteration.
static void BM_AppendDayInMemory(benchmark::State& state) {
  const Fleet fleet = fleet_of(100);
  const auto steps = day_of_steps(fleet);
  for (auto _ : state) {
    TsStore store(fleet, StoreOptions{});
    for (const auto& s : steps) store.append_batch(s);
    benchmark::DoNotOptimize(store.reading_count());
  }
  state.SetItemsProcessed(state.iterations() * 100 * 288);
}
BENCHMARK(BM_AppendDayInMemory)->Unit(benchmark::kMillisecond);

static void BM_AppendDayToLog(benchmark::State& state) {
  const Fleet fleet = fleet_of(100);
  const auto steps = day_of_steps(fleet);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("solarmon-bench-" + std::to_string(std::random_device{}()));
  for (auto _ : state) {
    state.PauseTiming();
    std::filesystem::remove_all(dir);
    state.ResumeTiming();
    StoreOptions o;
    o.data_dir = dir;
    o.fsync = state.range(0) != 0;
    TsStore store(fleet, o);
    for (const auto& s : steps) store.append_batch(s);
    benchmark::DoNotOptimize(store.reading_count());
  }
  std::filesystem::remove_all(dir);
  state.SetItemsProcessed(state.iterations() * 100 * 288);
}
BENCHMARK(BM_AppendDayToLog)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_RollupWeek(benchmark::State& state) {
  const Fleet fleet = fleet_of(100);
  TsStore store(fleet, StoreOptions{});
  SimConfig c;
  c.start_ts = kDay0;
  SolarFarm farm(fleet, c);
  for (Timestamp t = kDay0; t < kDay0 + 7 * 86400; t += 300) store.append_batch(farm.step(t));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        store.rollup(SubjectKind::kSite, "S01", Resolution::kHour, kDay0, kDay0 + 7 * 86400));
  }
}
BENCHMARK(BM_RollupWeek);

BENCHMARK_MAIN();
