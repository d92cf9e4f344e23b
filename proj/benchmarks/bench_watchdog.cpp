#include <benchmark/benchmark.h>

#include "solarmon/fleet.hpp"
#include "solarmon/sim_farm.hpp"
#include "solarmon/ts_store.hpp"
#include "solarmon/watchdog.hpp"

using namespace solarmon;

namespace {

constexpr Timestamp kDay0 = 1735646400;

}  // namespace

// One sweep over 10 sites x 100 panels with the store primed to noon.
static void BM_SweepThousandPanels(benchmark::State& state) {
  UniformFleetOptions o;
  o.n_sites = 10;
  o.panels_per_site = 100;
  const Fleet fleet = make_uniform_fleet(o);
  SimConfig c;
  c.start_ts = kDay0;
  SolarFarm farm(fleet, c);
  TsStore store(fleet, StoreOptions{});
  Watchdog watchdog(fleet, {});
  const std::vector<PanelControl> controls(fleet.panel_count());
  Timestamp t = kDay0;
  for (; t <= kDay0 + 12 * 3600; t += 300) {
    store.append_batch(farm.step(t));
    watchdog.sweep(store, controls, t);
  }
  const Timestamp noon = t - 300;
  for (auto _ : state) benchmark::DoNotOptimize(watchdog.sweep(store, controls, noon));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_SweepThousandPanels)->Unit(benchmark::kMicrosecond);

static void BM_FarmStepThousandPanels(benchmark::State& state) {
  UniformFleetOptions o;
  o.n_sites = 10;
  o.panels_per_site = 100;
  const Fleet fleet = make_uniform_fleet(o);
  SimConfig c;
  c.start_ts = kDay0;
  c.cloud_variability = 0.2;
  SolarFarm farm(fleet, c);
  Timestamp t = kDay0 + 6 * 3600;
  for (auto _ : state) {
    benchmark::DoNotOptimize(farm.step(t));
    t += 300;
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_FarmStepThousandPanels)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
