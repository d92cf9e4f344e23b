#include <benchmark/benchmark.h>

#include "solarmon/fleet.hpp"
#include "solarmon/protocol.hpp"
#include "solarmon/sim_farm.hpp"

using namespace solarmon;
using namespace solarmon::protocol;

namespace {

constexpr Timestamp kNoon = 1735646400 + 12 * 3600;

std::vector<PanelReading> noon_batch(std::size_t panels) {
  UniformFleetOptions o;
  o.n_sites = 1;
  o.panels_per_site = panels;
  const Fleet fleet = make_uniform_fleet(o);
  SimConfig c;
  c.start_ts = kNoon;
  SolarFarm farm(fleet, c);
  return farm.step(kNoon);
}

}  // namespace

static void BM_Crc32(benchmark::State& state) {
  const std::string bytes(static_cast<std::size_t>(state.range(0)), 'x');
  for (auto _ : state) benchmark::DoNotOptimize(crc32(bytes));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Crc32)->Arg(64)->Arg(4096)->Arg(65536);

static void BM_EncodeBatch(benchmark::State& state) {
  const auto batch = noon_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch("L1", 1, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeBatch)->Arg(100)->Arg(1000);

static void BM_ParseFrame(benchmark::State& state) {
  const std::string frame = encode_batch("L1", 1, noon_batch(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(parse_frame(frame));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(frame.size()));
}
BENCHMARK(BM_ParseFrame)->Arg(100)->Arg(1000);

static void BM_ParseFrameRejectChecksum(benchmark::State& state) {
  std::string frame = encode_batch("L1", 1, noon_batch(1000));
  frame[frame.size() / 2] ^= 1;
  for (auto _ : state) {
    try {
      parse_frame(frame);
    } catch (const Error& e) {
      benchmark::DoNotOptimize(e.code());
    }
  }
}
BENCHMARK(BM_ParseFrameRejectChecksum);

BENCHMARK_MAIN();
