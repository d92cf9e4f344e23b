#include "solarmon/drivers.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include "solarmon/ts_store.hpp"

namespace solarmon {

SimulateSummary run_simulation(const Fleet& fleet, const SimulateOptions& opts,
                               const Connector& connector) {
  if (!(opts.speedup > 0)) throw Error(ErrorCode::kInvalidArgument, "speedup must be > 0");
  if (opts.sample_interval_s < 1) {
    throw Error(ErrorCode::kInvalidArgument, "interval must be >= 1");
  }
  SimConfig cfg;
  cfg.seed = opts.seed;
  cfg.start_ts = opts.start_ts;
  cfg.sample_interval_s = opts.sample_interval_s;
  cfg.speedup = opts.speedup;
  cfg.cloud_variability = opts.cloud_variability;
  cfg.faults = opts.faults;
  SolarFarm farm(fleet, cfg);

  LoggerClientOptions copts;
  copts.logger_id = opts.logger_id.empty() ? "sim-" + std::to_string(opts.seed) : opts.logger_id;
  copts.log = opts.log;
  copts.backoff_base = opts.backoff_base;
  copts.backoff_cap = opts.backoff_cap;
  LoggerClient client(copts, connector, [&farm](Command& cmd) {
    farm.apply_command(cmd);
    return true;
  });

  using Clock = LoggerClient::Clock;
  const auto wall_start = Clock::now();
  const auto wall_per_step = std::chrono::duration<double>(
      static_cast<double>(opts.sample_interval_s) / opts.speedup);

  SimulateSummary sum;
  const Timestamp end = opts.start_ts + opts.duration_s;
  for (Timestamp t = opts.start_ts; t < end; t += opts.sample_interval_s) {
    auto readings = farm.step(t);
    sum.readings_generated += readings.size();
    ++sum.steps;
    client.enqueue(std::move(readings));
    client.pump(Clock::now());
    const auto due = wall_start + std::chrono::duration_cast<Clock::duration>(
                                      wall_per_step * static_cast<double>(sum.steps));
    // Keep pumping while waiting so backoff retries are not delayed by pacing.
    while (Clock::now() < due) {
      auto wake = due;
      if (auto next = client.next_attempt(); next && *next < wake) wake = *next;
      std::this_thread::sleep_until(wake);
      if (client.pending_frames() > 0) client.pump(Clock::now());
    }
  }
  sum.drained = client.flush(Clock::now() + opts.drain_timeout);
  sum.client = client.stats();
  return sum;
}

LogReadResult read_store_logs(const std::filesystem::path& input) {
  namespace fs = std::filesystem;
  LogReadResult out;
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(input, ec)) {
    for (const auto& e : fs::recursive_directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".log") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(input, ec)) {
    files.push_back(input);
  } else {
    throw Error(ErrorCode::kIo, "no such log file or directory: " + input.string());
  }
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + f.string());
    ++out.files;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      PanelReading r;
      if (parse_log_line(line, r) == LogLineStatus::kOk) {
        out.readings.push_back(std::move(r));
      } else {
        ++out.corrupt_lines;
      }
    }
  }
  std::stable_sort(out.readings.begin(), out.readings.end(),
                   [](const PanelReading& a, const PanelReading& b) { return a.ts < b.ts; });
  return out;
}

ReplaySummary run_replay(const std::filesystem::path& input, const Connector& connector,
                         std::chrono::milliseconds drain_timeout,
                         std::function<void(std::string_view)> log) {
  auto logs = read_store_logs(input);
  ReplaySummary sum;
  sum.readings = logs.readings.size();
  sum.corrupt_lines = logs.corrupt_lines;

  LoggerClientOptions copts;
  copts.logger_id = "replay";
  copts.log = std::move(log);
  // Replay holds the whole input; the buffer cap protects live loggers only.
  copts.max_buffered_readings = std::max<std::size_t>(copts.max_buffered_readings, sum.readings);
  LoggerClient client(copts, connector);

  auto& rs = logs.readings;
  for (std::size_t i = 0; i < rs.size();) {
    std::size_t j = i;
    while (j < rs.size() && rs[j].ts == rs[i].ts) ++j;
    client.enqueue({std::make_move_iterator(rs.begin() + static_cast<long>(i)),
                    std::make_move_iterator(rs.begin() + static_cast<long>(j))});
    ++sum.frames;
    i = j;
  }
  sum.drained = client.flush(LoggerClient::Clock::now() + drain_timeout);
  sum.client = client.stats();
  return sum;
}

}  // namespace solarmon
