#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/fleet.hpp"
#include "solarmon/logger_client.hpp"
#include "solarmon/sim_farm.hpp"

namespace solarmon {

struct SimulateOptions {
  std::uint64_t seed = 1;
  double speedup = 1.0;
  std::int64_t sample_interval_s = 300;
  double cloud_variability = 0.0;
  Timestamp start_ts = 0;
  std::int64_t duration_s = kSecondsPerDay;
  std::vector<FaultSpec> faults;
  // Defaults to "sim-<seed>".
  std::string logger_id;
  // Time allowed after the last step for the buffer to drain.
  std::chrono::milliseconds drain_timeout = std::chrono::seconds(120);
  std::chrono::milliseconds backoff_base = std::chrono::seconds(1);
  std::chrono::milliseconds backoff_cap = std::chrono::seconds(60);
  std::function<void(std::string_view)> log;
};

struct SimulateSummary {
  std::uint64_t steps = 0;
  std::uint64_t readings_generated = 0;
  LoggerClientStats client;
  bool drained = false;
};

// Steps the farm every sample interval of virtual time, paced at
// interval / speedup of wall time, and ships each step as one frame.
SimulateSummary run_simulation(const Fleet& fleet, const SimulateOptions& opts,
                               const Connector& connector);

struct LogReadResult {
  std::vector<PanelReading> readings;
  std::size_t corrupt_lines = 0;
  std::size_t files = 0;
};

// Readings from one store log or every *.log below a directory, in file
// order, ascending ts (stable within a timestamp).
LogReadResult read_store_logs(const std::filesystem::path& input);

struct ReplaySummary {
  std::size_t readings = 0;
  std::size_t corrupt_lines = 0;
  std::size_t frames = 0;
  LoggerClientStats client;
  bool drained = false;
};

// Re-sends stored readings through the ingest protocol, one frame per
// timestamp, with their original sequence numbers.
ReplaySummary run_replay(const std::filesystem::path& input, const Connector& connector,
                         std::chrono::milliseconds drain_timeout = std::chrono::seconds(120),
                         std::function<void(std::string_view)> log = {});

}  // namespace solarmon
