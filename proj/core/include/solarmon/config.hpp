#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "solarmon/watchdog.hpp"

namespace solarmon {

// Where the server takes "now" from. `data` follows the newest stored reading
// so accelerated simulations and replays are judged on their own clock.
enum class ClockMode { kData, kWall };

struct ServerConfig {
  DetectorConfig detectors;
  std::int64_t sample_interval_s = 300;
  double ambient_c = 20.0;
  ClockMode clock = ClockMode::kData;
  bool fsync = true;
  std::int64_t raw_retention_s = 2 * kSecondsPerDay;
  // Relative paths resolve against the config file's directory. When unset
  // the server looks for fleet.csv and sites.csv in the data directory.
  std::filesystem::path fleet_file;
  std::filesystem::path sites_file;
  std::filesystem::path static_dir;
};

// `key = value` lines; '#' starts a comment. Detector keys are
// offline_timeout_s, peer_ratio_threshold, sustain_s, pr_floor,
// daylight_gate_w, sweep_interval_s. Unknown keys are errors.
ServerConfig parse_server_config(std::istream& in, const std::filesystem::path& base_dir = {},
                                 std::string_view source = "config");
ServerConfig load_server_config(const std::filesystem::path& file);

}  // namespace solarmon
