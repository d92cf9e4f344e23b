#include "solarmon/config.hpp"

#include <fstream>
#include <istream>
#include <string>

#include "solarmon/fleet.hpp"

namespace solarmon {

ServerConfig parse_server_config(std::istream& in, const std::filesystem::path& base_dir,
                                 std::string_view source) {
  ServerConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  const auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::kMalformed,
                  std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
    };
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    try {
      if (key == "offline_timeout_s") {
        cfg.detectors.offline_timeout_s = parse_int_field(value, key);
      } else if (key == "peer_ratio_threshold") {
        cfg.detectors.peer_ratio_threshold = parse_double_field(value, key);
      } else if (key == "sustain_s") {
        cfg.detectors.sustain_s = parse_int_field(value, key);
      } else if (key == "pr_floor") {
        cfg.detectors.pr_floor = parse_double_field(value, key);
      } else if (key == "daylight_gate_w") {
        cfg.detectors.daylight_gate_w = parse_double_field(value, key);
      } else if (key == "sweep_interval_s") {
        cfg.detectors.sweep_interval_s = parse_int_field(value, key);
      } else if (key == "sample_interval_s") {
        cfg.sample_interval_s = parse_int_field(value, key);
      } else if (key == "ambient_c") {
        cfg.ambient_c = parse_double_field(value, key);
      } else if (key == "clock") {
        if (value == "data") {
          cfg.clock = ClockMode::kData;
        } else if (value == "wall") {
          cfg.clock = ClockMode::kWall;
        } else {
          fail("clock must be data or wall");
        }
      } else if (key == "fsync") {
        if (value != "true" && value != "false") fail("fsync must be true or false");
        cfg.fsync = value == "true";
      } else if (key == "raw_retention_s") {
        cfg.raw_retention_s = parse_int_field(value, key);
      } else if (key == "fleet") {
        cfg.fleet_file = resolve(value);
      } else if (key == "sites") {
        cfg.sites_file = resolve(value);
      } else if (key == "static_dir") {
        cfg.static_dir = resolve(value);
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with(source)) throw;
      fail(e.what());
    }
  }
  try {
    cfg.detectors.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, std::string(source) + ": " + e.what());
  }
  if (cfg.sample_interval_s < 1) {
    throw Error(ErrorCode::kMalformed, std::string(source) + ": sample_interval_s must be >= 1");
  }
  return cfg;
}

ServerConfig load_server_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + file.string());
  return parse_server_config(in, file.parent_path(), file.string());
}

}  // namespace solarmon
