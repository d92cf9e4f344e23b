#pragma once

// Shared helpers for the test binaries: a small deterministic generator for
// property tests, scratch directories and fleet/reading builders.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "solarmon/fleet.hpp"
#include "solarmon/model.hpp"

namespace testsupport {

// splitmix64 stream.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  // [lo, hi]
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(span == 0 ? next() : next() % span);
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double real(double lo, double hi) { return lo + (hi - lo) * unit(); }
  bool chance(double p) { return unit() < p; }

  // Printable ASCII id without whitespace.
  std::string id(std::size_t max_len = 16) {
    static constexpr char kChars[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.:/#%";
    const auto n = static_cast<std::size_t>(range(1, static_cast<std::int64_t>(max_len)));
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += kChars[next() % (sizeof kChars - 1)];
    return s;
  }

  // Finite double with awkward values mixed in.
  double awkward_real(double lo, double hi) {
    switch (next() % 6) {
      case 0: return lo;
      case 1: return std::nextafter(hi, lo);
      case 2: return static_cast<double>(range(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
      default: return real(lo, hi);
    }
  }

 private:
  std::uint64_t state_;
};

// Consistent reading: watts = volts * amps.
inline solarmon::PanelReading reading(std::string panel, solarmon::Timestamp ts, std::uint64_t seq,
                                      double watts, double temp = 25.0) {
  solarmon::PanelReading r;
  r.panel_id = std::move(panel);
  r.ts = ts;
  r.seq = seq;
  r.watts = watts;
  if (watts > 0) {
    r.volts = 36.0;
    r.amps = watts / 36.0;
  }
  r.module_temp_c = temp;
  return r;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("solarmon-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every file below `dir`, relative path -> contents.
inline std::vector<std::pair<std::string, std::string>> snapshot_dir(
    const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      out.emplace_back(std::filesystem::relative(e.path(), dir).string(), read_file(e.path()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Local midnight of 2025-01-01 at UTC+12, the default test site offset.
inline constexpr solarmon::Timestamp kDay0 = 1735646400;
// Local clock noon of that day.
inline constexpr solarmon::Timestamp kNoon0 = kDay0 + 12 * 3600;

inline solarmon::Fleet small_fleet(std::size_t sites, std::size_t per_site) {
  solarmon::UniformFleetOptions o;
  o.n_sites = sites;
  o.panels_per_site = per_site;
  return solarmon::make_uniform_fleet(o);
}

}  // namespace testsupport
