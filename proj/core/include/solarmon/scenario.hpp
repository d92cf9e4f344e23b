#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/fleet.hpp"
#include "solarmon/sim_farm.hpp"
#include "solarmon/watchdog.hpp"

namespace solarmon {

// How faults arrive over a scenario run. The fractions are exact counts over
// the fleet; the seed picks the panels (and sites) and places the onsets, one
// per equal slice of the run for each fault kind.
struct FaultProfile {
  std::size_t panels_per_site = 10;
  double faulted_fraction = 0.5;
  // Relative weights of the panel fault kinds.
  double dead_weight = 0.6;
  double degraded_weight = 0.25;
  double soiled_weight = 0.15;
  // Retained output multipliers, drawn uniformly from [min, max].
  double degraded_min = 0.3;
  double degraded_max = 0.75;
  double soiled_min = 0.5;
  double soiled_max = 0.7;
  std::int64_t soiling_ramp_s = 30 * kSecondsPerDay;
  // Share of sites that lose their inverter.
  double inverter_fraction = 0.0;
  double cloud_variability = 0.2;
  std::int64_t repair_delay_s = 3 * kSecondsPerDay;
  std::int64_t sample_interval_s = 300;

  // Throws Error(kInvalidArgument).
  void validate() const;
};

// `key = value` lines with the FaultProfile field names; '#' comments.
// Errors are Error(kMalformed) with "<source>:<line>: ..." text.
FaultProfile parse_fault_profile(std::istream& in, std::string_view source = "profile");
FaultProfile load_fault_profile(const std::filesystem::path& file);

enum class RepairPolicy { kNone, kMonitored };
std::optional<RepairPolicy> parse_repair_policy(std::string_view s);

struct ScenarioOptions {
  int days = 365;
  std::size_t panels = 100;
  std::uint64_t seed = 1;
  RepairPolicy repair = RepairPolicy::kNone;
  FaultProfile profile;
  // Local midnight, 2025-01-01 at UTC+12.
  Timestamp start_ts = 1735646400;
  DetectorConfig detectors;
  // Replaces the generated faults when set.
  std::optional<std::vector<FaultSpec>> faults;
};

struct ScenarioReport {
  double ideal_wh = 0.0;
  double actual_wh = 0.0;
  double lost_pct = 0.0;
  std::uint64_t alerts_raised = 0;
  double mean_detection_latency_s = 0.0;
  std::size_t faults_injected = 0;
  std::size_t faults_detected = 0;
  std::size_t repairs = 0;
};

// The scenario fleet: sites of profile.panels_per_site panels, the last one
// possibly smaller.
Fleet scenario_fleet(std::size_t panels, std::size_t panels_per_site);

// Faults drawn from the profile with a seeded generator.
std::vector<FaultSpec> generate_faults(const Fleet& fleet, const FaultProfile& profile,
                                       Timestamp start_ts, Timestamp end_ts, std::uint64_t seed);

// Farm, store and watchdog wired in-process. Deterministic in its options.
ScenarioReport run_lost_energy(const ScenarioOptions& opts);

// `ideal_wh=...,actual_wh=...,lost_pct=...,alerts_raised=...,mean_detection_latency_s=...`
std::string format_report_line(const ScenarioReport& r);
std::string format_report_table(const ScenarioReport& r);

}  // namespace solarmon
