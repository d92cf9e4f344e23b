#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/fleet.hpp"
#include "solarmon/model.hpp"

namespace solarmon {

enum class FaultKind { kDead, kDegraded, kSoiled, kInverterDropout };

std::string_view to_string(FaultKind k);
std::optional<FaultKind> parse_fault_kind(std::string_view s);

struct FaultSpec {
  FaultKind kind = FaultKind::kDead;
  std::string subject_id;  // site id for inverter_dropout, panel id otherwise
  Timestamp onset_ts = 0;
  double magnitude = 0.0;
  std::int64_t ramp_s = 0;
  // Set by a repair; the fault stops affecting output from this instant.
  std::optional<Timestamp> repaired_ts;

  bool active_at(Timestamp ts) const {
    return ts >= onset_ts && (!repaired_ts || ts < *repaired_ts);
  }
  bool affects(std::string_view panel_id, std::string_view site_id) const {
    return kind == FaultKind::kInverterDropout ? subject_id == site_id
                                               : subject_id == panel_id;
  }
  // Output multiplier of this fault alone, 1 when inactive.
  double multiplier_at(Timestamp ts) const;

  bool operator==(const FaultSpec&) const = default;
};

// Product of every active fault multiplier that affects the panel.
double effective_multiplier(const std::vector<FaultSpec>& faults, std::string_view panel_id,
                            std::string_view site_id, Timestamp ts);

// True when an active dead fault silences the panel.
bool is_dead(const std::vector<FaultSpec>& faults, std::string_view panel_id, Timestamp ts);

// Fault file: `kind,subject_id,onset_ts,magnitude,ramp_s`. When `fleet` is
// given, subjects are checked against it. Errors carry the line number.
std::vector<FaultSpec> parse_faults(std::istream& in, std::string_view source = "faults",
                                    const Fleet* fleet = nullptr);
void write_faults(std::ostream& out, const std::vector<FaultSpec>& faults);

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t n_sites = 1;
  std::size_t panels_per_site = 10;
  Timestamp start_ts = 0;
  std::int64_t sample_interval_s = 300;
  double speedup = 1.0;
  double cloud_variability = 0.0;
  std::vector<FaultSpec> faults;
  double ambient_base_c = 20.0;
};

// Deterministic simulated farm: the data logger plus its panels.
class SolarFarm {
 public:
  SolarFarm(Fleet fleet, SimConfig config);

  // One reading per active, non-dead panel. Throws std::invalid_argument when
  // called earlier than one sample interval after the previous step.
  std::vector<PanelReading> step(Timestamp virtual_now);

  // Requires cmd.state == delivered; marks it applied. Throws
  // Error(kUnknownPanel) for panels outside this farm.
  void apply_command(Command& cmd);

  // Stops every fault affecting the panel (or, for a site id, the site's
  // inverter faults) from `ts` on. Returns the number repaired.
  std::size_t repair(std::string_view subject_id, Timestamp ts);

  const Fleet& fleet() const { return fleet_; }
  const SimConfig& config() const { return config_; }
  const std::vector<FaultSpec>& faults() const { return config_.faults; }
  std::optional<Timestamp> last_step() const { return last_step_; }

  // Power the farm would emit for this panel at ts, ignoring dead silence.
  double modeled_power(std::size_t panel_idx, Timestamp ts) const;
  PanelStatus panel_status(std::size_t panel_idx) const { return runtime_[panel_idx].status; }
  double panel_derate(std::size_t panel_idx) const { return runtime_[panel_idx].derate; }

 private:
  struct PanelRuntime {
    PanelStatus status = PanelStatus::kActive;
    double derate = 1.0;
    std::uint64_t next_seq = 1;
    std::vector<std::size_t> faults;  // indices into config_.faults
  };

  double fault_multiplier(std::size_t panel_idx, Timestamp ts, bool* dead) const;

  Fleet fleet_;
  SimConfig config_;
  std::vector<PanelRuntime> runtime_;
  std::optional<Timestamp> last_step_;
};

}  // namespace solarmon
