#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "solarmon/fleet.hpp"
#include "solarmon/model.hpp"
#include "solarmon/ts_store.hpp"

namespace solarmon {

struct DetectorConfig {
  std::int64_t offline_timeout_s = 900;
  double peer_ratio_threshold = 0.7;
  std::int64_t sustain_s = 1800;
  double pr_floor = 0.8;
  // Unset: 5% of the site's median rated power.
  std::optional<double> daylight_gate_w;
  std::int64_t sweep_interval_s = 300;

  // Throws Error(kInvalidArgument) when a threshold is out of range.
  void validate() const;
};

// Runtime control state of a panel as known to the server.
struct PanelControl {
  PanelStatus status = PanelStatus::kActive;
  double derate = 1.0;
};

// Inputs of the clear-sky expectation used for performance ratios.
struct ExpectationModel {
  std::int64_t sample_interval_s = 300;
  double ambient_c = 20.0;
};

// --- Pure detector rules ---------------------------------------------------

// Active panels only: offline when never seen or silent for longer than the
// timeout (strictly greater).
bool check_offline(PanelStatus status, std::optional<Timestamp> latest_ts, Timestamp now,
                   const DetectorConfig& cfg);

// nullopt when gated (peer median at or below the daylight gate).
std::optional<bool> peer_deviation(double panel_mean_w, double site_peer_median_w, double gate_w,
                                   const DetectorConfig& cfg);

// nullopt when nothing was expected.
std::optional<double> performance_ratio(double actual_wh, double expected_wh);

// At least 90% of the active panels down.
bool inverter_dropout_condition(std::size_t down_panels, std::size_t active_panels);

double median(std::vector<double> values);

// --- Alerts ------------------------------------------------------------------

enum class TransitionType { kRaised, kCleared, kAcknowledged };
std::string_view to_string(TransitionType t);

struct AlertTransition {
  TransitionType type;
  Alert alert;
};

// Alert lifecycle with at most one open alert per (kind, subject).
class AlertRegistry {
 public:
  // Raises unless an alert for (kind, subject) is already open.
  std::optional<AlertTransition> raise(AlertKind kind, SubjectKind subject_kind,
                                       std::string_view subject_id, Severity severity,
                                       std::string detail, Timestamp now);
  std::optional<AlertTransition> clear(AlertKind kind, std::string_view subject_id, Timestamp now);
  // Idempotent. Throws Error(kNotFound) for unknown ids.
  AlertTransition ack(std::string_view alert_id, Timestamp now);

  std::optional<Alert> find(std::string_view alert_id) const;
  std::optional<Alert> open_alert(AlertKind kind, std::string_view subject_id) const;
  // Newest first; `open` filters by open/cleared.
  std::vector<Alert> list(std::optional<bool> open) const;
  std::size_t open_count() const;

  // Every alert in raise order, and the counter behind the next id.
  std::vector<Alert> all() const;
  std::uint64_t next_id() const;
  // Replaces the contents. Throws Error(kCorrupt) on duplicate ids or two
  // open alerts for one (kind, subject).
  void restore(std::vector<Alert> alerts, std::uint64_t next_id);

 private:
  mutable std::mutex mu_;
  std::vector<Alert> alerts_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::map<std::pair<AlertKind, std::string>, std::size_t> open_;
  std::uint64_t next_id_ = 1;
};

// What a watchdog remembers between sweeps.
struct WatchdogState {
  std::vector<Alert> alerts;  // raise order
  std::uint64_t next_alert_id = 1;
  std::vector<std::optional<Timestamp>> flagged_since;  // per panel
  std::vector<std::optional<Timestamp>> pr_since;       // per panel
  std::vector<double> seen_derate;                      // per panel
  std::optional<Timestamp> last_pr_hour;
};

// Periodic evaluation of every detector against a store snapshot.
class Watchdog {
 public:
  Watchdog(Fleet fleet, DetectorConfig cfg, ExpectationModel model = {});

  std::vector<AlertTransition> sweep(const TsStore& store, std::span<const PanelControl> controls,
                                     Timestamp now);

  AlertRegistry& alerts() { return alerts_; }
  const AlertRegistry& alerts() const { return alerts_; }
  const DetectorConfig& config() const { return cfg_; }
  const Fleet& fleet() const { return fleet_; }

  WatchdogState state() const;
  // Throws Error(kCorrupt) when the state does not fit this fleet.
  void restore(WatchdogState state);

  // Daylight gate in watts for a site.
  double gate_w(std::size_t site_idx) const;
  // Clear-sky energy for a panel over one whole hour, on the sample grid.
  double expected_hour_wh(std::size_t panel_idx, Timestamp hour_start);

 private:
  struct HourIntegrals {
    double g = 0.0;   // trapezoid of G, Wh/m2
    double g2 = 0.0;  // trapezoid of G^2
  };

  void sweep_site(std::size_t site_idx, const TsStore& store,
                  std::span<const PanelControl> controls, Timestamp now, bool pr_due,
                  std::vector<AlertTransition>& out);
  void clear_panel_alerts(std::string_view panel_id, Timestamp now,
                          std::vector<AlertTransition>& out, bool include_offline);
  const HourIntegrals& hour_integrals(std::size_t site_idx, Timestamp hour_start);

  Fleet fleet_;
  DetectorConfig cfg_;
  ExpectationModel model_;
  AlertRegistry alerts_;
  std::vector<std::optional<Timestamp>> flagged_since_;
  // Hours starting at or before this are left out of the panel's ratio:
  // last seen disabled, or derate changed.
  std::vector<std::optional<Timestamp>> pr_since_;
  std::vector<double> seen_derate_;
  std::vector<double> site_gate_w_;
  std::optional<Timestamp> last_pr_hour_;
  std::map<std::pair<std::size_t, Timestamp>, HourIntegrals> hour_cache_;
};

}  // namespace solarmon
