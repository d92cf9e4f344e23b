#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace solarmon {

// Integer UTC seconds since the Unix epoch.
using Timestamp = std::int64_t;

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::size_t kMaxIdLength = 64;

enum class ErrorCode {
  kMalformed,
  kChecksum,
  kVersion,
  kIo,
  kCorrupt,
  kNotFound,
  kUnknownPanel,
  kBadRange,
  kBadAction,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Failure carrying a stable code; the code text is what travels over the wire
// and in API bodies (E_MALFORMED, E_CHECKSUM, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct PanelReading {
  std::string panel_id;
  Timestamp ts = 0;
  std::uint64_t seq = 0;
  double volts = 0.0;
  double amps = 0.0;
  double watts = 0.0;
  double module_temp_c = 0.0;

  bool operator==(const PanelReading&) const = default;
};

enum class PanelStatus { kActive, kDisabled };

struct PanelSpec {
  std::string panel_id;
  std::string site_id;
  double rated_watts_peak = 0.0;
  double tilt_deg = 0.0;
  double azimuth_deg = 0.0;
  double temp_coeff_per_c = -0.004;
  PanelStatus status = PanelStatus::kActive;

  bool operator==(const PanelSpec&) const = default;
};

struct SiteSpec {
  std::string site_id;
  std::string name;
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  int utc_offset_min = 0;

  bool operator==(const SiteSpec&) const = default;
};

enum class Resolution { kHour, kDay };
enum class SubjectKind { kPanel, kSite };

struct EnergyBucket {
  SubjectKind subject_kind = SubjectKind::kPanel;
  std::string subject_id;
  Timestamp start_ts = 0;
  Resolution resolution = Resolution::kHour;
  double energy_wh = 0.0;
  std::int64_t samples = 0;

  bool operator==(const EnergyBucket&) const = default;
};

enum class AlertKind {
  kOffline,
  kUnderperformance,
  kFleetDeviation,
  kInverterDropout,
  kLowPerformanceRatio,
};

enum class Severity { kWarning, kCritical };

struct Alert {
  std::string alert_id;
  AlertKind kind = AlertKind::kOffline;
  SubjectKind subject_kind = SubjectKind::kPanel;
  std::string subject_id;
  Timestamp raised_ts = 0;
  std::optional<Timestamp> cleared_ts;
  Severity severity = Severity::kWarning;
  bool acknowledged = false;
  std::string detail;

  bool open() const { return !cleared_ts.has_value(); }
  bool operator==(const Alert&) const = default;
};

enum class CommandAction { kEnable, kDisable, kSetDerate };
enum class CommandState { kQueued, kDelivered, kApplied };

struct Command {
  std::string command_id;
  std::string panel_id;
  CommandAction action = CommandAction::kEnable;
  std::optional<double> derate;
  Timestamp issued_ts = 0;
  CommandState state = CommandState::kQueued;

  bool operator==(const Command&) const = default;
};

// Enum <-> wire/JSON names.
std::string_view to_string(PanelStatus v);
std::string_view to_string(Resolution v);
std::string_view to_string(SubjectKind v);
std::string_view to_string(AlertKind v);
std::string_view to_string(Severity v);
std::string_view to_string(CommandAction v);
std::string_view to_string(CommandState v);

std::optional<Resolution> parse_resolution(std::string_view s);
std::optional<CommandAction> parse_command_action(std::string_view s);

enum class Violation {
  kBadPanelId,
  kNegativeVolts,
  kNegativeAmps,
  kNegativeWatts,
  kTemperatureOutOfRange,
  kNonFinite,
  kNegativeTimestamp,
  kPowerInconsistent,
};

std::string_view to_string(Violation v);

// Every invariant the reading breaks; empty means valid.
std::vector<Violation> validate_reading(const PanelReading& r);

// Opaque identifier rule: 1..64 printable ASCII bytes, no whitespace.
bool is_valid_id(std::string_view id);

std::int64_t resolution_seconds(Resolution res);

// Largest resolution boundary <= ts. Hour buckets are UTC-aligned; day
// buckets start at local midnight for the given offset.
Timestamp bucket_start(Timestamp ts, Resolution res, int utc_offset_min);

// Floor division for possibly negative numerators.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace solarmon
