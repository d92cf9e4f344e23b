#include "solarmon/model.hpp"

#include <algorithm>
#include <cmath>

namespace solarmon {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed: return "E_MALFORMED";
    case ErrorCode::kChecksum: return "E_CHECKSUM";
    case ErrorCode::kVersion: return "E_VERSION";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kCorrupt: return "E_CORRUPT";
    case ErrorCode::kNotFound: return "E_NOT_FOUND";
    case ErrorCode::kUnknownPanel: return "E_UNKNOWN_PANEL";
    case ErrorCode::kBadRange: return "E_BAD_RANGE";
    case ErrorCode::kBadAction: return "E_BAD_ACTION";
    case ErrorCode::kInvalidArgument: return "E_INVALID_ARGUMENT";
  }
  return "E_UNKNOWN";
}

std::string_view to_string(PanelStatus v) {
  return v == PanelStatus::kActive ? "active" : "disabled";
}

std::string_view to_string(Resolution v) {
  return v == Resolution::kHour ? "hour" : "day";
}

std::string_view to_string(SubjectKind v) {
  return v == SubjectKind::kPanel ? "panel" : "site";
}

std::string_view to_string(AlertKind v) {
  switch (v) {
    case AlertKind::kOffline: return "offline";
    case AlertKind::kUnderperformance: return "underperformance";
    case AlertKind::kFleetDeviation: return "fleet_deviation";
    case AlertKind::kInverterDropout: return "inverter_dropout";
    case AlertKind::kLowPerformanceRatio: return "low_performance_ratio";
  }
  return "unknown";
}

std::string_view to_string(Severity v) {
  return v == Severity::kWarning ? "warning" : "critical";
}

std::string_view to_string(CommandAction v) {
  switch (v) {
    case CommandAction::kEnable: return "enable";
    case CommandAction::kDisable: return "disable";
    case CommandAction::kSetDerate: return "set_derate";
  }
  return "unknown";
}

std::string_view to_string(CommandState v) {
  switch (v) {
    case CommandState::kQueued: return "queued";
    case CommandState::kDelivered: return "delivered";
    case CommandState::kApplied: return "applied";
  }
  return "unknown";
}

std::optional<Resolution> parse_resolution(std::string_view s) {
  if (s == "hour") return Resolution::kHour;
  if (s == "day") return Resolution::kDay;
  return std::nullopt;
}

std::optional<CommandAction> parse_command_action(std::string_view s) {
  if (s == "enable") return CommandAction::kEnable;
  if (s == "disable") return CommandAction::kDisable;
  if (s == "set_derate") return CommandAction::kSetDerate;
  return std::nullopt;
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::kBadPanelId: return "bad-panel-id";
    case Violation::kNegativeVolts: return "negative-volts";
    case Violation::kNegativeAmps: return "negative-amps";
    case Violation::kNegativeWatts: return "negative-watts";
    case Violation::kTemperatureOutOfRange: return "temperature-out-of-range";
    case Violation::kNonFinite: return "non-finite";
    case Violation::kNegativeTimestamp: return "negative-timestamp";
    case Violation::kPowerInconsistent: return "power-inconsistent";
  }
  return "unknown";
}

bool is_valid_id(std::string_view id) {
  if (id.empty() || id.size() > kMaxIdLength) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u > 0x20 && u < 0x7f;
  });
}

std::vector<Violation> validate_reading(const PanelReading& r) {
  std::vector<Violation> out;
  if (!is_valid_id(r.panel_id)) out.push_back(Violation::kBadPanelId);
  if (r.ts < 0) out.push_back(Violation::kNegativeTimestamp);
  const bool finite = std::isfinite(r.volts) && std::isfinite(r.amps) &&
                      std::isfinite(r.watts) && std::isfinite(r.module_temp_c);
  if (!finite) {
    out.push_back(Violation::kNonFinite);
    return out;
  }
  if (r.volts < 0) out.push_back(Violation::kNegativeVolts);
  if (r.amps < 0) out.push_back(Violation::kNegativeAmps);
  if (r.watts < 0) out.push_back(Violation::kNegativeWatts);
  if (r.module_temp_c < -40.0 || r.module_temp_c > 120.0) {
    out.push_back(Violation::kTemperatureOutOfRange);
  }
  if (std::abs(r.watts - r.volts * r.amps) > 0.01 * std::max(1.0, r.watts)) {
    out.push_back(Violation::kPowerInconsistent);
  }
  return out;
}

std::int64_t resolution_seconds(Resolution res) {
  return res == Resolution::kHour ? kSecondsPerHour : kSecondsPerDay;
}

Timestamp bucket_start(Timestamp ts, Resolution res, int utc_offset_min) {
  if (res == Resolution::kHour) {
    return floor_div(ts, kSecondsPerHour) * kSecondsPerHour;
  }
  const std::int64_t offset_s = std::int64_t{utc_offset_min} * 60;
  return floor_div(ts + offset_s, kSecondsPerDay) * kSecondsPerDay - offset_s;
}

}  // namespace solarmon
