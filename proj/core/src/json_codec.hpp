#pragma once

// JSON shapes shared by the HTTP API and the event stream.

#include <json.hpp>

#include "solarmon/model.hpp"
#include "solarmon/watchdog.hpp"

namespace solarmon {

inline nlohmann::json to_json(const PanelReading& r) {
  return {{"panel_id", r.panel_id}, {"ts", r.ts},       {"seq", r.seq},
          {"volts", r.volts},       {"amps", r.amps},   {"watts", r.watts},
          {"module_temp_c", r.module_temp_c}};
}

inline nlohmann::json to_json(const EnergyBucket& b) {
  return {{"subject_kind", to_string(b.subject_kind)},
          {"subject_id", b.subject_id},
          {"start_ts", b.start_ts},
          {"resolution", to_string(b.resolution)},
          {"energy_wh", b.energy_wh},
          {"samples", b.samples}};
}

inline nlohmann::json to_json(const Alert& a) {
  nlohmann::json j = {{"alert_id", a.alert_id},
                      {"kind", to_string(a.kind)},
                      {"subject_kind", to_string(a.subject_kind)},
                      {"subject_id", a.subject_id},
                      {"raised_ts", a.raised_ts},
                      {"cleared_ts", nullptr},
                      {"severity", to_string(a.severity)},
                      {"acknowledged", a.acknowledged},
                      {"open", a.open()},
                      {"detail", a.detail}};
  if (a.cleared_ts) j["cleared_ts"] = *a.cleared_ts;
  return j;
}

inline nlohmann::json to_json(const Command& c) {
  nlohmann::json j = {{"command_id", c.command_id}, {"panel_id", c.panel_id},
                      {"action", to_string(c.action)}, {"derate", nullptr},
                      {"issued_ts", c.issued_ts},   {"state", to_string(c.state)}};
  if (c.derate) j["derate"] = *c.derate;
  return j;
}

inline nlohmann::json to_json(const AlertTransition& t) {
  return {{"transition", to_string(t.type)}, {"alert", to_json(t.alert)}};
}

}  // namespace solarmon
