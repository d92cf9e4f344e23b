#include "solarmon/sim_farm.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "solarmon/number_format.hpp"
#include "solarmon/solar.hpp"

namespace solarmon {

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::kDead: return "dead";
    case FaultKind::kDegraded: return "degraded";
    case FaultKind::kSoiled: return "soiled";
    case FaultKind::kInverterDropout: return "inverter_dropout";
  }
  return "unknown";
}

std::optional<FaultKind> parse_fault_kind(std::string_view s) {
  if (s == "dead") return FaultKind::kDead;
  if (s == "degraded") return FaultKind::kDegraded;
  if (s == "soiled") return FaultKind::kSoiled;
  if (s == "inverter_dropout") return FaultKind::kInverterDropout;
  return std::nullopt;
}

double FaultSpec::multiplier_at(Timestamp ts) const {
  if (!active_at(ts)) return 1.0;
  switch (kind) {
    case FaultKind::kDead:
    case FaultKind::kInverterDropout:
      return 0.0;
    case FaultKind::kDegraded:
      return magnitude;
    case FaultKind::kSoiled: {
      if (ramp_s <= 0) return magnitude;
      const double progress =
          std::min(1.0, static_cast<double>(ts - onset_ts) / static_cast<double>(ramp_s));
      return 1.0 - (1.0 - magnitude) * progress;
    }
  }
  return 1.0;
}

double effective_multiplier(const std::vector<FaultSpec>& faults, std::string_view panel_id,
                            std::string_view site_id, Timestamp ts) {
  double m = 1.0;
  for (const auto& f : faults) {
    if (f.affects(panel_id, site_id)) m *= f.multiplier_at(ts);
  }
  return m;
}

bool is_dead(const std::vector<FaultSpec>& faults, std::string_view panel_id, Timestamp ts) {
  return std::any_of(faults.begin(), faults.end(), [&](const FaultSpec& f) {
    return f.kind == FaultKind::kDead && f.subject_id == panel_id && f.active_at(ts);
  });
}

std::vector<FaultSpec> parse_faults(std::istream& in, std::string_view source,
                                    const Fleet* fleet) {
  std::vector<FaultSpec> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::kMalformed,
                  std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
    };
    const auto f = split_csv_line(t);
    if (out.empty() && f[0] == "kind") continue;
    if (f.size() < 4 || f.size() > 5) fail("expected kind,subject_id,onset_ts,magnitude,ramp_s");
    FaultSpec spec;
    auto kind = parse_fault_kind(f[0]);
    if (!kind) fail("unknown fault kind '" + f[0] + "'");
    spec.kind = *kind;
    spec.subject_id = f[1];
    try {
      spec.onset_ts = parse_int_field(f[2], "onset_ts");
      spec.magnitude = parse_double_field(f[3], "magnitude");
      if (f.size() == 5 && !f[4].empty()) spec.ramp_s = parse_int_field(f[4], "ramp_s");
    } catch (const Error& e) {
      fail(e.what());
    }
    if (spec.onset_ts < 0) fail("onset_ts must be non-negative");
    if (spec.magnitude < 0 || spec.magnitude > 1) fail("magnitude must be in [0, 1]");
    if (spec.ramp_s < 0) fail("ramp_s must be non-negative");
    if (spec.kind != FaultKind::kSoiled && spec.ramp_s != 0) fail("ramp_s only applies to soiled");
    if (fleet) {
      const bool known = spec.kind == FaultKind::kInverterDropout
                             ? fleet->find_site(spec.subject_id) != nullptr
                             : fleet->find_panel(spec.subject_id) != nullptr;
      if (!known) fail("unknown subject '" + spec.subject_id + "'");
    }
    out.push_back(std::move(spec));
  }
  return out;
}

void write_faults(std::ostream& out, const std::vector<FaultSpec>& faults) {
  for (const auto& f : faults) {
    out << to_string(f.kind) << ',' << f.subject_id << ',' << f.onset_ts << ','
        << format_double(f.magnitude) << ',';
    if (f.kind == FaultKind::kSoiled) out << f.ramp_s;
    out << '\n';
  }
}

SolarFarm::SolarFarm(Fleet fleet, SimConfig config)
    : fleet_(std::move(fleet)), config_(std::move(config)), runtime_(fleet_.panel_count()) {
  if (config_.sample_interval_s < 1) throw std::invalid_argument("sample interval must be >= 1");
  if (config_.cloud_variability < 0 || config_.cloud_variability > 1) {
    throw std::invalid_argument("cloud variability must be in [0, 1]");
  }
  for (std::size_t i = 0; i < runtime_.size(); ++i) {
    const PanelSpec& spec = fleet_.panels()[i];
    const std::string& site_id = fleet_.sites()[fleet_.site_of_panel(i)].site_id;
    runtime_[i].status = spec.status;
    for (std::size_t f = 0; f < config_.faults.size(); ++f) {
      if (config_.faults[f].affects(spec.panel_id, site_id)) runtime_[i].faults.push_back(f);
    }
  }
}

double SolarFarm::fault_multiplier(std::size_t panel_idx, Timestamp ts, bool* dead) const {
  double m = 1.0;
  for (std::size_t f : runtime_[panel_idx].faults) {
    const FaultSpec& fault = config_.faults[f];
    m *= fault.multiplier_at(ts);
    if (dead && fault.kind == FaultKind::kDead && fault.active_at(ts)) *dead = true;
  }
  return m;
}

double SolarFarm::modeled_power(std::size_t panel_idx, Timestamp ts) const {
  const PanelSpec& spec = fleet_.panels()[panel_idx];
  const SiteSpec& site = fleet_.sites()[fleet_.site_of_panel(panel_idx)];
  const PanelRuntime& rt = runtime_[panel_idx];
  const double g = solar::clear_sky_irradiance(solar::solar_elevation_at(site, ts)) *
                   solar::cloud_factor(site.site_id, ts, config_.seed, config_.cloud_variability);
  if (rt.status == PanelStatus::kDisabled) return 0.0;
  const double m = fault_multiplier(panel_idx, ts, nullptr) * rt.derate;
  return solar::dc_power(spec.rated_watts_peak, spec.temp_coeff_per_c, g,
                         solar::cell_temperature(config_.ambient_base_c, g), m);
}

std::vector<PanelReading> SolarFarm::step(Timestamp virtual_now) {
  if (last_step_ && virtual_now < *last_step_ + config_.sample_interval_s) {
    throw std::invalid_argument("step called before one sample interval elapsed");
  }
  last_step_ = virtual_now;

  // Geometry and cloud cover are shared by every panel of a site.
  std::vector<double> site_g(fleet_.site_count());
  for (std::size_t s = 0; s < fleet_.site_count(); ++s) {
    const SiteSpec& site = fleet_.sites()[s];
    site_g[s] = solar::clear_sky_irradiance(solar::solar_elevation_at(site, virtual_now)) *
                solar::cloud_factor(site.site_id, virtual_now, config_.seed,
                                    config_.cloud_variability);
  }

  std::vector<PanelReading> batch;
  batch.reserve(fleet_.panel_count());
  for (std::size_t idx = 0; idx < fleet_.panel_count(); ++idx) {
    bool dead = false;
    PanelRuntime& rt = runtime_[idx];
    const double m = fault_multiplier(idx, virtual_now, &dead) * rt.derate;
    if (dead) continue;
    const PanelSpec& spec = fleet_.panels()[idx];
    const double g = site_g[fleet_.site_of_panel(idx)];
    const double t_cell = solar::cell_temperature(config_.ambient_base_c, g);
    PanelReading r;
    r.panel_id = spec.panel_id;
    r.ts = virtual_now;
    r.seq = rt.next_seq++;
    if (rt.status == PanelStatus::kActive) {
      r.watts = solar::dc_power(spec.rated_watts_peak, spec.temp_coeff_per_c, g, t_cell, m);
    }
    if (r.watts > 0) {
      r.volts = solar::kOperatingVoltageFactor * solar::kNominalPanelVolts;
      r.amps = r.watts / r.volts;
    }
    r.module_temp_c = t_cell;
    batch.push_back(std::move(r));
  }
  return batch;
}

void SolarFarm::apply_command(Command& cmd) {
  auto idx = fleet_.panel_index(cmd.panel_id);
  if (!idx) throw Error(ErrorCode::kUnknownPanel, "unknown panel " + cmd.panel_id);
  if (cmd.state != CommandState::kDelivered) {
    throw std::invalid_argument("command " + cmd.command_id + " is not in delivered state");
  }
  PanelRuntime& rt = runtime_[*idx];
  switch (cmd.action) {
    case CommandAction::kEnable:
      rt.status = PanelStatus::kActive;
      break;
    case CommandAction::kDisable:
      rt.status = PanelStatus::kDisabled;
      break;
    case CommandAction::kSetDerate:
      if (!cmd.derate || *cmd.derate <= 0 || *cmd.derate > 1) {
        throw Error(ErrorCode::kBadAction, "derate must be in (0, 1]");
      }
      rt.derate = *cmd.derate;
      break;
  }
  cmd.state = CommandState::kApplied;
}

std::size_t SolarFarm::repair(std::string_view subject_id, Timestamp ts) {
  std::size_t n = 0;
  for (auto& f : config_.faults) {
    if (f.subject_id == subject_id && f.onset_ts <= ts && !f.repaired_ts) {
      f.repaired_ts = ts;
      ++n;
    }
  }
  return n;
}

}  // namespace solarmon
