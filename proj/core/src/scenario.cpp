#include "solarmon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>

#include "solarmon/ts_store.hpp"

namespace solarmon {

void FaultProfile::validate() const {
  const auto bad = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (panels_per_site < 1) bad("panels_per_site must be >= 1");
  if (!unit(faulted_fraction)) bad("faulted_fraction must be in [0, 1]");
  if (!(dead_weight >= 0 && degraded_weight >= 0 && soiled_weight >= 0)) {
    bad("fault weights must be >= 0");
  }
  if (faulted_fraction > 0 && dead_weight + degraded_weight + soiled_weight <= 0) {
    bad("at least one fault weight must be positive");
  }
  if (!unit(degraded_min) || !unit(degraded_max) || degraded_min > degraded_max) {
    bad("degraded_min/max must satisfy 0 <= min <= max <= 1");
  }
  if (!unit(soiled_min) || !unit(soiled_max) || soiled_min > soiled_max) {
    bad("soiled_min/max must satisfy 0 <= min <= max <= 1");
  }
  if (soiling_ramp_s < 0) bad("soiling_ramp_s must be >= 0");
  if (!unit(inverter_fraction)) bad("inverter_fraction must be in [0, 1]");
  if (!unit(cloud_variability)) bad("cloud_variability must be in [0, 1]");
  if (repair_delay_s < 0) bad("repair_delay_s must be >= 0");
  if (sample_interval_s < 1) bad("sample_interval_s must be >= 1");
}

FaultProfile parse_fault_profile(std::istream& in, std::string_view source) {
  FaultProfile p;
  std::string line;
  std::size_t line_no = 0;
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
      const auto real = [&] { return parse_double_field(value, key); };
      const auto integer = [&] { return parse_int_field(value, key); };
      if (key == "panels_per_site") {
        const auto v = integer();
        if (v < 1) fail("panels_per_site must be >= 1");
        p.panels_per_site = static_cast<std::size_t>(v);
      } else if (key == "faulted_fraction") {
        p.faulted_fraction = real();
      } else if (key == "dead_weight") {
        p.dead_weight = real();
      } else if (key == "degraded_weight") {
        p.degraded_weight = real();
      } else if (key == "soiled_weight") {
        p.soiled_weight = real();
      } else if (key == "degraded_min") {
        p.degraded_min = real();
      } else if (key == "degraded_max") {
        p.degraded_max = real();
      } else if (key == "soiled_min") {
        p.soiled_min = real();
      } else if (key == "soiled_max") {
        p.soiled_max = real();
      } else if (key == "soiling_ramp_s") {
        p.soiling_ramp_s = integer();
      } else if (key == "inverter_fraction") {
        p.inverter_fraction = real();
      } else if (key == "cloud_variability") {
        p.cloud_variability = real();
      } else if (key == "repair_delay_s") {
        p.repair_delay_s = integer();
      } else if (key == "sample_interval_s") {
        p.sample_interval_s = integer();
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with(source)) throw;
      fail(e.what());
    }
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, std::string(source) + ": " + e.what());
  }
  return p;
}

FaultProfile load_fault_profile(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot open fault profile " + file.string());
  return parse_fault_profile(in, file.string());
}

std::optional<RepairPolicy> parse_repair_policy(std::string_view s) {
  if (s == "none") return RepairPolicy::kNone;
  if (s == "monitored") return RepairPolicy::kMonitored;
  return std::nullopt;
}

Fleet scenario_fleet(std::size_t panels, std::size_t panels_per_site) {
  const std::size_t n_sites = panels == 0 ? 0 : (panels + panels_per_site - 1) / panels_per_site;
  std::vector<SiteSpec> sites;
  std::vector<PanelSpec> specs;
  char buf[32];
  for (std::size_t s = 0; s < n_sites; ++s) {
    std::snprintf(buf, sizeof buf, "S%02zu", s + 1);
    sites.push_back({buf, "Site " + std::to_string(s + 1), -18.14, 178.44, 720});
  }
  for (std::size_t i = 0; i < panels; ++i) {
    const std::size_t s = i / panels_per_site;
    std::snprintf(buf, sizeof buf, "-P%04zu", i % panels_per_site + 1);
    PanelSpec p;
    p.panel_id = sites[s].site_id + buf;
    p.site_id = sites[s].site_id;
    p.rated_watts_peak = 300.0;
    specs.push_back(std::move(p));
  }
  return Fleet(std::move(sites), std::move(specs));
}

std::vector<FaultSpec> generate_faults(const Fleet& fleet, const FaultProfile& profile,
                                       Timestamp start_ts, Timestamp end_ts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double span = static_cast<double>(end_ts - start_ts);
  // Onset of the j-th of n events: uniform within the j-th slice of the run.
  const auto onset = [&](std::size_t j, std::size_t n) {
    const double frac = (static_cast<double>(j) + unit(rng)) / static_cast<double>(n);
    return start_ts + static_cast<Timestamp>(std::floor(frac * span));
  };
  const auto shuffled = [&](std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    std::shuffle(v.begin(), v.end(), rng);
    return v;
  };

  // Exact counts per kind; largest remainders take the rounding slack.
  const std::size_t n_faulted = static_cast<std::size_t>(
      std::llround(profile.faulted_fraction * static_cast<double>(fleet.panel_count())));
  const double weights[3] = {profile.dead_weight, profile.degraded_weight, profile.soiled_weight};
  const double total = weights[0] + weights[1] + weights[2];
  std::size_t counts[3] = {0, 0, 0};
  double rem[3] = {0, 0, 0};
  std::size_t assigned = 0;
  for (int k = 0; k < 3 && total > 0; ++k) {
    const double exact = static_cast<double>(n_faulted) * weights[k] / total;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < n_faulted) {
    const int k = static_cast<int>(std::max_element(rem, rem + 3) - rem);
    ++counts[k];
    rem[k] = -1;
    ++assigned;
  }

  std::vector<FaultSpec> faults;
  const auto panels = shuffled(fleet.panel_count());
  std::size_t next_panel = 0;
  const FaultKind kinds[3] = {FaultKind::kDead, FaultKind::kDegraded, FaultKind::kSoiled};
  for (int k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < counts[k]; ++j) {
      FaultSpec f;
      f.kind = kinds[k];
      f.subject_id = fleet.panels()[panels[next_panel++]].panel_id;
      f.onset_ts = onset(j, counts[k]);
      if (f.kind == FaultKind::kDegraded) {
        f.magnitude = profile.degraded_min + (profile.degraded_max - profile.degraded_min) * unit(rng);
      } else if (f.kind == FaultKind::kSoiled) {
        f.magnitude = profile.soiled_min + (profile.soiled_max - profile.soiled_min) * unit(rng);
        f.ramp_s = profile.soiling_ramp_s;
      }
      faults.push_back(std::move(f));
    }
  }

  const std::size_t n_inverter = static_cast<std::size_t>(
      std::llround(profile.inverter_fraction * static_cast<double>(fleet.site_count())));
  const auto sites = shuffled(fleet.site_count());
  for (std::size_t j = 0; j < n_inverter; ++j) {
    faults.push_back({FaultKind::kInverterDropout, fleet.sites()[sites[j]].site_id,
                      onset(j, n_inverter), 0.0, 0, std::nullopt});
  }
  std::sort(faults.begin(), faults.end(),
            [](const FaultSpec& a, const FaultSpec& b) { return a.onset_ts < b.onset_ts; });
  return faults;
}

namespace {

// Trapezoid integration per panel with the store's gap rule.
class EnergyMeter {
 public:
  EnergyMeter(std::size_t panels, std::int64_t interval)
      : last_(panels), max_gap_(3 * interval) {}

  void add(std::size_t idx, Timestamp ts, double watts) {
    if (auto& prev = last_[idx]) {
      const auto dt = ts - prev->first;
      if (dt > 0 && dt <= max_gap_) {
        total_wh_ += 0.5 * (prev->second + watts) * static_cast<double>(dt) / 3600.0;
      }
    }
    last_[idx] = std::make_pair(ts, watts);
  }
  double total_wh() const { return total_wh_; }

 private:
  std::vector<std::optional<std::pair<Timestamp, double>>> last_;
  std::int64_t max_gap_;
  double total_wh_ = 0.0;
};

}  // namespace

ScenarioReport run_lost_energy(const ScenarioOptions& opts) {
  const FaultProfile& prof = opts.profile;
  prof.validate();
  if (opts.days < 0) throw Error(ErrorCode::kInvalidArgument, "days must be >= 0");
  const Fleet fleet = scenario_fleet(opts.panels, prof.panels_per_site);
  const std::int64_t interval = prof.sample_interval_s;
  const Timestamp start = opts.start_ts;
  const Timestamp end = start + static_cast<Timestamp>(opts.days) * kSecondsPerDay;

  SimConfig cfg;
  cfg.seed = opts.seed;
  cfg.start_ts = start;
  cfg.sample_interval_s = interval;
  cfg.cloud_variability = prof.cloud_variability;
  cfg.faults = opts.faults ? *opts.faults : generate_faults(fleet, prof, start, end, opts.seed);
  SimConfig ideal_cfg = cfg;
  ideal_cfg.faults.clear();

  SolarFarm farm(fleet, cfg);
  SolarFarm twin(fleet, ideal_cfg);
  StoreOptions store_opts;
  store_opts.sample_interval_s = interval;
  store_opts.fsync = false;
  TsStore store(fleet, store_opts);
  DetectorConfig det = opts.detectors;
  Watchdog watchdog(fleet, det, {interval, cfg.ambient_base_c});
  const std::vector<PanelControl> controls(fleet.panel_count());

  EnergyMeter actual(fleet.panel_count(), interval);
  EnergyMeter ideal(fleet.panel_count(), interval);
  std::multimap<Timestamp, std::string> repairs_due;
  std::vector<bool> detected(farm.faults().size(), false);

  ScenarioReport rep;
  rep.faults_injected = farm.faults().size();
  double latency_sum = 0.0;

  const auto attribute = [&](const Alert& a) {
    const auto& faults = farm.faults();
    const auto site_idx =
        a.subject_kind == SubjectKind::kSite ? fleet.site_index(a.subject_id) : std::nullopt;
    for (std::size_t i = 0; i < faults.size(); ++i) {
      const FaultSpec& f = faults[i];
      if (detected[i] || !f.active_at(a.raised_ts)) continue;
      bool covers = f.subject_id == a.subject_id;
      if (!covers && site_idx && f.kind != FaultKind::kInverterDropout) {
        const auto p = fleet.panel_index(f.subject_id);
        covers = p && fleet.site_of_panel(*p) == *site_idx;
      }
      if (!covers) continue;
      detected[i] = true;
      ++rep.faults_detected;
      latency_sum += static_cast<double>(a.raised_ts - f.onset_ts);
    }
  };

  for (Timestamp t = start; t < end; t += interval) {
    while (!repairs_due.empty() && repairs_due.begin()->first <= t) {
      auto node = repairs_due.extract(repairs_due.begin());
      const Timestamp at = node.key();
      const std::string& subject = node.mapped();
      rep.repairs += farm.repair(subject, at);
      if (auto s = fleet.site_index(subject)) {
        for (std::size_t p : fleet.panels_of_site(*s)) {
          rep.repairs += farm.repair(fleet.panels()[p].panel_id, at);
        }
      }
    }

    const auto readings = farm.step(t);
    for (const auto& r : readings) actual.add(*fleet.panel_index(r.panel_id), r.ts, r.watts);
    const auto expected = twin.step(t);
    for (std::size_t i = 0; i < expected.size(); ++i) ideal.add(i, expected[i].ts, expected[i].watts);

    store.append_batch(readings);
    for (const auto& tr : watchdog.sweep(store, controls, t)) {
      if (tr.type != TransitionType::kRaised) continue;
      ++rep.alerts_raised;
      attribute(tr.alert);
      if (opts.repair == RepairPolicy::kMonitored) {
        repairs_due.emplace(tr.alert.raised_ts + prof.repair_delay_s, tr.alert.subject_id);
      }
    }
  }

  rep.ideal_wh = ideal.total_wh();
  rep.actual_wh = actual.total_wh();
  rep.lost_pct = rep.ideal_wh > 0 ? 100.0 * (rep.ideal_wh - rep.actual_wh) / rep.ideal_wh : 0.0;
  rep.mean_detection_latency_s =
      rep.faults_detected > 0 ? latency_sum / static_cast<double>(rep.faults_detected) : 0.0;
  return rep;
}

std::string format_report_line(const ScenarioReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "ideal_wh=%.1f,actual_wh=%.1f,lost_pct=%.3f,alerts_raised=%llu,"
                "mean_detection_latency_s=%.0f",
                r.ideal_wh, r.actual_wh, r.lost_pct,
                static_cast<unsigned long long>(r.alerts_raised), r.mean_detection_latency_s);
  return buf;
}

std::string format_report_table(const ScenarioReport& r) {
  char buf[640];
  std::snprintf(buf, sizeof buf,
                "  ideal energy        %14.1f Wh\n"
                "  actual energy       %14.1f Wh\n"
                "  lost                %14.3f %%\n"
                "  alerts raised       %14llu\n"
                "  faults injected     %14zu\n"
                "  faults detected     %14zu\n"
                "  repairs             %14zu\n"
                "  mean detection      %14.0f s\n",
                r.ideal_wh, r.actual_wh, r.lost_pct,
                static_cast<unsigned long long>(r.alerts_raised), r.faults_injected,
                r.faults_detected, r.repairs, r.mean_detection_latency_s);
  return buf;
}

}  // namespace solarmon
