#include "solarmon/watchdog.hpp"

#include <algorithm>
#include <cstdio>

#include "solarmon/solar.hpp"

namespace solarmon {

void DetectorConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(offline_timeout_s > 0, "offline_timeout_s must be positive");
  require(peer_ratio_threshold > 0 && peer_ratio_threshold < 1,
          "peer_ratio_threshold must be in (0, 1)");
  require(sustain_s >= 0, "sustain_s must be non-negative");
  require(pr_floor > 0 && pr_floor < 1, "pr_floor must be in (0, 1)");
  require(!daylight_gate_w || *daylight_gate_w >= 0, "daylight_gate_w must be non-negative");
  require(sweep_interval_s > 0, "sweep_interval_s must be positive");
}

bool check_offline(PanelStatus status, std::optional<Timestamp> latest_ts, Timestamp now,
                   const DetectorConfig& cfg) {
  if (status == PanelStatus::kDisabled) return false;
  if (!latest_ts) return true;
  return now - *latest_ts > cfg.offline_timeout_s;
}

std::optional<bool> peer_deviation(double panel_mean_w, double site_peer_median_w, double gate_w,
                                   const DetectorConfig& cfg) {
  if (!(site_peer_median_w > gate_w) || site_peer_median_w <= 0) return std::nullopt;
  return panel_mean_w / site_peer_median_w < cfg.peer_ratio_threshold;
}

std::optional<double> performance_ratio(double actual_wh, double expected_wh) {
  if (!(expected_wh > 0)) return std::nullopt;
  return actual_wh / expected_wh;
}

bool inverter_dropout_condition(std::size_t down_panels, std::size_t active_panels) {
  return active_panels > 0 && 10 * down_panels >= 9 * active_panels;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

std::string_view to_string(TransitionType t) {
  switch (t) {
    case TransitionType::kRaised: return "raised";
    case TransitionType::kCleared: return "cleared";
    case TransitionType::kAcknowledged: return "acknowledged";
  }
  return "unknown";
}

// --- AlertRegistry -----------------------------------------------------------

std::optional<AlertTransition> AlertRegistry::raise(AlertKind kind, SubjectKind subject_kind,
                                                    std::string_view subject_id,
                                                    Severity severity, std::string detail,
                                                    Timestamp now) {
  std::lock_guard lock(mu_);
  auto key = std::make_pair(kind, std::string(subject_id));
  if (open_.count(key)) return std::nullopt;
  char id[24];
  std::snprintf(id, sizeof id, "A%06llu", static_cast<unsigned long long>(next_id_++));
  Alert a;
  a.alert_id = id;
  a.kind = kind;
  a.subject_kind = subject_kind;
  a.subject_id = std::string(subject_id);
  a.raised_ts = now;
  a.severity = severity;
  a.detail = std::move(detail);
  by_id_.emplace(a.alert_id, alerts_.size());
  open_.emplace(std::move(key), alerts_.size());
  alerts_.push_back(a);
  return AlertTransition{TransitionType::kRaised, std::move(a)};
}

std::optional<AlertTransition> AlertRegistry::clear(AlertKind kind, std::string_view subject_id,
                                                    Timestamp now) {
  std::lock_guard lock(mu_);
  auto it = open_.find(std::make_pair(kind, std::string(subject_id)));
  if (it == open_.end()) return std::nullopt;
  Alert& a = alerts_[it->second];
  a.cleared_ts = std::max(now, a.raised_ts);
  open_.erase(it);
  return AlertTransition{TransitionType::kCleared, a};
}

AlertTransition AlertRegistry::ack(std::string_view alert_id, Timestamp /*now*/) {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(alert_id);
  if (it == by_id_.end()) {
    throw Error(ErrorCode::kNotFound, "unknown alert " + std::string(alert_id));
  }
  Alert& a = alerts_[it->second];
  a.acknowledged = true;
  return AlertTransition{TransitionType::kAcknowledged, a};
}

std::optional<Alert> AlertRegistry::find(std::string_view alert_id) const {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(alert_id);
  if (it == by_id_.end()) return std::nullopt;
  return alerts_[it->second];
}

std::optional<Alert> AlertRegistry::open_alert(AlertKind kind, std::string_view subject_id) const {
  std::lock_guard lock(mu_);
  auto it = open_.find(std::make_pair(kind, std::string(subject_id)));
  if (it == open_.end()) return std::nullopt;
  return alerts_[it->second];
}

std::vector<Alert> AlertRegistry::list(std::optional<bool> open) const {
  std::lock_guard lock(mu_);
  std::vector<Alert> out;
  for (auto it = alerts_.rbegin(); it != alerts_.rend(); ++it) {
    if (!open || it->open() == *open) out.push_back(*it);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Alert& a, const Alert& b) { return a.raised_ts > b.raised_ts; });
  return out;
}

std::size_t AlertRegistry::open_count() const {
  std::lock_guard lock(mu_);
  return open_.size();
}

std::vector<Alert> AlertRegistry::all() const {
  std::lock_guard lock(mu_);
  return alerts_;
}

std::uint64_t AlertRegistry::next_id() const {
  std::lock_guard lock(mu_);
  return next_id_;
}

void AlertRegistry::restore(std::vector<Alert> alerts, std::uint64_t next_id) {
  std::map<std::string, std::size_t, std::less<>> by_id;
  std::map<std::pair<AlertKind, std::string>, std::size_t> open;
  for (std::size_t i = 0; i < alerts.size(); ++i) {
    const Alert& a = alerts[i];
    if (!by_id.emplace(a.alert_id, i).second) {
      throw Error(ErrorCode::kCorrupt, "duplicate alert id " + a.alert_id);
    }
    if (a.open() && !open.emplace(std::make_pair(a.kind, a.subject_id), i).second) {
      throw Error(ErrorCode::kCorrupt, "two open alerts for " + a.subject_id);
    }
  }
  std::lock_guard lock(mu_);
  alerts_ = std::move(alerts);
  by_id_ = std::move(by_id);
  open_ = std::move(open);
  next_id_ = next_id;
}

// --- Watchdog ----------------------------------------------------------------

namespace {

constexpr AlertKind kPanelKinds[] = {AlertKind::kOffline, AlertKind::kUnderperformance,
                                     AlertKind::kLowPerformanceRatio};

void push(std::vector<AlertTransition>& out, std::optional<AlertTransition> t) {
  if (t) out.push_back(std::move(*t));
}

// Median of the sorted values with one element of the given rank removed.
double median_without(const std::vector<double>& sorted, std::size_t rank) {
  const std::size_t m = sorted.size() - 1;
  const auto kth = [&](std::size_t k) { return k < rank ? sorted[k] : sorted[k + 1]; };
  return m % 2 ? kth(m / 2) : (kth(m / 2 - 1) + kth(m / 2)) / 2.0;
}

std::string fmt(const char* format, double a, double b = 0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

}  // namespace

Watchdog::Watchdog(Fleet fleet, DetectorConfig cfg, ExpectationModel model)
    : fleet_(std::move(fleet)),
      cfg_(cfg),
      model_(model),
      flagged_since_(fleet_.panel_count()),
      pr_since_(fleet_.panel_count()),
      seen_derate_(fleet_.panel_count(), 1.0) {
  cfg_.validate();
  for (std::size_t s = 0; s < fleet_.site_count(); ++s) {
    if (cfg_.daylight_gate_w) {
      site_gate_w_.push_back(*cfg_.daylight_gate_w);
      continue;
    }
    std::vector<double> rated;
    for (std::size_t p : fleet_.panels_of_site(s)) {
      rated.push_back(fleet_.panels()[p].rated_watts_peak);
    }
    site_gate_w_.push_back(0.05 * median(std::move(rated)));
  }
}

WatchdogState Watchdog::state() const {
  return {alerts_.all(), alerts_.next_id(), flagged_since_, pr_since_, seen_derate_, last_pr_hour_};
}

void Watchdog::restore(WatchdogState state) {
  const std::size_t n = fleet_.panel_count();
  if (state.flagged_since.size() != n || state.pr_since.size() != n || state.seen_derate.size() != n) {
    throw Error(ErrorCode::kCorrupt, "watchdog state is for a different fleet");
  }
  alerts_.restore(std::move(state.alerts), state.next_alert_id);
  flagged_since_ = std::move(state.flagged_since);
  pr_since_ = std::move(state.pr_since);
  seen_derate_ = std::move(state.seen_derate);
  last_pr_hour_ = state.last_pr_hour;
}

double Watchdog::gate_w(std::size_t site_idx) const { return site_gate_w_[site_idx]; }

const Watchdog::HourIntegrals& Watchdog::hour_integrals(std::size_t site_idx,
                                                         Timestamp hour_start) {
  auto key = std::make_pair(site_idx, hour_start);
  auto it = hour_cache_.find(key);
  if (it != hour_cache_.end()) return it->second;
  const SiteSpec& site = fleet_.sites()[site_idx];
  const std::int64_t step = std::min<std::int64_t>(model_.sample_interval_s, kSecondsPerHour);
  HourIntegrals acc;
  Timestamp t0 = hour_start;
  double g0 = solar::clear_sky_irradiance(solar::solar_elevation_at(site, t0));
  while (t0 < hour_start + kSecondsPerHour) {
    const Timestamp t1 = std::min(t0 + step, hour_start + kSecondsPerHour);
    const double g1 = solar::clear_sky_irradiance(solar::solar_elevation_at(site, t1));
    const double dt_h = static_cast<double>(t1 - t0) / 3600.0;
    acc.g += (g0 + g1) / 2.0 * dt_h;
    acc.g2 += (g0 * g0 + g1 * g1) / 2.0 * dt_h;
    t0 = t1;
    g0 = g1;
  }
  return hour_cache_.emplace(key, acc).first->second;
}

double Watchdog::expected_hour_wh(std::size_t panel_idx, Timestamp hour_start) {
  const PanelSpec& p = fleet_.panels()[panel_idx];
  const HourIntegrals& in = hour_integrals(fleet_.site_of_panel(panel_idx), hour_start);
  // P = rated/1000 * (G * (1 + c*(Ta - 25)) + 0.03 * c * G^2); linear in G and G^2.
  const double c = p.temp_coeff_per_c;
  return p.rated_watts_peak / solar::kStcIrradiance *
         (in.g * (1.0 + c * (model_.ambient_c - 25.0)) + 0.03 * c * in.g2);
}

void Watchdog::clear_panel_alerts(std::string_view panel_id, Timestamp now,
                                  std::vector<AlertTransition>& out, bool include_offline) {
  for (AlertKind k : kPanelKinds) {
    if (k == AlertKind::kOffline && !include_offline) continue;
    push(out, alerts_.clear(k, panel_id, now));
  }
}

std::vector<AlertTransition> Watchdog::sweep(const TsStore& store,
                                             std::span<const PanelControl> controls,
                                             Timestamp now) {
  std::vector<AlertTransition> out;
  const Timestamp hour = bucket_start(now, Resolution::kHour, 0);
  const bool pr_due = !last_pr_hour_ || *last_pr_hour_ != hour;
  for (std::size_t s = 0; s < fleet_.site_count(); ++s) {
    sweep_site(s, store, controls, now, pr_due, out);
  }
  if (pr_due) {
    last_pr_hour_ = hour;
    const Timestamp horizon = hour - 2 * kSecondsPerDay;
    std::erase_if(hour_cache_, [horizon](const auto& e) { return e.first.second < horizon; });
  }
  return out;
}

void Watchdog::sweep_site(std::size_t site_idx, const TsStore& store,
                          std::span<const PanelControl> controls, Timestamp now, bool pr_due,
                          std::vector<AlertTransition>& out) {
  const SiteSpec& site = fleet_.sites()[site_idx];
  const auto& members = fleet_.panels_of_site(site_idx);
  const double gate = site_gate_w_[site_idx];

  struct PanelState {
    std::size_t idx;
    std::optional<PanelReading> latest;
    bool offline;
  };
  std::vector<PanelState> active;
  std::size_t down = 0;
  std::vector<double> expected_now;
  for (std::size_t idx : members) {
    const PanelSpec& spec = fleet_.panels()[idx];
    expected_now.push_back(solar::clear_sky_power(spec, site, now, model_.ambient_c));
    if (controls[idx].status == PanelStatus::kDisabled) {
      // Disabled panels are exempt from every panel-level detector.
      clear_panel_alerts(spec.panel_id, now, out, true);
      flagged_since_[idx].reset();
      pr_since_[idx] = now;
      continue;
    }
    if (controls[idx].derate != seen_derate_[idx]) {
      seen_derate_[idx] = controls[idx].derate;
      pr_since_[idx] = now;
    }
    PanelState st{idx, store.latest(idx), false};
    st.offline = check_offline(PanelStatus::kActive,
                               st.latest ? std::optional<Timestamp>(st.latest->ts) : std::nullopt,
                               now, cfg_);
    if (st.offline || st.latest->watts <= 0) ++down;
    active.push_back(std::move(st));
  }
  const bool daylight = median(expected_now) > gate;

  // Site-wide dropout supersedes panel-level alerts.
  const bool dropout = inverter_dropout_condition(down, active.size());
  const bool dropout_open = alerts_.open_alert(AlertKind::kInverterDropout, site.site_id).has_value();
  if (dropout_open && !dropout) {
    push(out, alerts_.clear(AlertKind::kInverterDropout, site.site_id, now));
  } else if (dropout && (dropout_open || daylight)) {
    char detail[96];
    std::snprintf(detail, sizeof detail, "%zu of %zu active panels offline or at 0 W", down,
                  active.size());
    push(out, alerts_.raise(AlertKind::kInverterDropout, SubjectKind::kSite, site.site_id,
                            Severity::kCritical, detail, now));
    for (const auto& st : active) {
      clear_panel_alerts(fleet_.panels()[st.idx].panel_id, now, out, true);
      flagged_since_[st.idx].reset();
    }
    push(out, alerts_.clear(AlertKind::kFleetDeviation, site.site_id, now));
    return;
  }

  // Offline.
  for (const auto& st : active) {
    const std::string& pid = fleet_.panels()[st.idx].panel_id;
    if (st.offline) {
      const std::string detail =
          st.latest ? "no reading for " + std::to_string(now - st.latest->ts) + " s"
                    : std::string("never reported");
      push(out, alerts_.raise(AlertKind::kOffline, SubjectKind::kPanel, pid, Severity::kCritical,
                              detail, now));
      clear_panel_alerts(pid, now, out, false);
      flagged_since_[st.idx].reset();
    } else {
      push(out, alerts_.clear(AlertKind::kOffline, pid, now));
    }
  }

  // Peer deviation over the last sweep window, derate-normalized.
  std::vector<std::pair<std::size_t, double>> means;
  for (const auto& st : active) {
    if (st.offline) continue;
    auto m = store.mean_watts(st.idx, now - cfg_.sweep_interval_s, now);
    if (m) means.emplace_back(st.idx, *m / controls[st.idx].derate);
  }
  if (active.size() >= 3 && means.size() >= 2) {
    std::vector<double> sorted;
    for (const auto& [idx, m] : means) sorted.push_back(m);
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [idx, m] : means) {
      const std::size_t rank = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), m) - sorted.begin());
      const double peer_median = median_without(sorted, rank);
      const auto flagged = peer_deviation(m, peer_median, gate, cfg_);
      if (!flagged) continue;
      const std::string& pid = fleet_.panels()[idx].panel_id;
      if (*flagged) {
        if (!flagged_since_[idx]) flagged_since_[idx] = now;
        if (now - *flagged_since_[idx] >= cfg_.sustain_s) {
          push(out, alerts_.raise(AlertKind::kUnderperformance, SubjectKind::kPanel, pid,
                                  Severity::kWarning,
                                  fmt("output at %.0f%% of peer median %.1f W",
                                      100.0 * m / peer_median, peer_median),
                                  now));
        }
      } else {
        flagged_since_[idx].reset();
        push(out, alerts_.clear(AlertKind::kUnderperformance, pid, now));
      }
    }
  }

  // Performance ratio over the trailing 24 complete hours, once per hour and
  // only while the sun is up.
  if (!pr_due || solar::solar_elevation_at(site, now) <= 0) return;
  const Timestamp hour = bucket_start(now, Resolution::kHour, 0);
  const std::int64_t per_hour = std::max<std::int64_t>(1, kSecondsPerHour / model_.sample_interval_s);
  double site_actual = 0;
  double site_expected = 0;
  std::vector<std::pair<std::size_t, double>> panel_pr;
  for (const auto& st : active) {
    if (st.offline || !st.latest) continue;
    double actual = 0;
    double expected = 0;
    for (Timestamp h = hour - kSecondsPerDay; h < hour; h += kSecondsPerHour) {
      if (st.latest->ts < h + kSecondsPerHour) continue;
      if (pr_since_[st.idx] && h <= *pr_since_[st.idx]) continue;
      const BucketTotals b = store.panel_bucket(st.idx, Resolution::kHour, h);
      if (b.samples < per_hour) continue;
      actual += b.energy_wh;
      expected += expected_hour_wh(st.idx, h);
    }
    actual /= controls[st.idx].derate;
    if (auto pr = performance_ratio(actual, expected)) {
      panel_pr.emplace_back(st.idx, *pr);
      site_actual += actual;
      site_expected += expected;
    }
  }
  const auto site_pr = performance_ratio(site_actual, site_expected);
  if (site_pr && *site_pr < cfg_.pr_floor) {
    push(out, alerts_.raise(AlertKind::kFleetDeviation, SubjectKind::kSite, site.site_id,
                            Severity::kWarning,
                            fmt("site performance ratio %.3f below floor %.2f", *site_pr,
                                cfg_.pr_floor),
                            now));
    for (const auto& [idx, pr] : panel_pr) {
      push(out, alerts_.clear(AlertKind::kLowPerformanceRatio, fleet_.panels()[idx].panel_id, now));
    }
    return;
  }
  if (site_pr) push(out, alerts_.clear(AlertKind::kFleetDeviation, site.site_id, now));
  for (const auto& [idx, pr] : panel_pr) {
    const std::string& pid = fleet_.panels()[idx].panel_id;
    if (pr < cfg_.pr_floor) {
      push(out, alerts_.raise(AlertKind::kLowPerformanceRatio, SubjectKind::kPanel, pid,
                              Severity::kWarning,
                              fmt("performance ratio %.3f below floor %.2f", pr, cfg_.pr_floor),
                              now));
    } else {
      push(out, alerts_.clear(AlertKind::kLowPerformanceRatio, pid, now));
    }
  }
}

}  // namespace solarmon
