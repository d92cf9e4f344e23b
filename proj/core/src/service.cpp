#include "solarmon/service.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json_codec.hpp"

namespace solarmon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kStateVersion = 1;

template <typename E, std::size_t N>
E enum_field(const json& j, const char* key, const E (&values)[N]) {
  const std::string name = j.at(key).get<std::string>();
  for (E v : values) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorCode::kCorrupt, std::string("bad ") + key + " '" + name + "' in state file");
}

std::optional<Timestamp> optional_ts(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<Timestamp>();
}

json optional_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

Alert alert_from_json(const json& j) {
  Alert a;
  a.alert_id = j.at("alert_id").get<std::string>();
  a.kind = enum_field(j, "kind",
                      {AlertKind::kOffline, AlertKind::kUnderperformance, AlertKind::kFleetDeviation,
                       AlertKind::kInverterDropout, AlertKind::kLowPerformanceRatio});
  a.subject_kind = enum_field(j, "subject_kind", {SubjectKind::kPanel, SubjectKind::kSite});
  a.subject_id = j.at("subject_id").get<std::string>();
  a.raised_ts = j.at("raised_ts").get<Timestamp>();
  a.cleared_ts = optional_ts(j.at("cleared_ts"));
  a.severity = enum_field(j, "severity", {Severity::kWarning, Severity::kCritical});
  a.acknowledged = j.at("acknowledged").get<bool>();
  a.detail = j.at("detail").get<std::string>();
  return a;
}

Command command_from_json(const json& j) {
  Command c;
  c.command_id = j.at("command_id").get<std::string>();
  c.panel_id = j.at("panel_id").get<std::string>();
  c.action = enum_field(j, "action",
                        {CommandAction::kEnable, CommandAction::kDisable, CommandAction::kSetDerate});
  if (!j.at("derate").is_null()) c.derate = j.at("derate").get<double>();
  c.issued_ts = j.at("issued_ts").get<Timestamp>();
  c.state = enum_field(j, "state",
                       {CommandState::kQueued, CommandState::kDelivered, CommandState::kApplied});
  return c;
}

// Readers see either the old file or the new one.
void replace_file(const fs::path& path, const std::string& content, bool sync) {
  const fs::path tmp = path.string() + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  bool ok = std::fwrite(content.data(), 1, content.size(), f) == content.size();
  ok = std::fflush(f) == 0 && ok;
  if (sync) ok = ::fsync(fileno(f)) == 0 && ok;
  ok = std::fclose(f) == 0 && ok;
  std::error_code ec;
  if (ok) fs::rename(tmp, path, ec);
  if (!ok || ec) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

// --- EventBus ------------------------------------------------------------------

std::optional<EventBus::Event> EventBus::Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [this] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return std::nullopt;
  Event e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

void EventBus::Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::uint64_t EventBus::Subscription::overflowed() const {
  std::lock_guard lock(mu_);
  return overflowed_;
}

void EventBus::Subscription::push(const Event& e) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= kMaxQueued) {
      queue_.pop_front();
      ++overflowed_;
    }
    queue_.push_back(e);
  }
  cv_.notify_one();
}

std::shared_ptr<EventBus::Subscription> EventBus::subscribe() {
  auto sub = std::make_shared<Subscription>();
  std::lock_guard lock(mu_);
  subs_.push_back(sub);
  return sub;
}

void EventBus::publish(std::string type, std::string data) {
  std::lock_guard lock(mu_);
  const Event e{next_id_++, std::move(type), std::move(data)};
  std::erase_if(subs_, [](const auto& w) { return w.expired(); });
  for (const auto& w : subs_) {
    if (auto s = w.lock()) s->push(e);
  }
}

std::size_t EventBus::subscriber_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(subs_.begin(), subs_.end(), [](const auto& w) { return !w.expired(); }));
}

// --- MonitorService --------------------------------------------------------------

MonitorService::MonitorService(Fleet fleet, ServerConfig config, std::filesystem::path data_dir)
    : fleet_(std::move(fleet)),
      config_(std::move(config)),
      watchdog_(fleet_, config_.detectors, {config_.sample_interval_s, config_.ambient_c}),
      controls_(fleet_.panel_count()),
      panel_owner_(fleet_.panel_count()) {
  StoreOptions opts;
  opts.data_dir = std::move(data_dir);
  opts.sample_interval_s = config_.sample_interval_s;
  opts.fsync = config_.fsync;
  opts.raw_retention_s = config_.raw_retention_s;
  store_ = std::make_unique<TsStore>(fleet_, opts);
  for (std::size_t i = 0; i < fleet_.panel_count(); ++i) {
    controls_[i].status = fleet_.panels()[i].status;
  }
  if (!opts.data_dir.empty()) {
    state_path_ = opts.data_dir / "state.json";
    load_state();
  }
  if (config_.clock == ClockMode::kData) {
    if (auto ts = store_->max_ts()) {
      const std::int64_t slot = floor_div(*ts, config_.detectors.sweep_interval_s);
      if (!last_sweep_slot_ || slot > *last_sweep_slot_) sweep(*ts);
    }
  }
}

void MonitorService::load_state() {
  std::error_code ec;
  if (!fs::exists(state_path_, ec)) return;
  std::ifstream in(state_path_, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + state_path_.string());
  try {
    const json j = json::parse(in);
    if (j.at("version").get<int>() != kStateVersion) {
      throw Error(ErrorCode::kCorrupt, "unsupported state file version");
    }
    WatchdogState ws;
    const json& w = j.at("watchdog");
    for (const auto& a : w.at("alerts")) ws.alerts.push_back(alert_from_json(a));
    ws.next_alert_id = w.at("next_alert_id").get<std::uint64_t>();
    for (const auto& f : w.at("flagged_since")) ws.flagged_since.push_back(optional_ts(f));
    for (const auto& f : w.at("pr_since")) ws.pr_since.push_back(optional_ts(f));
    ws.seen_derate = w.at("seen_derate").get<std::vector<double>>();
    ws.last_pr_hour = optional_ts(w.at("last_pr_hour"));
    watchdog_.restore(std::move(ws));

    const json& controls = j.at("controls");
    if (controls.size() != controls_.size()) {
      throw Error(ErrorCode::kCorrupt, "state file is for a different fleet");
    }
    for (std::size_t i = 0; i < controls_.size(); ++i) {
      controls_[i].status =
          enum_field(controls[i], "status", {PanelStatus::kActive, PanelStatus::kDisabled});
      controls_[i].derate = controls[i].at("derate").get<double>();
    }
    for (const auto& c : j.at("commands")) {
      Command cmd = command_from_json(c);
      if (!fleet_.panel_index(cmd.panel_id)) {
        throw Error(ErrorCode::kCorrupt, "state file names unknown panel " + cmd.panel_id);
      }
      command_by_id_.emplace(cmd.command_id, commands_.size());
      commands_.push_back(std::move(cmd));
    }
    last_sweep_slot_ = optional_ts(j.at("last_sweep_slot"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorrupt, state_path_.string() + ": " + e.what());
  }
}

void MonitorService::save_state() {
  if (state_path_.empty()) return;
  std::lock_guard writer(writer_mu_);
  save_state_locked();
}

void MonitorService::save_state_locked() {
  if (state_path_.empty()) return;
  const WatchdogState ws = watchdog_.state();
  json alerts = json::array();
  for (const auto& a : ws.alerts) alerts.push_back(to_json(a));
  json flagged = json::array();
  for (const auto& f : ws.flagged_since) flagged.push_back(optional_json(f));
  json pr_since = json::array();
  for (const auto& f : ws.pr_since) pr_since.push_back(optional_json(f));
  json j = {{"version", kStateVersion},
            {"last_sweep_slot", optional_json(last_sweep_slot_)},
            {"watchdog",
             {{"next_alert_id", ws.next_alert_id},
              {"last_pr_hour", optional_json(ws.last_pr_hour)},
              {"flagged_since", std::move(flagged)},
              {"pr_since", std::move(pr_since)},
              {"seen_derate", ws.seen_derate},
              {"alerts", std::move(alerts)}}}};
  {
    std::lock_guard lock(state_mu_);
    json controls = json::array();
    for (const auto& c : controls_) {
      controls.push_back({{"status", to_string(c.status)}, {"derate", c.derate}});
    }
    json commands = json::array();
    for (const auto& c : commands_) commands.push_back(to_json(c));
    j["controls"] = std::move(controls);
    j["commands"] = std::move(commands);
  }
  replace_file(state_path_, j.dump() + "\n", config_.fsync);
}

std::vector<std::pair<std::string, std::uint64_t>> MonitorService::high_water_marks() const {
  return store_->high_water_marks();
}

IngestOutcome MonitorService::ingest(std::string_view logger_id,
                                     const std::vector<PanelReading>& readings) {
  std::lock_guard writer(writer_mu_);
  const auto results = store_->append_batch(readings);
  IngestOutcome out;
  for (auto r : results) (r == AppendResult::kStored ? out.stored : out.duplicates) += 1;
  {
    std::lock_guard lock(state_mu_);
    for (const auto& r : readings) {
      if (auto idx = fleet_.panel_index(r.panel_id)) panel_owner_[*idx] = std::string(logger_id);
    }
  }
  if (config_.clock == ClockMode::kData) {
    if (auto ts = store_->max_ts()) {
      const std::int64_t slot = floor_div(*ts, config_.detectors.sweep_interval_s);
      if (!last_sweep_slot_ || slot > *last_sweep_slot_) sweep_locked(*ts);
    }
  }
  return out;
}

std::vector<Command> MonitorService::deliver_commands(std::string_view logger_id) {
  std::vector<Command> out;
  {
    std::lock_guard lock(state_mu_);
    for (auto& c : commands_) {
      if (c.state != CommandState::kQueued) continue;
      const auto idx = fleet_.panel_index(c.panel_id);
      if (!idx || panel_owner_[*idx] != logger_id) continue;
      c.state = CommandState::kDelivered;
      out.push_back(c);
    }
  }
  if (!out.empty()) save_state();
  return out;
}

bool MonitorService::command_applied(std::string_view command_id) {
  {
    std::lock_guard lock(state_mu_);
    auto it = command_by_id_.find(command_id);
    if (it == command_by_id_.end()) return false;
    Command& c = commands_[it->second];
    if (c.state == CommandState::kApplied) return true;
    if (c.state != CommandState::kDelivered) return false;
    c.state = CommandState::kApplied;
    PanelControl& ctl = controls_[*fleet_.panel_index(c.panel_id)];
    switch (c.action) {
      case CommandAction::kEnable: ctl.status = PanelStatus::kActive; break;
      case CommandAction::kDisable: ctl.status = PanelStatus::kDisabled; break;
      case CommandAction::kSetDerate: ctl.derate = c.derate.value_or(1.0); break;
    }
  }
  save_state();
  return true;
}

void MonitorService::session_opened() {
  std::lock_guard lock(state_mu_);
  ++sessions_;
}

void MonitorService::session_closed() {
  std::lock_guard lock(state_mu_);
  if (sessions_ > 0) --sessions_;
}

std::size_t MonitorService::sessions() const {
  std::lock_guard lock(state_mu_);
  return sessions_;
}

Command MonitorService::queue_command(std::string_view panel_id, CommandAction action,
                                      std::optional<double> derate) {
  if (!fleet_.panel_index(panel_id)) {
    throw Error(ErrorCode::kUnknownPanel, "unknown panel " + std::string(panel_id));
  }
  if (action == CommandAction::kSetDerate) {
    if (!derate || !(*derate > 0 && *derate <= 1)) {
      throw Error(ErrorCode::kBadAction, "set_derate requires derate in (0, 1]");
    }
  } else if (derate) {
    throw Error(ErrorCode::kBadAction, "derate only applies to set_derate");
  }
  const Timestamp issued = now();
  Command c;
  {
    std::lock_guard lock(state_mu_);
    char id[24];
    std::snprintf(id, sizeof id, "C%06zu", commands_.size() + 1);
    c = Command{id, std::string(panel_id), action, derate, issued, CommandState::kQueued};
    command_by_id_.emplace(c.command_id, commands_.size());
    commands_.push_back(c);
  }
  save_state();
  return c;
}

std::optional<Command> MonitorService::command(std::string_view command_id) const {
  std::lock_guard lock(state_mu_);
  auto it = command_by_id_.find(command_id);
  if (it == command_by_id_.end()) return std::nullopt;
  return commands_[it->second];
}

Alert MonitorService::ack_alert(std::string_view alert_id) {
  auto t = watchdog_.alerts().ack(alert_id, now());
  save_state();
  publish_transition(t);
  return t.alert;
}

std::vector<Alert> MonitorService::alerts(std::optional<bool> open) const {
  return watchdog_.alerts().list(open);
}

Timestamp MonitorService::now() const {
  if (config_.clock == ClockMode::kWall) {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
  return store_->max_ts().value_or(0);
}

std::vector<AlertTransition> MonitorService::sweep(Timestamp now) {
  std::lock_guard writer(writer_mu_);
  return sweep_locked(now);
}

void MonitorService::tick() { sweep(now()); }

std::vector<AlertTransition> MonitorService::sweep_locked(Timestamp now) {
  last_sweep_slot_ = floor_div(now, config_.detectors.sweep_interval_s);
  std::vector<PanelControl> controls;
  {
    std::lock_guard lock(state_mu_);
    controls = controls_;
  }
  auto transitions = watchdog_.sweep(*store_, controls, now);
  save_state_locked();
  for (const auto& t : transitions) publish_transition(t);

  nlohmann::json sites = nlohmann::json::array();
  for (std::size_t s = 0; s < fleet_.site_count(); ++s) {
    double power = 0;
    for (std::size_t p : fleet_.panels_of_site(s)) {
      if (auto r = fresh_reading(p, now)) power += r->watts;
    }
    sites.push_back({{"site_id", fleet_.sites()[s].site_id}, {"power_w", power}});
  }
  events_.publish("reading_agg", nlohmann::json{{"ts", now}, {"sites", sites}}.dump());
  return transitions;
}

void MonitorService::publish_transition(const AlertTransition& t) {
  events_.publish("alert", to_json(t).dump());
}

PanelControl MonitorService::control(std::size_t panel_idx) const {
  std::lock_guard lock(state_mu_);
  return controls_[panel_idx];
}

std::optional<PanelReading> MonitorService::fresh_reading(std::size_t panel_idx,
                                                          Timestamp now) const {
  auto r = store_->latest(panel_idx);
  if (!r || now - r->ts > config_.detectors.offline_timeout_s) return std::nullopt;
  return r;
}

}  // namespace solarmon
