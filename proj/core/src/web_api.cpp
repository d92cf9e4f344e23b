#include "solarmon/web_api.hpp"

#include <httplib.h>

#include <atomic>
#include <charconv>
#include <thread>

#include "json_codec.hpp"

namespace solarmon {

using nlohmann::json;

namespace {

ApiResponse json_response(int status, const json& j) { return {status, "application/json", j.dump()}; }

std::vector<std::string_view> path_segments(std::string_view path) {
  std::vector<std::string_view> out;
  while (!path.empty()) {
    const auto slash = path.find('/');
    const auto seg = path.substr(0, slash);
    if (!seg.empty()) out.push_back(seg);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return out;
}

std::optional<std::int64_t> parse_i64(std::string_view s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end || s.empty()) return std::nullopt;
  return v;
}

struct Window {
  Timestamp from = 0;
  Timestamp to = 0;
};

// from/to required, from <= to, at most 366 days.
std::optional<ApiResponse> parse_window(const QueryParams& q, Window& w) {
  const auto f = q.find("from");
  const auto t = q.find("to");
  if (f == q.end() || t == q.end()) {
    return api_error(400, ErrorCode::kBadRange, "from and to are required");
  }
  const auto from = parse_i64(f->second);
  const auto to = parse_i64(t->second);
  if (!from || !to) return api_error(400, ErrorCode::kBadRange, "from and to must be integers");
  if (*from > *to) return api_error(400, ErrorCode::kBadRange, "from must not exceed to");
  if (*to - *from > WebApi::kMaxRangeS) {
    return api_error(400, ErrorCode::kBadRange, "range exceeds 366 days");
  }
  w = {*from, *to};
  return std::nullopt;
}

json bucket_list(const std::vector<EnergyBucket>& buckets) {
  json out = json::array();
  for (const auto& b : buckets) out.push_back(to_json(b));
  return out;
}

}  // namespace

ApiResponse api_error(int status, ErrorCode code, std::string_view message) {
  return json_response(status, {{"code", to_string(code)}, {"message", message}});
}

ApiResponse WebApi::handle(std::string_view method, std::string_view path,
                           const QueryParams& query, std::string_view body) {
  const auto seg = path_segments(path);
  if (seg.size() < 3 || seg[0] != "api" || seg[1] != "v1") {
    return api_error(404, ErrorCode::kNotFound, "no such resource");
  }
  const bool get = method == "GET";
  const bool post = method == "POST";
  const std::size_t n = seg.size();
  const auto method_not_allowed = [] {
    return api_error(405, ErrorCode::kInvalidArgument, "method not allowed");
  };
  try {
    if (seg[2] == "health" && n == 3) return get ? health() : method_not_allowed();
    if (seg[2] == "fleet" && n == 3) return get ? fleet() : method_not_allowed();
    if (seg[2] == "alerts") {
      if (n == 3) return get ? alerts(query) : method_not_allowed();
      if (n == 5 && seg[4] == "ack") return post ? ack(seg[3]) : method_not_allowed();
    }
    if (seg[2] == "panels" && n >= 4) {
      if (n == 4) return get ? panel(seg[3]) : method_not_allowed();
      if (n == 5 && seg[4] == "series") return get ? series(seg[3], query) : method_not_allowed();
      if (n == 5 && seg[4] == "commands") {
        return post ? post_command(seg[3], body) : method_not_allowed();
      }
    }
    if (seg[2] == "sites" && n == 5 && seg[4] == "yield") {
      return get ? site_yield(seg[3], query) : method_not_allowed();
    }
    if (seg[2] == "commands" && n == 4) return get ? command(seg[3]) : method_not_allowed();
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::kNotFound || e.code() == ErrorCode::kUnknownPanel
                           ? 404
                           : e.code() == ErrorCode::kIo ? 500 : 400;
    return api_error(status, e.code(), e.what());
  }
  return api_error(404, ErrorCode::kNotFound, "no such resource");
}

ApiResponse WebApi::health() const {
  return json_response(200, {{"status", "ok"},
                             {"ingest_sessions", service_.sessions()},
                             {"store_readings", service_.store().reading_count()}});
}

ApiResponse WebApi::fleet() const {
  const Fleet& fl = service_.fleet();
  const TsStore& store = service_.store();
  const Timestamp now = service_.now();
  const auto& cfg = service_.config().detectors;

  std::vector<std::size_t> open_by_site(fl.site_count(), 0);
  for (const auto& a : service_.alerts(true)) {
    if (a.subject_kind == SubjectKind::kSite) {
      if (auto s = fl.site_index(a.subject_id)) ++open_by_site[*s];
    } else if (auto p = fl.panel_index(a.subject_id)) {
      ++open_by_site[fl.site_of_panel(*p)];
    }
  }

  json sites = json::array();
  for (std::size_t s = 0; s < fl.site_count(); ++s) {
    const SiteSpec& site = fl.sites()[s];
    std::size_t active = 0, offline = 0;
    double power = 0, energy = 0;
    const Timestamp day = bucket_start(now, Resolution::kDay, site.utc_offset_min);
    for (std::size_t p : fl.panels_of_site(s)) {
      const auto latest = store.latest(p);
      if (service_.control(p).status == PanelStatus::kActive) {
        ++active;
        if (check_offline(PanelStatus::kActive, latest ? std::optional(latest->ts) : std::nullopt,
                          now, cfg)) {
          ++offline;
        }
      }
      if (auto r = service_.fresh_reading(p, now)) power += r->watts;
      energy += store.panel_bucket(p, Resolution::kDay, day).energy_wh;
    }
    sites.push_back({{"site_id", site.site_id},
                     {"name", site.name},
                     {"panels_total", fl.panels_of_site(s).size()},
                     {"panels_active", active},
                     {"panels_offline", offline},
                     {"power_now_w", power},
                     {"energy_today_wh", energy},
                     {"open_alerts", open_by_site[s]}});
  }
  return json_response(200, {{"sites", sites}});
}

ApiResponse WebApi::panel(std::string_view id) const {
  const Fleet& fl = service_.fleet();
  const auto idx = fl.panel_index(id);
  if (!idx) return api_error(404, ErrorCode::kUnknownPanel, "unknown panel " + std::string(id));
  const PanelSpec& spec = fl.panels()[*idx];
  const SiteSpec& site = fl.sites()[fl.site_of_panel(*idx)];
  const Timestamp now = service_.now();
  const PanelControl ctl = service_.control(*idx);
  const auto latest = service_.store().latest(*idx);
  const auto fresh = service_.fresh_reading(*idx, now);
  const double power = ctl.status == PanelStatus::kActive && fresh ? fresh->watts : 0.0;

  json open = json::array();
  for (const auto& a : service_.alerts(true)) {
    if (a.subject_kind == SubjectKind::kPanel && a.subject_id == id) open.push_back(to_json(a));
  }
  const Timestamp day = bucket_start(now, Resolution::kDay, site.utc_offset_min);
  return json_response(
      200, {{"panel_id", spec.panel_id},
            {"site_id", spec.site_id},
            {"rated_watts_peak", spec.rated_watts_peak},
            {"tilt_deg", spec.tilt_deg},
            {"azimuth_deg", spec.azimuth_deg},
            {"temp_coeff_per_c", spec.temp_coeff_per_c},
            {"status", to_string(ctl.status)},
            {"derate", ctl.derate},
            {"latest", latest ? to_json(*latest) : json(nullptr)},
            {"power_w", power},
            {"energy_today_wh", service_.store().panel_bucket(*idx, Resolution::kDay, day).energy_wh},
            {"open_alerts", open}});
}

ApiResponse WebApi::series(std::string_view id, const QueryParams& q) const {
  if (!service_.fleet().panel_index(id)) {
    return api_error(404, ErrorCode::kUnknownPanel, "unknown panel " + std::string(id));
  }
  Window w;
  if (auto err = parse_window(q, w)) return *err;
  const auto res_it = q.find("res");
  const std::string_view res = res_it == q.end() ? std::string_view("raw") : res_it->second;
  if (res == "raw") {
    json out = json::array();
    for (const auto& r : service_.store().query_raw(id, w.from, w.to)) {
      out.push_back({{"ts", r.ts}, {"watts", r.watts}});
    }
    return json_response(200, out);
  }
  const auto parsed = parse_resolution(res);
  if (!parsed) return api_error(400, ErrorCode::kBadRange, "res must be raw, hour or day");
  return json_response(
      200, bucket_list(service_.store().rollup(SubjectKind::kPanel, id, *parsed, w.from, w.to)));
}

ApiResponse WebApi::site_yield(std::string_view id, const QueryParams& q) const {
  if (!service_.fleet().site_index(id)) {
    return api_error(404, ErrorCode::kNotFound, "unknown site " + std::string(id));
  }
  Window w;
  if (auto err = parse_window(q, w)) return *err;
  const auto res_it = q.find("res");
  const auto parsed =
      res_it == q.end() ? std::optional(Resolution::kDay) : parse_resolution(res_it->second);
  if (!parsed) return api_error(400, ErrorCode::kBadRange, "res must be hour or day");
  return json_response(
      200, bucket_list(service_.store().rollup(SubjectKind::kSite, id, *parsed, w.from, w.to)));
}

ApiResponse WebApi::alerts(const QueryParams& q) const {
  std::optional<bool> open;
  if (auto it = q.find("open"); it != q.end()) {
    if (it->second == "true") {
      open = true;
    } else if (it->second == "false") {
      open = false;
    } else {
      return api_error(400, ErrorCode::kInvalidArgument, "open must be true or false");
    }
  }
  json out = json::array();
  for (const auto& a : service_.alerts(open)) out.push_back(to_json(a));
  return json_response(200, out);
}

ApiResponse WebApi::ack(std::string_view id) {
  return json_response(200, to_json(service_.ack_alert(id)));
}

ApiResponse WebApi::post_command(std::string_view panel_id, std::string_view body) {
  if (!service_.fleet().panel_index(panel_id)) {
    return api_error(404, ErrorCode::kUnknownPanel, "unknown panel " + std::string(panel_id));
  }
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("action") || !j["action"].is_string()) {
    return api_error(400, ErrorCode::kBadAction, "body must be {action, derate?}");
  }
  const auto action = parse_command_action(j["action"].get<std::string>());
  if (!action) return api_error(400, ErrorCode::kBadAction, "unknown action");
  std::optional<double> derate;
  if (j.contains("derate") && !j["derate"].is_null()) {
    if (!j["derate"].is_number()) return api_error(400, ErrorCode::kBadAction, "derate must be a number");
    derate = j["derate"].get<double>();
  }
  return json_response(201, to_json(service_.queue_command(panel_id, *action, derate)));
}

ApiResponse WebApi::command(std::string_view id) const {
  const auto c = service_.command(id);
  if (!c) return api_error(404, ErrorCode::kNotFound, "unknown command " + std::string(id));
  return json_response(200, to_json(*c));
}

// --- HttpServer ------------------------------------------------------------------

struct HttpServer::Impl {
  MonitorService& service;
  WebApi api;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopping{false};
  int port = -1;

  explicit Impl(MonitorService& s) : service(s), api(s) {}
};

namespace {

void respond(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

QueryParams to_query(const httplib::Request& req) {
  QueryParams q;
  for (const auto& [k, v] : req.params) q.emplace(k, v);
  return q;
}

}  // namespace

HttpServer::HttpServer(MonitorService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Impl* impl = impl_.get();
  srv.new_task_queue = [] { return new httplib::ThreadPool(32); };

  srv.Get("/api/v1/stream", [impl](const httplib::Request&, httplib::Response& res) {
    auto sub = impl->service.events().subscribe();
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [impl, sub](std::size_t, httplib::DataSink& sink) {
          if (impl->stopping) return false;
          std::string chunk;
          if (auto ev = sub->pop(std::chrono::milliseconds(1000))) {
            chunk = "id: " + std::to_string(ev->id) + "\nevent: " + ev->type + "\ndata: " +
                    ev->data + "\n\n";
          } else {
            chunk = ": keepalive\n\n";
          }
          return sink.write(chunk.data(), chunk.size());
        },
        [sub](bool) { sub->close(); });
  });

  const auto dispatch = [impl](const httplib::Request& req, httplib::Response& res) {
    respond(res, impl->api.handle(req.method, req.path, to_query(req), req.body));
  };
  srv.Get("/api/.*", dispatch);
  srv.Post("/api/.*", dispatch);
  srv.Put("/api/.*", dispatch);
  srv.Delete("/api/.*", dispatch);

  if (!static_dir.empty()) srv.set_mount_point("/", static_dir.string());
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::bind(const HostPort& addr) {
  const std::string host = addr.host.empty() ? "0.0.0.0" : addr.host;
  if (addr.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, addr.port)) {
    impl_->port = addr.port;
  }
  if (impl_->port <= 0) {
    throw Error(ErrorCode::kIo, "cannot bind http " + host + ":" + std::to_string(addr.port));
  }
}

std::uint16_t HttpServer::port() const {
  return impl_->port > 0 ? static_cast<std::uint16_t>(impl_->port) : 0;
}

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace solarmon
