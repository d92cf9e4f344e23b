#include <doctest.h>
#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "solarmon/net.hpp"
#include "solarmon/service.hpp"
#include "solarmon/sim_farm.hpp"
#include "solarmon/web_api.hpp"
#include "test_support.hpp"

using namespace solarmon;
using nlohmann::json;
using testsupport::kDay0;
using testsupport::kNoon0;
using testsupport::small_fleet;

namespace {

ServerConfig mem_config() {
  ServerConfig c;
  c.fsync = false;
  return c;
}

// Service fed from a farm until `to`, sweeping as data arrives.
struct Fixture {
  explicit Fixture(Fleet fleet, std::vector<FaultSpec> faults = {}, Timestamp to = kNoon0)
      : svc(fleet, mem_config(), {}), api(svc), farm(fleet, [&] {
          SimConfig c;
          c.start_ts = kDay0;
          c.faults = std::move(faults);
          return c;
        }()) {
    run(kDay0, to);
  }
  void run(Timestamp from, Timestamp to) {
    for (Timestamp t = from; t < to; t += 300) svc.ingest("L", farm.step(t));
  }
  json get(const std::string& path, const QueryParams& q = {}, int want = 200) {
    const auto r = api.handle("GET", path, q, "");
    CHECK(r.status == want);
    return json::parse(r.body);
  }
  json post(const std::string& path, const std::string& body, int want) {
    const auto r = api.handle("POST", path, {}, body);
    CHECK(r.status == want);
    return json::parse(r.body);
  }

  MonitorService svc;
  WebApi api;
  SolarFarm farm;
};

QueryParams range(Timestamp from, Timestamp to, std::string res = "") {
  QueryParams q{{"from", std::to_string(from)}, {"to", std::to_string(to)}};
  if (!res.empty()) q["res"] = res;
  return q;
}

}  // namespace

TEST_CASE("health") {
  MonitorService svc(small_fleet(1, 1000), mem_config(), {});
  WebApi api(svc);
  auto h = json::parse(api.handle("GET", "/api/v1/health", {}, "").body);
  CHECK(h["status"] == "ok");
  CHECK(h["store_readings"] == 0);
  SimConfig c;
  SolarFarm farm(svc.fleet(), c);
  svc.ingest("L", farm.step(kNoon0));
  svc.session_opened();
  h = json::parse(api.handle("GET", "/api/v1/health", {}, "").body);
  CHECK(h["store_readings"] == 1000);
  CHECK(h["ingest_sessions"] == 1);
}

TEST_CASE("fleet summary") {
  SUBCASE("empty fleet") {
    MonitorService svc(Fleet{}, mem_config(), {});
    WebApi api(svc);
    CHECK(json::parse(api.handle("GET", "/api/v1/fleet", {}, "").body) == json{{"sites", json::array()}});
  }
  SUBCASE("healthy") {
    Fixture fx(small_fleet(2, 3));
    const auto f = fx.get("/api/v1/fleet");
    REQUIRE(f["sites"].size() == 2);
    for (const auto& s : f["sites"]) {
      CHECK(s["panels_total"] == 3);
      CHECK(s["panels_active"] == 3);
      CHECK(s["panels_offline"] == 0);
      CHECK(s["open_alerts"] == 0);
      CHECK(s["power_now_w"].get<double>() > 500);
      CHECK(s["energy_today_wh"].get<double>() > 0);
    }
    CHECK(f["sites"][0]["name"].is_string());
  }
  SUBCASE("dead panel") {
    Fixture fx(small_fleet(2, 3), {[] {
                 FaultSpec f;
                 f.subject_id = "S02-P0002";
                 f.onset_ts = kNoon0 - 3 * 3600;
                 return f;
               }()});
    const auto f = fx.get("/api/v1/fleet");
    CHECK(f["sites"][0]["panels_offline"] == 0);
    CHECK(f["sites"][1]["panels_offline"] == 1);
    CHECK(f["sites"][1]["open_alerts"] == 1);
  }
}

TEST_CASE("panel detail") {
  Fixture fx(small_fleet(1, 3));
  auto p = fx.get("/api/v1/panels/S01-P0002");
  CHECK(p["panel_id"] == "S01-P0002");
  CHECK(p["site_id"] == "S01");
  CHECK(p["status"] == "active");
  CHECK(p["rated_watts_peak"] == 300.0);
  CHECK(p["latest"]["ts"] == kNoon0 - 300);
  CHECK(p["open_alerts"].is_array());
  CHECK(p["energy_today_wh"].get<double>() > 0);

  auto e = fx.get("/api/v1/panels/nope", {}, 404);
  CHECK(e["code"] == "E_UNKNOWN_PANEL");

  fx.post("/api/v1/panels/S01-P0002/commands", R"({"action":"disable"})", 201);
  fx.svc.deliver_commands("L");
  fx.svc.command_applied("C000001");
  p = fx.get("/api/v1/panels/S01-P0002");
  CHECK(p["status"] == "disabled");
  CHECK(p["power_w"] == 0.0);
}

TEST_CASE("series") {
  Fixture fx(small_fleet(1, 2), {}, kDay0 + 86400 + 300);
  const auto day = fx.get("/api/v1/panels/S01-P0001/series", range(kDay0, kDay0 + 86400, "day"));
  REQUIRE(day.size() == 1);
  const auto rolled = fx.svc.store().rollup(SubjectKind::kPanel, "S01-P0001", Resolution::kDay, kDay0, kDay0 + 86400);
  CHECK(day[0]["energy_wh"].get<double>() == rolled[0].energy_wh);
  CHECK(day[0]["start_ts"] == kDay0);

  const auto hours = fx.get("/api/v1/panels/S01-P0001/series", range(kDay0, kDay0 + 86400, "hour"));
  CHECK(hours.size() == 24);

  const auto raw = fx.get("/api/v1/panels/S01-P0001/series", range(kNoon0, kNoon0 + 900));
  REQUIRE(raw.size() == 3);
  const auto stored = fx.svc.store().query_raw("S01-P0001", kNoon0, kNoon0 + 900);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(raw[i]["ts"] == stored[i].ts);
    CHECK(raw[i]["watts"].get<double>() == stored[i].watts);
  }
  CHECK(fx.get("/api/v1/panels/S01-P0001/series", range(1, 2)) == json::array());

  CHECK(fx.get("/api/v1/panels/S01-P0001/series", range(10, 5), 400)["code"] == "E_BAD_RANGE");
  CHECK(fx.get("/api/v1/panels/S01-P0001/series", range(0, 367 * 86400), 400)["code"] == "E_BAD_RANGE");
  CHECK(fx.get("/api/v1/panels/S01-P0001/series", {{"from", "x"}, {"to", "5"}}, 400)["code"] == "E_BAD_RANGE");
  CHECK(fx.get("/api/v1/panels/S01-P0001/series", {{"from", "1"}}, 400)["code"] == "E_BAD_RANGE");
  CHECK(fx.get("/api/v1/panels/S01-P0001/series", range(1, 5, "week"), 400)["code"] == "E_BAD_RANGE");
  CHECK(fx.get("/api/v1/panels/ghost/series", range(1, 5), 404)["code"] == "E_UNKNOWN_PANEL");
}

TEST_CASE("site yield") {
  Fixture fx(small_fleet(1, 3), {}, kDay0 + 86400 + 300);
  const auto week = fx.get("/api/v1/sites/S01/yield", range(kDay0, kDay0 + 7 * 86400, "day"));
  REQUIRE(week.size() == 7);
  CHECK(week[0]["energy_wh"].get<double>() > 0);
  for (std::size_t i = 2; i < 7; ++i) {
    CHECK(week[i]["energy_wh"] == 0.0);
    CHECK(week[i]["samples"] == 0);
  }
  double members = 0;
  for (const auto* id : {"S01-P0001", "S01-P0002", "S01-P0003"}) {
    members += fx.get(std::string("/api/v1/panels/") + id + "/series", range(kDay0, kDay0 + 86400, "day"))[0]["energy_wh"].get<double>();
  }
  CHECK(week[0]["energy_wh"].get<double>() == doctest::Approx(members).epsilon(1e-12));
  CHECK(fx.get("/api/v1/sites/S01/yield", range(kDay0, kDay0 + 86400)).size() == 1);
  CHECK(fx.get("/api/v1/sites/S09/yield", range(kDay0, kDay0 + 86400), 404)["code"] == "E_NOT_FOUND");
}

TEST_CASE("alerts and ack") {
  Fixture fx(small_fleet(1, 4));
  CHECK(fx.get("/api/v1/alerts") == json::array());
  Fixture dead(small_fleet(1, 4), {[] {
                 FaultSpec f;
                 f.subject_id = "S01-P0004";
                 f.onset_ts = kNoon0 - 7200;
                 return f;
               }()});
  const auto open = dead.get("/api/v1/alerts", {{"open", "true"}});
  REQUIRE(open.size() == 1);
  CHECK(open[0]["kind"] == "offline");
  CHECK(open[0]["open"] == true);
  CHECK(open[0]["cleared_ts"].is_null());
  CHECK(dead.get("/api/v1/alerts", {{"open", "false"}}) == json::array());
  dead.get("/api/v1/alerts", {{"open", "maybe"}}, 400);

  const std::string id = open[0]["alert_id"];
  const auto acked = dead.post("/api/v1/alerts/" + id + "/ack", "", 200);
  CHECK(acked["acknowledged"] == true);
  CHECK(dead.post("/api/v1/alerts/" + id + "/ack", "", 200) == acked);
  CHECK(dead.get("/api/v1/alerts")[0]["acknowledged"] == true);
  CHECK(dead.post("/api/v1/alerts/A-nope/ack", "", 404)["code"] == "E_NOT_FOUND");
}

TEST_CASE("commands") {
  Fixture fx(small_fleet(1, 2));
  const auto c = fx.post("/api/v1/panels/S01-P0001/commands", R"({"action":"set_derate","derate":0.5})", 201);
  CHECK(c["state"] == "queued");
  CHECK(c["derate"] == 0.5);
  const std::string id = c["command_id"];
  CHECK(fx.get("/api/v1/commands/" + id)["state"] == "queued");
  fx.svc.deliver_commands("L");
  CHECK(fx.get("/api/v1/commands/" + id)["state"] == "delivered");
  fx.svc.command_applied(id);
  CHECK(fx.get("/api/v1/commands/" + id)["state"] == "applied");

  CHECK(fx.post("/api/v1/panels/S01-P0001/commands", R"({"action":"set_derate"})", 400)["code"] == "E_BAD_ACTION");
  CHECK(fx.post("/api/v1/panels/S01-P0001/commands", R"({"action":"reboot"})", 400)["code"] == "E_BAD_ACTION");
  CHECK(fx.post("/api/v1/panels/S01-P0001/commands", "not json", 400)["code"] == "E_BAD_ACTION");
  CHECK(fx.post("/api/v1/panels/S01-P0001/commands", R"({"action":"enable","derate":0.3})", 400)["code"] == "E_BAD_ACTION");
  CHECK(fx.post("/api/v1/panels/ghost/commands", R"({"action":"enable"})", 404)["code"] == "E_UNKNOWN_PANEL");
  CHECK(fx.get("/api/v1/commands/C424242", {}, 404)["code"] == "E_NOT_FOUND");
  // Enabling an enabled panel is accepted.
  fx.post("/api/v1/panels/S01-P0002/commands", R"({"action":"enable"})", 201);
}

TEST_CASE("routing") {
  Fixture fx(small_fleet(1, 1), {}, kDay0 + 300);
  CHECK(fx.api.handle("GET", "/api/v1/nothing", {}, "").status == 404);
  CHECK(fx.api.handle("GET", "/elsewhere", {}, "").status == 404);
  CHECK(fx.api.handle("POST", "/api/v1/fleet", {}, "").status == 405);
  CHECK(fx.api.handle("DELETE", "/api/v1/panels/S01-P0001", {}, "").status == 405);
}

TEST_CASE("reads are pure views") {
  Fixture fx(small_fleet(1, 3), {[] {
               FaultSpec f;
               f.subject_id = "S01-P0001";
               f.onset_ts = kNoon0 - 7200;
               return f;
             }()});
  const auto snapshot = [&] {
    return fx.get("/api/v1/fleet").dump() + fx.get("/api/v1/alerts").dump() +
           fx.get("/api/v1/panels/S01-P0002").dump() + fx.get("/api/v1/health").dump();
  };
  const auto before = snapshot();
  for (int i = 0; i < 5; ++i) {
    fx.get("/api/v1/sites/S01/yield", range(kDay0, kDay0 + 86400, "hour"));
    fx.get("/api/v1/panels/S01-P0003/series", range(kDay0, kDay0 + 86400));
  }
  CHECK(snapshot() == before);
}

TEST_CASE("event bus: subscribers see identical sequences") {
  MonitorService svc(small_fleet(1, 3), mem_config(), {});
  auto a = svc.events().subscribe();
  auto b = svc.events().subscribe();
  SimConfig c;
  c.start_ts = kDay0;
  c.faults = {[] {
    FaultSpec f;
    f.subject_id = "S01-P0003";
    f.onset_ts = kNoon0;
    return f;
  }()};
  SolarFarm farm(svc.fleet(), c);
  for (Timestamp t = kDay0; t < kNoon0 + 7200; t += 300) svc.ingest("L", farm.step(t));
  const auto drain = [](EventBus::Subscription& s) {
    std::vector<std::string> out;
    while (auto e = s.pop(std::chrono::milliseconds(0))) out.push_back(std::to_string(e->id) + e->type + e->data);
    return out;
  };
  const auto ea = drain(*a);
  const auto eb = drain(*b);
  CHECK(ea == eb);
  CHECK(ea.size() > 100);
  bool alert_seen = false;
  for (const auto& e : ea) alert_seen = alert_seen || e.find("alert{") != std::string::npos;
  CHECK(alert_seen);
  b.reset();
  CHECK(svc.events().subscriber_count() == 1);
}

TEST_CASE("http server") {
  MonitorService svc(small_fleet(1, 2), mem_config(), {});
  HttpServer http(svc);
  http.bind({"127.0.0.1", 0});
  http.start();
  httplib::Client cli("127.0.0.1", http.port());
  cli.set_read_timeout(5, 0);

  auto r = cli.Get("/api/v1/health");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["status"] == "ok");
  r = cli.Post("/api/v1/panels/S01-P0001/commands", R"({"action":"disable"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  r = cli.Get("/api/v1/panels/S01-P0001/series?from=5&to=1");
  REQUIRE(r);
  CHECK(r->status == 400);

  // Two SSE subscribers receive the same events.
  std::string got[2];
  std::vector<std::thread> readers;
  for (int i = 0; i < 2; ++i) {
    readers.emplace_back([&, i] {
      httplib::Client sc("127.0.0.1", http.port());
      sc.set_read_timeout(10, 0);
      sc.Get("/api/v1/stream", [&](const char* data, size_t n) {
        got[i].append(data, n);
        return got[i].find("event: reading_agg") == std::string::npos ||
               got[i].find("\n\n", got[i].find("event: reading_agg")) == std::string::npos;
      });
    });
  }
  while (svc.events().subscriber_count() < 2) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  SimConfig c;
  c.start_ts = kNoon0;
  SolarFarm farm(svc.fleet(), c);
  svc.ingest("L", farm.step(kNoon0));
  for (auto& t : readers) t.join();
  const auto event_of = [](const std::string& s) {
    const auto p = s.find("id: ");
    return s.substr(p, s.find("\n\n", p) - p);
  };
  CHECK(event_of(got[0]) == event_of(got[1]));
  CHECK(got[0].find("data: {\"sites\":[") != std::string::npos);
  http.stop();
}

TEST_CASE("http bind conflict") {
  MonitorService svc(small_fleet(1, 1), mem_config(), {});
  auto taken = TcpListener::bind({"127.0.0.1", 0});
  HttpServer http(svc);
  CHECK_THROWS_AS(http.bind({"127.0.0.1", taken.port()}), Error);
}

TEST_CASE("service state survives a restart") {
  testsupport::TempDir dir;
  const Fleet fleet = small_fleet(1, 4);
  SimConfig sc;
  sc.start_ts = kDay0;
  sc.faults = {[] {
    FaultSpec f;
    f.subject_id = "S01-P0004";
    f.onset_ts = kNoon0 - 7200;
    return f;
  }()};
  SolarFarm farm(fleet, sc);
  std::vector<Alert> before;
  {
    MonitorService svc(fleet, mem_config(), dir.path());
    for (Timestamp t = kDay0; t < kNoon0; t += 300) svc.ingest("L", farm.step(t));
    REQUIRE(svc.alerts(true).size() == 1);
    svc.ack_alert(svc.alerts(true)[0].alert_id);
    svc.queue_command("S01-P0002", CommandAction::kDisable, std::nullopt);
    REQUIRE(svc.deliver_commands("L").size() == 1);
    REQUIRE(svc.command_applied("C000001"));
    before = svc.alerts(std::nullopt);
  }
  MonitorService svc(fleet, mem_config(), dir.path());
  CHECK(svc.alerts(std::nullopt) == before);
  CHECK(svc.alerts(true)[0].acknowledged);
  CHECK(svc.command("C000001")->state == CommandState::kApplied);
  CHECK(svc.control(1).status == PanelStatus::kDisabled);
  CHECK(svc.queue_command("S01-P0003", CommandAction::kEnable, std::nullopt).command_id == "C000002");
  // Sweeping on stays deduplicated.
  for (Timestamp t = kNoon0; t < kNoon0 + 3600; t += 300) svc.ingest("L", farm.step(t));
  CHECK(svc.alerts(true).size() == 1);
}

TEST_CASE("damaged or foreign state files are refused") {
  const auto code_of = [](const Fleet& fleet, const std::filesystem::path& dir) {
    try {
      MonitorService svc(fleet, mem_config(), dir);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  testsupport::TempDir dir;
  { MonitorService svc(small_fleet(1, 4), mem_config(), dir.path()); svc.sweep(kNoon0); }
  CHECK(code_of(small_fleet(1, 5), dir.path()) == ErrorCode::kCorrupt);
  std::ofstream(dir.path() / "state.json") << "{\"version\":1,";
  CHECK(code_of(small_fleet(1, 4), dir.path()) == ErrorCode::kCorrupt);
}
