#include <doctest.h>

#include <sstream>

#include "solarmon/config.hpp"
#include "solarmon/fleet.hpp"
#include "test_support.hpp"

using namespace solarmon;

TEST_CASE("server config") {
  std::istringstream in(
      "# thresholds\n"
      "offline_timeout_s = 600\n"
      "peer_ratio_threshold = 0.6\n"
      "sustain_s = 900\n"
      "pr_floor = 0.75\n"
      "daylight_gate_w = 20\n"
      "sweep_interval_s = 60\n"
      "clock = wall\n"
      "fsync = false\n"
      "fleet = f.csv\n"
      "sites = /abs/s.csv\n");
  const auto c = parse_server_config(in, "/etc/solarmon");
  CHECK(c.detectors.offline_timeout_s == 600);
  CHECK(c.detectors.peer_ratio_threshold == 0.6);
  CHECK(c.detectors.sustain_s == 900);
  CHECK(c.detectors.pr_floor == 0.75);
  CHECK(c.detectors.daylight_gate_w == 20.0);
  CHECK(c.detectors.sweep_interval_s == 60);
  CHECK(c.clock == ClockMode::kWall);
  CHECK_FALSE(c.fsync);
  CHECK(c.fleet_file == std::filesystem::path("/etc/solarmon/f.csv"));
  CHECK(c.sites_file == std::filesystem::path("/abs/s.csv"));

  const auto rejects = [](const std::string& text) {
    std::istringstream bad(text);
    CHECK_THROWS_AS(parse_server_config(bad), Error);
  };
  rejects("unknown_key = 1\n");
  rejects("pr_floor = 2\n");
  rejects("peer_ratio_threshold = 0\n");
  rejects("clock = lunar\n");
  rejects("offline_timeout_s = soon\n");
  rejects("fsync = maybe\n");
  rejects("no equals sign\n");
}

TEST_CASE("shipped config and fleet load") {
  const std::filesystem::path data(SOLARMON_DATA_DIR);
  const auto c = load_server_config(data / "server.conf");
  CHECK(c.detectors.offline_timeout_s == 900);
  CHECK(c.clock == ClockMode::kData);
  const auto fleet = load_fleet(c.fleet_file, c.sites_file);
  CHECK(fleet.site_count() == 2);
  CHECK(fleet.panel_count() == 20);
  CHECK(fleet.find_panel("S02-P0007")->site_id == "S02");
}

TEST_CASE("fleet csv") {
  std::istringstream sites("site_id,name,latitude_deg,longitude_deg,utc_offset_min\nS1,\"Roof, north\",-18,178,720\n");
  const auto ss = parse_sites(sites);
  REQUIRE(ss.size() == 1);
  CHECK(ss[0].name == "Roof, north");
  std::istringstream panels(
      "panel_id,site_id,rated_watts_peak,tilt_deg,azimuth_deg,temp_coeff_per_c\n"
      "P1,S1,300,15,0,-0.004\n");
  const auto ps = parse_panels(panels);
  REQUIRE(ps.size() == 1);
  Fleet f(ss, ps);
  CHECK(f.panels_of_site(0).size() == 1);

  std::ostringstream out_s, out_p;
  write_sites(out_s, ss);
  write_panels(out_p, ps);
  std::istringstream back_s(out_s.str()), back_p(out_p.str());
  CHECK(parse_sites(back_s) == ss);
  CHECK(parse_panels(back_p) == ps);

  CHECK_THROWS_AS(Fleet(ss, {PanelSpec{"P1", "S9", 300}}), Error);
  CHECK_THROWS_AS(Fleet(ss, {ps[0], ps[0]}), Error);
  std::istringstream bad("panel_id,site_id,rated_watts_peak,tilt_deg,azimuth_deg,temp_coeff_per_c\nP1,S1,abc,1,1,0\n");
  try {
    parse_panels(bad, "fleet.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fleet.csv:2:") != std::string::npos);
  }
}
