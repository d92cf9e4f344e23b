#include <doctest.h>

#include "solarmon/solar.hpp"
#include "test_support.hpp"

using namespace solarmon;
using namespace solarmon::solar;
using doctest::Approx;
using testsupport::Gen;

// Oracle values below were evaluated once with mpmath at 30 digits and with
// the Python calendar module.

TEST_CASE("day_of_year") {
  CHECK(day_of_year(0, 0) == 1);
  CHECK(day_of_year(86400, 0) == 2);
  CHECK(day_of_year(0, -60) == 365);  // 1969-12-31 local
  CHECK(day_of_year(1735646400, 720) == 1);  // 2025-01-01 00:00 at UTC+12
  CHECK(day_of_year(1735646399, 720) == 366);  // local 23:59:59 on 2024-12-31
  CHECK(day_of_year(1735689600 + 365 * 86400 - 1, 0) == 365);
  CHECK(day_of_year(1704067200 + 365 * 86400, 0) == 366);  // 2024-12-31
}

TEST_CASE("solar_declination") {
  CHECK(solar_declination_deg(81) == Approx(0.0).epsilon(1e-9));
  CHECK(solar_declination_deg(172) == Approx(23.4497828468137).epsilon(1e-12));
  CHECK(solar_declination_deg(355) == Approx(-23.4497828468137).epsilon(1e-12));
  for (int n = 1; n <= 366; ++n) {
    const double d = solar_declination_deg(n);
    CHECK(d >= -23.45);
    CHECK(d <= 23.45);
  }
}

TEST_CASE("hour_angle") {
  CHECK(hour_angle_deg(12.0) == Approx(0.0));
  CHECK(hour_angle_deg(15.0) == Approx(45.0));
  CHECK(hour_angle_deg(6.0) == Approx(-90.0));
  CHECK(hour_angle_deg(0.0) == Approx(-180.0));
  Gen g(2);
  for (int i = 0; i < 1000; ++i) {
    const double h = hour_angle_deg(g.real(0, 24));
    CHECK(h >= -180.0);
    CHECK(h < 180.0);
  }
}

TEST_CASE("solar_elevation") {
  CHECK(solar_elevation_deg(0, 0, 0) == Approx(90.0));
  CHECK(solar_elevation_deg(0, 0, 90) == Approx(0.0).epsilon(1e-9));
  CHECK(solar_elevation_deg(45, 23.45, 0) == Approx(68.45).epsilon(1e-9));
  Gen g(3);
  for (int i = 0; i < 1000; ++i) {
    const double e = solar_elevation_deg(g.real(-90, 90), g.real(-23.45, 23.45), g.real(-180, 180));
    CHECK(e >= -90.0);
    CHECK(e <= 90.0);
  }
}

TEST_CASE("clear_sky_irradiance") {
  CHECK(clear_sky_irradiance(90) == Approx(1000.0));
  CHECK(clear_sky_irradiance(-10) == 0.0);
  CHECK(clear_sky_irradiance(30) == Approx(500.0));
}

TEST_CASE("cell_temperature") {
  CHECK(cell_temperature(20, 0) == Approx(20.0));
  CHECK(cell_temperature(20, 1000) == Approx(50.0));
  CHECK(cell_temperature(25, 500) == Approx(40.0));
}

TEST_CASE("panel_power") {
  PanelSpec p;
  p.panel_id = "P";
  p.site_id = "S";
  p.rated_watts_peak = 300;
  p.temp_coeff_per_c = -0.004;
  CHECK(panel_power(p, 1000, 25, 1) == Approx(300.0));
  CHECK(panel_power(p, 0, 20, 1) == 0.0);
  CHECK(panel_power(p, 800, 45, 1) == Approx(220.8).epsilon(1e-12));
  CHECK(panel_power(p, 1000, 400, 1) == 0.0);  // floored
  p.status = PanelStatus::kDisabled;
  CHECK(panel_power(p, 1000, 25, 1) == 0.0);
}

TEST_CASE("local_solar_hour") {
  CHECK(local_solar_hour(0, 0) == Approx(0.0));
  CHECK(local_solar_hour(0, 90) == Approx(6.0));
  CHECK(local_solar_hour(0, -90) == Approx(18.0));
  CHECK(local_solar_hour(43200, 0) == Approx(12.0));
}

TEST_CASE("cloud_factor") {
  CHECK(cloud_factor("S01", 12345, 9, 0.0) == 1.0);
  CHECK(cloud_factor("S01", 12345, 9, 0.7) == cloud_factor("S01", 12345, 9, 0.7));
  bool varies = false;
  for (Timestamp t = 1735646400; t < 1735646400 + 86400; t += 60) {
    const double c = cloud_factor("S01", t, 4, 1.0);
    CHECK(c >= 0.2);
    CHECK(c <= 1.0);
    varies = varies || c != cloud_factor("S01", 1735646400, 4, 1.0);
  }
  CHECK(varies);
  Gen g(8);
  for (int i = 0; i < 2000; ++i) {
    const double v = g.unit();
    const double c = cloud_factor(g.id(), g.range(0, 4'000'000'000LL), g.next(), v);
    CHECK(c >= 1.0 - 0.8 * v - 1e-12);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("night invariant of the clear-sky curve") {
  SiteSpec s{"S", "s", -18.14, 178.44, 720};
  PanelSpec p{"P", "S", 300, 15, 0, -0.004, PanelStatus::kActive};
  for (Timestamp t = 1735646400; t < 1735646400 + 2 * 86400; t += 120) {
    if (solar_elevation_at(s, t) <= 0) CHECK(clear_sky_power(p, s, t, 20) == 0.0);
  }
}
