#include "solarmon/solar.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

namespace solarmon::solar {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform in [0, 1) from 53 high bits.
double hourly_draw(std::uint64_t seed, std::uint64_t site_hash, std::int64_t hour) {
  const std::uint64_t key =
      splitmix64(seed ^ splitmix64(site_hash ^ static_cast<std::uint64_t>(hour)));
  return static_cast<double>(key >> 11) * 0x1.0p-53;
}

}  // namespace

int day_of_year(Timestamp ts, int utc_offset_min) {
  using namespace std::chrono;
  const std::int64_t local = ts + std::int64_t{utc_offset_min} * 60;
  const sys_days day{days{floor_div(local, kSecondsPerDay)}};
  const year_month_day ymd{day};
  return static_cast<int>((day - sys_days{ymd.year() / January / 1}).count()) + 1;
}

double solar_declination_deg(int n) {
  return 23.45 * std::sin(360.0 * (284.0 + n) / 365.0 * kDegToRad);
}

double hour_angle_deg(double local_solar_hour) {
  return 15.0 * (local_solar_hour - 12.0);
}

double solar_elevation_deg(double latitude_deg, double declination_deg, double hour_angle_deg) {
  const double phi = latitude_deg * kDegToRad;
  const double delta = declination_deg * kDegToRad;
  const double h = hour_angle_deg * kDegToRad;
  const double s = std::sin(phi) * std::sin(delta) + std::cos(phi) * std::cos(delta) * std::cos(h);
  return std::asin(std::clamp(s, -1.0, 1.0)) / kDegToRad;
}

double clear_sky_irradiance(double elevation_deg) {
  return kStcIrradiance * std::max(0.0, std::sin(elevation_deg * kDegToRad));
}

double cell_temperature(double ambient_c, double irradiance_w_m2) {
  return ambient_c + 0.03 * irradiance_w_m2;
}

double panel_power(const PanelSpec& spec, double irradiance_w_m2, double cell_temp_c,
                   double multiplier) {
  if (spec.status == PanelStatus::kDisabled) return 0.0;
  return dc_power(spec.rated_watts_peak, spec.temp_coeff_per_c, irradiance_w_m2, cell_temp_c,
                  multiplier);
}

double dc_power(double rated_watts_peak, double temp_coeff_per_c, double irradiance_w_m2,
                double cell_temp_c, double multiplier) {
  const double p = rated_watts_peak * (irradiance_w_m2 / kStcIrradiance) *
                   (1.0 + temp_coeff_per_c * (cell_temp_c - 25.0)) * multiplier;
  return std::max(0.0, p);
}

double local_solar_hour(Timestamp ts, double longitude_deg) {
  const double utc_hours =
      static_cast<double>(ts - floor_div(ts, kSecondsPerDay) * kSecondsPerDay) / 3600.0;
  double h = std::fmod(utc_hours + longitude_deg / 15.0, 24.0);
  if (h < 0) h += 24.0;
  return h;
}

double solar_elevation_at(const SiteSpec& site, Timestamp ts) {
  const double decl = solar_declination_deg(day_of_year(ts, site.utc_offset_min));
  const double ha = hour_angle_deg(local_solar_hour(ts, site.longitude_deg));
  return solar_elevation_deg(site.latitude_deg, decl, ha);
}

double clear_sky_power(const PanelSpec& spec, const SiteSpec& site, Timestamp ts,
                       double ambient_c) {
  const double g = clear_sky_irradiance(solar_elevation_at(site, ts));
  return dc_power(spec.rated_watts_peak, spec.temp_coeff_per_c, g, cell_temperature(ambient_c, g),
                  1.0);
}

double cloud_factor(std::string_view site_id, Timestamp ts, std::uint64_t seed,
                    double cloud_variability) {
  if (cloud_variability <= 0.0) return 1.0;
  const std::uint64_t site_hash = fnv1a(site_id);
  const std::int64_t hour = floor_div(ts, kSecondsPerHour);
  const double frac = static_cast<double>(ts - hour * kSecondsPerHour) / kSecondsPerHour;
  const double depth = 0.8 * cloud_variability;
  const double a = 1.0 - depth * hourly_draw(seed, site_hash, hour);
  const double b = 1.0 - depth * hourly_draw(seed, site_hash, hour + 1);
  return a + (b - a) * frac;
}

}  // namespace solarmon::solar
