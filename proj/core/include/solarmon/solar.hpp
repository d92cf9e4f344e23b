#pragma once

#include <cstdint>
#include <string_view>

#include "solarmon/model.hpp"

// Horizontal-equivalent clear-sky model. Panel tilt and azimuth are carried in
// PanelSpec but not projected; solar elevation is the only geometry input.
namespace solarmon::solar {

inline constexpr double kNominalPanelVolts = 36.0;
// Operating point as a share of nominal when producing.
inline constexpr double kOperatingVoltageFactor = 0.9;
inline constexpr double kStcIrradiance = 1000.0;

// Local calendar day number, Jan 1 = 1.
int day_of_year(Timestamp ts, int utc_offset_min);

// Cooper: 23.45 * sin(360 * (284 + n) / 365), degrees.
double solar_declination_deg(int day_of_year);

// 15 degrees per hour from solar noon, in [-180, 180).
double hour_angle_deg(double local_solar_hour);

double solar_elevation_deg(double latitude_deg, double declination_deg, double hour_angle_deg);

// 1000 * max(0, sin(elevation)) W/m2.
double clear_sky_irradiance(double elevation_deg);

// Linear NOCT-style rise: ambient + 0.03 * G.
double cell_temperature(double ambient_c, double irradiance_w_m2);

// rated * (G/1000) * (1 + coeff * (t_cell - 25)) * multiplier, floored at 0.
// Disabled panels produce 0.
double panel_power(const PanelSpec& spec, double irradiance_w_m2, double cell_temp_c,
                   double multiplier);

// The same formula without the status check.
double dc_power(double rated_watts_peak, double temp_coeff_per_c, double irradiance_w_m2,
                double cell_temp_c, double multiplier);

// Mean solar time from UTC and longitude, hours in [0, 24).
double local_solar_hour(Timestamp ts, double longitude_deg);

double solar_elevation_at(const SiteSpec& site, Timestamp ts);

// Model output with no faults and no clouds; the "expected" curve.
double clear_sky_power(const PanelSpec& spec, const SiteSpec& site, Timestamp ts,
                       double ambient_c);

// Deterministic cloud attenuation in [1 - 0.8 * variability, 1]: seeded draws
// per (seed, site, UTC hour) with linear interpolation between hours.
double cloud_factor(std::string_view site_id, Timestamp ts, std::uint64_t seed,
                    double cloud_variability);

}  // namespace solarmon::solar
