#pragma once

// Unit conventions.
//
// The train layer works in SI throughout (W, J, N, m, s, kg) with prices in
// $/J.  The dispatch layer keeps the market's native units: agent setpoints in
// kWh per dispatch interval, passive forecasts in kW, prices in $/kWh.
// Conversions between the two happen only through the helpers below.

namespace rdmm::units {

inline constexpr double kGravity = 9.80665;           // m/s^2
inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kJoulesPerKwh = 3.6e6;
inline constexpr double kJoulesPerMwh = 3.6e9;
inline constexpr double kWattsPerKw = 1.0e3;

constexpr double usd_per_mwh_to_usd_per_joule(double p) { return p / kJoulesPerMwh; }
constexpr double usd_per_joule_to_usd_per_mwh(double p) { return p * kJoulesPerMwh; }
constexpr double usd_per_kwh_to_usd_per_joule(double p) { return p / kJoulesPerKwh; }
constexpr double usd_per_joule_to_usd_per_kwh(double p) { return p * kJoulesPerKwh; }
constexpr double usd_per_mwh_to_usd_per_kwh(double p) { return p / 1.0e3; }

constexpr double watts_to_kw(double w) { return w / kWattsPerKw; }
constexpr double kw_to_watts(double kw) { return kw * kWattsPerKw; }
constexpr double joules_to_kwh(double j) { return j / kJoulesPerKwh; }

}  // namespace rdmm::units
