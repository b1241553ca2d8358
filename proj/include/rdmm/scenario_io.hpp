#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdmm/scenario.hpp"
#include "rdmm/train_dynamics.hpp"

// Scenario documents (JSON), price and GPS trace CSVs.
namespace rdmm {

/// Parses and validates a scenario document.  Relative CSV references are
/// resolved against `base_dir`.  Errors are ScenarioError with a field path.
Scenario parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Self-contained document (all profiles inline).
std::string scenario_to_json(const Scenario& scenario);
void write_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// CSV with header `timestamp_s,price_usd_per_mwh`.  `source` names the
/// input in error messages.
PriceSeries parse_price_csv(std::istream& in, const std::string& acc_id, const std::string& source = "<input>");
PriceSeries load_price_series(const std::filesystem::path& path, const std::string& acc_id);
void write_price_series(const PriceSeries& series, const std::filesystem::path& path);

/// Throws ScenarioError unless the series covers [grid.start, grid.end).
void check_coverage(const PriceSeries& series, const HorizonGrid& grid);

struct RawTraceSample {
  double t_s = 0.0;
  double x_m = 0.0;
  double v_mps = 0.0;
};

struct GpsTrace {
  std::vector<KinematicSample> samples;  // uniform in time
  std::size_t clamped_speeds = 0;        // negative smoothed speeds set to zero
};

inline constexpr std::size_t kMinTraceSamples = 10;

/// Resamples to a uniform step, smooths speed with a centered moving average
/// of `window` samples (shrinking at the ends) and differentiates it by
/// central differences.
GpsTrace condition_trace(std::span<const RawTraceSample> raw, double dt_s = 5.0, int window = 5);

/// CSV with header `t_s,x_m,v_mps`, conditioned as above.
GpsTrace load_gps_trace(const std::filesystem::path& path, double dt_s = 5.0, int window = 5);
std::vector<RawTraceSample> parse_trace_csv(std::istream& in, const std::string& source = "<input>");
void write_trace_csv(std::span<const KinematicSample> samples, const std::filesystem::path& path);

}  // namespace rdmm
