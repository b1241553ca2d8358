#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "rdmm/errors.hpp"
#include "rdmm/nec_scenario.hpp"
#include "rdmm/report.hpp"
#include "rdmm/scenario_io.hpp"
#include "rdmm/train_dynamics.hpp"
#include "rdmm/units.hpp"
#include "scenario_fixtures.hpp"

using namespace rdmm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rdmm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimal = R"({
  "schema_version": 1,
  "name": "minimal",
  "horizon": {"start_s": 0, "intervals": 3, "interval_length_s": 900},
  "accs": [{"id": "a", "start_m": 0, "end_m": 1000, "agent_ids": ["gen"], "passive_profile_ids": ["load"]}],
  "agents": [{"id": "gen", "kind": "electric-gen", "d_e": 1, "d_th": 0, "b": 0.04, "c": 1e-5,
              "y_min": 0, "y_max": [500, 500, 400]}],
  "passive": [{"id": "load", "electric_kw": [[-100, -200, -300]]}]
})";

// Replaces the first occurrence of `from` in the minimal document.
std::string minimal_with(const std::string& from, const std::string& to) {
  std::string doc = kMinimal;
  const auto pos = doc.find(from);
  REQUIRE(pos != std::string::npos);
  return doc.replace(pos, from.size(), to);
}

std::string error_of(const std::string& doc) {
  try {
    parse_scenario(doc);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal scenario document") {
  const Scenario s = parse_scenario(kMinimal);
  CHECK(s.name == "minimal");
  CHECK(s.horizon.size() == 3);
  REQUIRE(s.agents.size() == 1);
  CHECK(s.agents[0].b == std::vector<double>{0.04, 0.04, 0.04});
  CHECK(s.agents[0].y_max == std::vector<double>{500, 500, 400});
  CHECK(s.agents[0].a == std::vector<double>{0, 0, 0});
  CHECK(s.trains.empty());
  CHECK(acc_passive_loads(s, 0, 0).electric_kw == std::vector<double>{-100, -200, -300});
}

TEST_CASE("scenario validation names the offending field") {
  SUBCASE("profile one interval short") {
    const auto msg = error_of(minimal_with("[[-100, -200, -300]]", "[[-100, -200]]"));
    CHECK(msg.find("passive[0]") != std::string::npos);
    CHECK(msg.find("'load'") != std::string::npos);
    CHECK(msg.find("expected 3") != std::string::npos);
  }
  SUBCASE("agent vector of the wrong length") {
    const auto msg = error_of(minimal_with("[500, 500, 400]", "[500, 400]"));
    CHECK(msg.find("agents[0].y_max") != std::string::npos);
    CHECK(msg.find("expected M = 3") != std::string::npos);
  }
  SUBCASE("dangling agent reference") {
    const auto msg = error_of(minimal_with(R"(["gen"])", R"(["gen", "boiler"])"));
    CHECK(msg.find("accs[0].agent_ids[1]") != std::string::npos);
    CHECK(msg.find("boiler") != std::string::npos);
  }
  SUBCASE("unsupported schema version") {
    CHECK(error_of(minimal_with("\"schema_version\": 1", "\"schema_version\": 7")).find("schema_version") == 0);
  }
  SUBCASE("missing field and wrong type") {
    CHECK(error_of(minimal_with("\"kind\": \"electric-gen\", ", "")).find("agents[0].kind: missing") == 0);
    CHECK(error_of(minimal_with("\"c\": 1e-5", "\"c\": \"cheap\"")).find("agents[0].c: expected a number or an array") == 0);
  }
  SUBCASE("unknown agent kind") {
    CHECK(error_of(minimal_with("electric-gen", "windmill")).find("agents[0].kind") == 0);
  }
  SUBCASE("network connection without a price series") {
    const auto msg = error_of(minimal_with("electric-gen", "network-connection"));
    CHECK(msg.find("missing price series for ACC 'a'") != std::string::npos);
  }
  SUBCASE("malformed JSON") {
    CHECK(error_of("{\"schema_version\": 1,").find("invalid JSON") != std::string::npos);
  }
}

TEST_CASE("scenario documents round-trip") {
  SUBCASE("case study") {
    const Scenario s = build_nec_scenario(synthetic_nec_prices());
    CHECK(parse_scenario(scenario_to_json(s)) == s);
  }
  SUBCASE("grades, speed limits, forecast instances and solver settings") {
    Scenario s = fixtures::market_scenario({40.0, 70.0});
    s.trains[0].grade.alpha = PiecewiseLinear({0.0, 5'000.0, 12'000.0}, {0.0, 0.004, -0.002});
    s.trains[0].speed_limit.upper = PiecewiseLinear({0.0, 6'000.0}, {50.0, 60.0});
    s.trains[0].train.eta_regen = 0.8;
    s.passive[0].electric_kw.push_back({-900.0, -950.0, -1000.0, -1100.5});
    s.passive[1].renewable_kw = {{0.0, 10.0, 20.0, 30.0}};
    s.agents[1].b = {0.1, 0.2, 0.3, 0.123456789012345};
    s.solver.dispatch.tol_j_lambda = 1e-4;
    s.solver.train.dt_s = 2.5;
    s.solver.train.nlp.max_iterations = 321;
    s.solver.damping = 0.7;
    s.seed = 18'446'744'073'709'551'557ULL;
    const auto dir = scratch_dir("roundtrip");
    write_scenario(s, dir / "s.json");
    CHECK(load_scenario(dir / "s.json") == s);
  }
}

TEST_CASE("price series CSV") {
  SUBCASE("constant file and unit conversion") {
    std::istringstream in("timestamp_s,price_usd_per_mwh\n0,50\n3600,50\n7200,50\n");
    const auto s = parse_price_csv(in, "a");
    CHECK(s.usd_per_mwh == std::vector<double>{50, 50, 50});
    CHECK(s.mean(100.0, 5000.0) == 50.0);
    CHECK(units::usd_per_mwh_to_usd_per_joule(s.at(1000.0)) == doctest::Approx(1.3889e-11).epsilon(1e-4));
    CHECK(units::usd_per_mwh_to_usd_per_joule(50.0) == 50.0 / 3.6e9);
  }
  SUBCASE("non-monotone timestamps report the line") {
    std::istringstream in("timestamp_s,price_usd_per_mwh\n0,50\n600,51\n600,52\n");
    try {
      parse_price_csv(in, "a", "p.csv");
      FAIL("expected an error");
    } catch (const ScenarioError& e) {
      CHECK(e.field_path() == "p.csv:4");
    }
  }
  SUBCASE("unparseable row reports the line") {
    std::istringstream in("timestamp_s,price_usd_per_mwh\r\n0,50\r\n\r\n600,fifty\r\n");
    try {
      parse_price_csv(in, "a", "p.csv");
      FAIL("expected an error");
    } catch (const ScenarioError& e) {
      CHECK(e.field_path() == "p.csv:4");
      CHECK(std::string(e.what()).find("fifty") != std::string::npos);
    }
  }
  SUBCASE("wrong header") {
    std::istringstream in("time,price\n0,50\n");
    CHECK_THROWS_AS(parse_price_csv(in, "a"), ScenarioError);
  }
  SUBCASE("coverage gap against the horizon") {
    PriceSeries s{"a", {0.0, 900.0}, {50.0, 60.0}};
    CHECK_NOTHROW(check_coverage(s, HorizonGrid(0.0, 2, 900.0)));
    CHECK_THROWS_AS(check_coverage(s, HorizonGrid(0.0, 3, 900.0)), ScenarioError);
    CHECK_THROWS_AS(check_coverage(s, HorizonGrid(-10.0, 1, 900.0)), ScenarioError);
  }
  SUBCASE("interval means of a stepped series") {
    PriceSeries s{"a", {0.0, 300.0, 600.0}, {30.0, 90.0, 90.0}};
    const auto p = interval_prices_usd_per_kwh(s, HorizonGrid(0.0, 1, 600.0));
    CHECK(p[0] == doctest::Approx(0.06));
  }
  SUBCASE("scenario CSV references resolve relative to the document") {
    const auto dir = scratch_dir("csvref");
    write_price_series({"a", {0.0, 1800.0, 3600.0}, {41.5, 42.5, 43.5}}, dir / "prices" / "a.csv");
    std::string doc = minimal_with("electric-gen", "network-connection");
    doc.insert(doc.rfind('}'), R"(, "prices": [{"acc_id": "a", "csv": "prices/a.csv"}])");
    std::ofstream(dir / "s.json") << doc;
    const Scenario s = load_scenario(dir / "s.json");
    REQUIRE(s.prices.size() == 1);
    CHECK(s.prices[0].usd_per_mwh == std::vector<double>{41.5, 42.5, 43.5});
    CHECK(acc_agents(s, 0)[0].b[2] == doctest::Approx(0.0425));
  }
}

TEST_CASE("GPS trace conditioning") {
  auto cruise = [](std::size_t n, double v) {
    std::vector<RawTraceSample> raw;
    for (std::size_t i = 0; i < n; ++i) raw.push_back({2.0 * i, 100.0 + 2.0 * v * i, v});
    return raw;
  };
  SUBCASE("constant speed has zero acceleration") {
    const auto trace = condition_trace(cruise(40, 31.0), 5.0);
    CHECK(trace.samples.size() == 16);
    for (const auto& s : trace.samples) {
      CHECK(std::abs(s.a) <= 1e-9);
      CHECK(s.v == doctest::Approx(31.0));
    }
    CHECK(trace.samples[3].x == doctest::Approx(100.0 + 31.0 * 15.0));
  }
  SUBCASE("too few samples") {
    CHECK_THROWS_AS(condition_trace(cruise(2, 10.0)), InvalidArgument);
  }
  SUBCASE("time must increase") {
    auto raw = cruise(12, 10.0);
    raw[5].t_s = raw[4].t_s;
    CHECK_THROWS_AS(condition_trace(raw), InvalidArgument);
  }
  SUBCASE("negative smoothed speeds are clamped and counted") {
    auto raw = cruise(20, 0.0);
    for (std::size_t i = 8; i < 12; ++i) raw[i].v_mps = -1.0;
    const auto trace = condition_trace(raw, 2.0);
    CHECK(trace.clamped_speeds > 0);
    for (const auto& s : trace.samples) CHECK(s.v >= 0.0);
  }
  SUBCASE("forward-integrated run round-trips through the CSV") {
    const TrainSpec train = acela_train_spec();
    auto force = [&](double t) { return 2.0e5 * std::max(0.0, std::cos(t / 200.0)) + 2.0e4; };
    const auto sim = integrate_forward(train, GradeProfile::level(), force, 0.0, 0.0, 1.0, 600.0);
    const auto dir = scratch_dir("trace");
    write_trace_csv(sim, dir / "trace.csv");
    const auto trace = load_gps_trace(dir / "trace.csv", 5.0);
    double v_scale = 0.0, x_scale = 0.0, v_err = 0.0, x_err = 0.0;
    for (const auto& s : trace.samples) {
      const auto& ref = sim.at(static_cast<std::size_t>(std::lround(s.t)));
      v_scale = std::max(v_scale, std::abs(ref.v));
      x_scale = std::max(x_scale, std::abs(ref.x));
      v_err = std::max(v_err, std::abs(s.v - ref.v));
      x_err = std::max(x_err, std::abs(s.x - ref.x));
    }
    CHECK(v_err <= 1e-3 * v_scale);
    CHECK(x_err <= 1e-3 * x_scale);
  }
  SUBCASE("bad trace file") {
    const auto dir = scratch_dir("badtrace");
    std::ofstream(dir / "t.csv") << "t_s,x_m,v_mps\n0,0,0\n1,1\n";
    CHECK_THROWS_AS(load_gps_trace(dir / "t.csv"), ScenarioError);
  }
}

TEST_CASE("case-study construction") {
  const Scenario s = build_nec_scenario(synthetic_nec_prices());
  REQUIRE(s.track.size() == 4);
  std::vector<std::size_t> counts;
  for (const auto& acc : s.track) counts.push_back(acc.agent_ids.size());
  CHECK(counts == std::vector<std::size_t>{3, 3, 1, 1});
  CHECK(s.agent("C2").d_th[0] == 2.0);
  CHECK(s.agent("C1").d_th[0] == 1.02);
  CHECK(s.agent("H1").y_max[0] == doctest::Approx(10'432.0 / 6.0));
  CHECK(s.agent("C2").b[0] == 0.0818);
  REQUIRE(s.trains.size() == 1);
  CHECK(s.trains[0].train.mass_kg == 545'000.0);
  CHECK(s.trains[0].timetable.stations.size() == 3);
  CHECK(s.trains[0].timetable.stations[1].name == "Providence");

  // Network connections are priced at their ACC's series.
  const auto n3 = acc_agents(s, 2)[0];
  CHECK(n3.b[0] == doctest::Approx(s.prices[2].mean(s.horizon.begin_of(0), s.horizon.end_of(0)) / 1000.0));

  // The dearest ACC is at least twice the cheapest in every interval.
  for (int k = 0; k < s.horizon.size(); ++k) {
    double lo = 1e9, hi = 0.0;
    for (const auto& p : s.prices) {
      const double m = p.mean(s.horizon.begin_of(k), s.horizon.end_of(k));
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    CHECK(hi >= 2.0 * lo);
  }

  auto prices = synthetic_nec_prices();
  prices.erase(prices.begin() + 1);
  try {
    build_nec_scenario(prices);
    FAIL("expected an error");
  } catch (const ScenarioError& e) {
    CHECK(std::string(e.what()).find("acc2") != std::string::npos);
  }
}

TEST_CASE("report writer") {
  CHECK(format_cost(-0.001) == "0.00");
  CHECK(format_cost(200.615) == "200.62");
  CHECK(format_quantity(1234567.89) == "1.23457e+06");
  CHECK(format_quantity(-0.0) == "0");
  CHECK(format_quantity(66.67) == "66.67");

  SUBCASE("empty result gives header-only tables") {
    const auto dir = scratch_dir("empty_report");
    write_report(dir, Scenario{}, RdmmResult{});
    CHECK(slurp(dir / "settlement.csv").find('\n') + 1 == slurp(dir / "settlement.csv").size());
    CHECK(slurp(dir / "summary.csv") == "train_id,profile,cost_usd,work_kwh,energy_kwh,cost_vs_min_work_pct\n");
    CHECK(slurp(dir / "iterations.csv").find('\n') + 1 == slurp(dir / "iterations.csv").size());
  }
  SUBCASE("same inputs give byte-identical files") {
    const Scenario s = fixtures::market_scenario({90.0, 30.0});
    const auto result = run_rdmm(s);
    const auto a = scratch_dir("report_a");
    const auto b = scratch_dir("report_b");
    write_report(a, s, result);
    write_report(b, s, run_rdmm(s));
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
      CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
      ++files;
    }
    CHECK(files == 6);
    const auto traj = slurp(a / "trajectory_acela.csv");
    CHECK(traj.rfind("t_s,price_usd_per_mwh,x_m,v_mps,power_mw\n", 0) == 0);
  }
}
