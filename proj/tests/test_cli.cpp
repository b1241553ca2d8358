#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "rdmm/scenario_io.hpp"
#include "rdmm/units.hpp"
#include "scenario_fixtures.hpp"

using namespace rdmm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rdmm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path save(const Scenario& s, const fs::path& dir) {
  write_scenario(s, dir / "scenario.json");
  return dir / "scenario.json";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::map<std::string, std::string> run_info(const fs::path& dir) {
  std::map<std::string, std::string> kv;
  for (const auto& row : read_csv(dir / "run.csv")) {
    if (row.size() == 2) kv[row[0]] = row[1];
  }
  return kv;
}

}  // namespace

TEST_CASE("cli input errors exit with 1") {
  const auto dir = scratch("input");
  SUBCASE("no subcommand") { CHECK(run_cli({}).code == cli::kInputError); }
  SUBCASE("help") { CHECK(run_cli({"--help"}).code == cli::kOk); }
  SUBCASE("range checks") {
    const auto path = save(fixtures::market_scenario({50.0}, 12'000.0, 480.0, 4, 1e-6, false), dir);
    CHECK(run_cli({"dispatch", "--scenario", path.string(), "--dt", "0.05"}).code == cli::kInputError);
    CHECK(run_cli({"dispatch", "--scenario", path.string(), "--intervals", "289"}).code == cli::kInputError);
    CHECK(run_cli({"dispatch", "--scenario", path.string(), "--damping", "1.5"}).code == cli::kInputError);
  }
  SUBCASE("invalid scenario names the field") {
    std::ofstream(dir / "bad.json") << R"({"schema_version": 1, "name": "x",
      "horizon": {"start_s": 0, "intervals": 2, "interval_length_s": 600},
      "accs": [{"id": "a", "start_m": 0, "end_m": 100, "agent_ids": ["ghost"], "passive_profile_ids": []}],
      "agents": [], "passive": []})";
    const auto o = run_cli({"dispatch", "--scenario", (dir / "bad.json").string(), "--out", dir.string()});
    CHECK(o.code == cli::kInputError);
    CHECK(o.err.find("accs[0].agent_ids[0]") != std::string::npos);
  }
  SUBCASE("train without trains") {
    const auto path = save(fixtures::market_scenario({50.0}, 12'000.0, 480.0, 4, 1e-6, false), dir);
    CHECK(run_cli({"train", "--scenario", path.string(), "--out", dir.string()}).code == cli::kInputError);
  }
}

TEST_CASE("cli dispatch") {
  const auto dir = scratch("dispatch");
  const auto path = save(fixtures::market_scenario({40.0, 90.0}, 12'000.0, 480.0, 4, 1e-5, false), dir);
  const auto o = run_cli({"dispatch", "--scenario", path.string(), "--out", dir.string(), "--oracle"});
  CHECK(o.code == cli::kOk);
  CHECK(o.out.find("acc1: converged") != std::string::npos);
  CHECK(o.out.find("acc2: oracle deviation") != std::string::npos);

  // One agent per ACC, so the price is its marginal cost b + c y at the load.
  const auto prices = read_csv(dir / "dispatch_prices.csv");
  REQUIRE(prices.size() == 9);
  CHECK(prices[0][0] == "acc_id");
  const double load_kwh = 1000.0 * 300.0 / 3600.0;
  CHECK(std::stod(prices[1][3]) == doctest::Approx(40.0 + 1000.0 * 1e-5 * load_kwh).epsilon(1e-6));
  CHECK(read_csv(dir / "dispatch_setpoints.csv").size() == 9);

  SUBCASE("non-convergence reports residuals and exits with 2") {
    Scenario s = load_scenario(path);
    s.solver.dispatch.k_max = 1;
    const auto o2 = run_cli({"dispatch", "--scenario", save(s, dir).string(), "--out", dir.string()});
    CHECK(o2.code == cli::kSolverError);
    CHECK(o2.err.find("residual electric") != std::string::npos);
  }
}

TEST_CASE("cli train") {
  const auto dir = scratch("train");
  const auto path = save(fixtures::market_scenario({50.0}), dir);

  SUBCASE("min-work profile and repeatability") {
    const auto a = run_cli({"train", "--scenario", path.string(), "--out", (dir / "a").string(), "--min-work"});
    const auto b = run_cli({"train", "--scenario", path.string(), "--out", (dir / "b").string(), "--min-work"});
    REQUIRE(a.code == cli::kOk);
    CHECK(a.out == b.out);
    CHECK(slurp(dir / "a" / "trajectory_acela_min_work.csv") == slurp(dir / "b" / "trajectory_acela_min_work.csv"));
    CHECK(slurp(dir / "a" / "train_summary.csv") == slurp(dir / "b" / "train_summary.csv"));
  }
  SUBCASE("cruise trace against the closed form") {
    const TrainSpec train = acela_train_spec();
    const double v = 25.0, t0 = 60.0, span = 480.0;
    {
      std::ofstream csv(dir / "trace.csv");
      csv << "t_s,x_m,v_mps\n";
      for (int i = 0; i <= 96; ++i) csv << t0 + 5.0 * i << ',' << v * 5.0 * i << ',' << v << '\n';
    }
    const auto o = run_cli({"train", "--scenario", path.string(), "--out", dir.string(), "--trace",
                            (dir / "trace.csv").string()});
    REQUIRE(o.code == cli::kOk);
    const double force = train.davis.a + train.davis.b * v + train.davis.c * v * v;
    const double energy_j = force * v / train.eta_traction * span;
    const double cost = energy_j * units::usd_per_mwh_to_usd_per_joule(50.0);
    const auto rows = read_csv(dir / "train_summary.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][1] == "trace");
    CHECK(std::stod(rows[1][2]) == doctest::Approx(cost).epsilon(0.005));
    CHECK(std::stod(rows[1][4]) == doctest::Approx(units::joules_to_kwh(energy_j)).epsilon(1e-5));
  }
  SUBCASE("infeasible timetable exits with 2") {
    Scenario s = load_scenario(path);
    s.trains[0].timetable.stations[1].earliest_arrival_s = 120.0;
    s.trains[0].timetable.stations[1].latest_departure_s = 120.0;
    const auto o = run_cli({"train", "--scenario", save(s, dir).string(), "--out", dir.string()});
    CHECK(o.code == cli::kSolverError);
    CHECK(o.err.find("infeasible") != std::string::npos);
  }
}

TEST_CASE("cli rdmm") {
  const auto dir = scratch("rdmm");

  SUBCASE("price differential: rdmm no dearer than min-work") {
    const auto path = save(fixtures::market_scenario({120.0, 30.0}), dir);
    const auto o = run_cli({"rdmm", "--scenario", path.string(), "--out", dir.string()});
    REQUIRE(o.code == cli::kOk);
    const auto rows = read_csv(dir / "summary.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][1] == "rdmm");
    CHECK(rows[2][1] == "min-work");
    CHECK(std::stod(rows[1][2]) <= std::stod(rows[2][2]));
    CHECK(std::stod(rows[2][5]) == 0.0);
    CHECK(std::stod(rows[1][5]) < 0.0);
    CHECK(fs::exists(dir / "trajectory_acela.csv"));
    CHECK(fs::exists(dir / "trajectory_acela_min_work.csv"));
  }
  SUBCASE("without trains the settlement is the plain dispatch") {
    const auto path = save(fixtures::market_scenario({40.0, 90.0}, 12'000.0, 480.0, 4, 1e-5, false), dir);
    REQUIRE(run_cli({"rdmm", "--scenario", path.string(), "--out", dir.string()}).code == cli::kOk);
    REQUIRE(run_cli({"dispatch", "--scenario", path.string(), "--out", dir.string()}).code == cli::kOk);
    const auto settled = read_csv(dir / "settlement.csv");
    const auto plain = read_csv(dir / "dispatch_prices.csv");
    REQUIRE(settled.size() == plain.size());
    for (std::size_t r = 1; r < settled.size(); ++r) {
      CHECK(settled[r][0] == plain[r][0]);
      CHECK(settled[r][3] == plain[r][3]);
    }
  }
  SUBCASE("seed does not move a convex-behaving settlement") {
    const auto path = save(fixtures::market_scenario({40.0, 70.0}), dir);
    REQUIRE(run_cli({"rdmm", "--scenario", path.string(), "--out", (dir / "s1").string(), "--seed", "1"}).code ==
            cli::kOk);
    REQUIRE(run_cli({"rdmm", "--scenario", path.string(), "--out", (dir / "s2").string(), "--seed", "977"}).code ==
            cli::kOk);
    const double c1 = std::stod(run_info(dir / "s1")["total_train_cost_usd"]);
    const double c2 = std::stod(run_info(dir / "s2")["total_train_cost_usd"]);
    CHECK(c2 == doctest::Approx(c1).epsilon(1e-4));
  }
}

TEST_CASE("cli overrides") {
  Scenario s = fixtures::market_scenario({50.0}, 12'000.0, 480.0, 4);
  s.agents[0].y_max = {100.0, 200.0, 300.0, 400.0};
  cli::RunConfig c;
  c.intervals = 6;
  c.interval_length_s = 150.0;
  c.tol_j = 1e-5;
  c.dt_s = 2.0;
  cli::apply_overrides(s, c);
  CHECK(s.horizon == HorizonGrid(0.0, 6, 150.0));
  CHECK(s.agents[0].y_max == std::vector<double>{50.0, 100.0, 150.0, 200.0, 200.0, 200.0});
  CHECK(s.passive[0].electric_kw[0].size() == 6);
  CHECK(s.solver.dispatch.tol_j_lambda == 1e-5);
  CHECK(s.solver.train.dt_s == 2.0);
  CHECK_NOTHROW(s.validate());
}
