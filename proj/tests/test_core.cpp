#include <vector>

#include "doctest.h"
#include "rdmm/core.hpp"
#include "rdmm/errors.hpp"
#include "rdmm/units.hpp"

using namespace rdmm;

TEST_CASE("time grid covers the horizon with half-open intervals") {
  const HorizonGrid g = build_time_grid(0.0, 12, 300.0);
  CHECK(g.size() == 12);
  CHECK(g.end() == doctest::Approx(3600.0));
  CHECK(g.interval_hours() == doctest::Approx(300.0 / 3600.0));
  CHECK(g.interval_of(0.0) == 0);
  CHECK(g.interval_of(299.9) == 0);
  CHECK(g.interval_of(300.0) == 1);
  CHECK(g.interval_of(3599.999) == 11);
  CHECK_THROWS_AS(g.interval_of(3600.0), OutOfRange);
  CHECK_THROWS_AS(g.interval_of(-1.0), OutOfRange);
  CHECK_FALSE(g.find_interval(-0.5).has_value());
  CHECK(g.advanced(2).start() == doctest::Approx(600.0));
}

TEST_CASE("time grid rejects degenerate sizes") {
  CHECK_THROWS_AS(build_time_grid(0.0, 0, 300.0), InvalidArgument);
  CHECK_THROWS_AS(build_time_grid(0.0, 4, 0.0), InvalidArgument);
  CHECK_THROWS_AS(build_time_grid(0.0, -1, 300.0), InvalidArgument);
}

namespace {
std::vector<AccDescriptor> four_acc_track() {
  return {{"acc1", 0.0, 1000.0, {}, {}},
          {"acc2", 1000.0, 2500.0, {}, {}},
          {"acc3", 2500.0, 4000.0, {}, {}},
          {"acc4", 4000.0, 5000.0, {}, {}}};
}
}  // namespace

TEST_CASE("acc_of_position uses half-open spans closed at the terminus") {
  const auto track = four_acc_track();
  CHECK(acc_of_position(track, 0.0) == 0);
  CHECK(acc_of_position(track, 1000.0) == 1);
  CHECK(acc_of_position(track, 999.999) == 0);
  CHECK(acc_of_position(track, 5000.0) == 3);
  CHECK_THROWS_AS(acc_of_position(track, 5000.1), OutOfRange);
  CHECK_THROWS_AS(acc_of_position(track, -0.1), OutOfRange);
}

TEST_CASE("acc spans partition the track") {
  const auto track = four_acc_track();
  for (int i = 0; i <= 5000; ++i) {
    const double x = i;
    int owners = 0;
    for (std::size_t n = 0; n < track.size(); ++n) {
      const bool last = n + 1 == track.size();
      if (x >= track[n].start_m && (x < track[n].end_m || (last && x == track[n].end_m))) ++owners;
    }
    CHECK(owners == 1);
    CHECK(acc_of_position(track, x) < track.size());
  }
}

TEST_CASE("validate_track rejects gaps and overlaps") {
  auto track = four_acc_track();
  CHECK_NOTHROW(validate_track(track));
  track[2].start_m = 2600.0;
  CHECK_THROWS_AS(validate_track(track), InvalidArgument);
  track[2].start_m = 2400.0;
  CHECK_THROWS_AS(validate_track(track), InvalidArgument);
  CHECK_THROWS_AS(validate_track(std::vector<AccDescriptor>{}), InvalidArgument);
}

TEST_CASE("agent validation") {
  auto ag = make_agent("c1", AgentKind::kCogeneration, 3, 1.0, 1.02, 0.0, 0.0629, 1e-6, 0.0, 1550.0);
  CHECK_NOTHROW(ag.validate(3));
  CHECK_THROWS_AS(ag.validate(4), InvalidArgument);
  auto bad = ag;
  bad.c[1] = -1.0;
  CHECK_THROWS_AS(bad.validate(3), InvalidArgument);
  bad = ag;
  bad.y_min[0] = 2000.0;
  CHECK_THROWS_AS(bad.validate(3), InvalidArgument);
  bad = ag;
  bad.d_e[2] = 0.0;
  bad.d_th[2] = 0.0;
  CHECK_THROWS_AS(bad.validate(3), InvalidArgument);
}

TEST_CASE("agent kinds round-trip through their names") {
  for (auto k : {AgentKind::kHeating, AgentKind::kElectricGeneration, AgentKind::kCogeneration,
                 AgentKind::kNetworkConnection})
    CHECK(agent_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(agent_kind_from_string("storage"), InvalidArgument);
}

TEST_CASE("passive profiles enforce the sign convention and reuse the last instance") {
  PassiveProfiles p;
  p.id = "p";
  p.renewable_kw = {{10.0, 20.0}};
  p.electric_kw = {{-5.0, -5.0}, {-6.0, -7.0}};
  CHECK_NOTHROW(p.validate(2));
  CHECK(p.electric(1, 2) == std::vector<double>{-6.0, -7.0});
  CHECK(p.electric(5, 2) == std::vector<double>{-6.0, -7.0});
  CHECK(p.thermal(0, 2) == std::vector<double>{0.0, 0.0});
  p.renewable_kw[0][1] = -1.0;
  CHECK_THROWS_AS(p.validate(2), InvalidArgument);
  p.renewable_kw[0][1] = 1.0;
  p.electric_kw[0][0] = 3.0;
  CHECK_THROWS_AS(p.validate(2), InvalidArgument);
}

TEST_CASE("acela spec is valid and matches the published coefficients") {
  const TrainSpec t = acela_train_spec();
  CHECK_NOTHROW(t.validate());
  CHECK(t.mass_kg == 545000.0);
  CHECK(t.davis.a == 10195.16);
  CHECK(t.davis.b == 65.81);
  CHECK(t.davis.c == 25.02);
  CHECK(t.p_max_w == 9.2e6);
  CHECK(t.p_min_w < 0.0);
  TrainSpec bad = t;
  bad.a_min = 0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = t;
  bad.davis.b = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("timetable validation") {
  Timetable tt{{{"a", 0.0, 0.0, 0.0, 0.0}, {"b", 1000.0, 100.0, 200.0, 60.0}, {"c", 3000.0, 400.0, 400.0, 0.0}}};
  CHECK_NOTHROW(tt.validate());
  auto bad = tt;
  bad.stations[1].x_m = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = tt;
  bad.stations[1].dwell_s = 150.0;  // 100 + 150 > 200
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = tt;
  bad.stations.resize(1);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("piecewise linear interpolation") {
  const PiecewiseLinear f({0.0, 10.0, 20.0}, {1.0, 3.0, 3.0});
  CHECK(f(-5.0) == 1.0);
  CHECK(f(5.0) == doctest::Approx(2.0));
  CHECK(f(25.0) == 3.0);
  CHECK(f.slope(5.0) == doctest::Approx(0.2));
  CHECK(f.slope(15.0) == doctest::Approx(0.0));
  CHECK_FALSE(f.is_constant());
  CHECK(PiecewiseLinear(4.0).is_constant());
  CHECK(PiecewiseLinear()(3.0) == 0.0);
  CHECK_THROWS_AS(PiecewiseLinear({0.0, 0.0}, {1.0, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(PiecewiseLinear({0.0, 1.0}, {1.0}), InvalidArgument);
}

TEST_CASE("grade profile sanity bound") {
  GradeProfile g{PiecewiseLinear({0.0, 100.0}, {0.0, 0.01})};
  CHECK_NOTHROW(g.validate());
  g.alpha = PiecewiseLinear(0.25);
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
}

TEST_CASE("unit conversions") {
  CHECK(units::usd_per_mwh_to_usd_per_joule(3.6e9) == doctest::Approx(1.0));
  CHECK(units::usd_per_joule_to_usd_per_mwh(units::usd_per_mwh_to_usd_per_joule(42.0)) ==
        doctest::Approx(42.0));
  CHECK(units::usd_per_mwh_to_usd_per_kwh(50.0) == doctest::Approx(0.05));
  CHECK(units::joules_to_kwh(3.6e6) == doctest::Approx(1.0));
}
