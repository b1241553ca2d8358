// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dispatch_fixtures.hpp"
#include "rdmm/coordinator.hpp"
#include "rdmm/dispatch.hpp"
#include "rdmm/leg_nlp.hpp"
#include "rdmm/nec_scenario.hpp"
#include "rdmm/report.hpp"
#include "rdmm/scenario_io.hpp"
#include "rdmm/train_dynamics.hpp"
#include "rdmm/units.hpp"
#include "scenario_fixtures.hpp"

using namespace rdmm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, fmt::format("threw: {}", e.what())};
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Everything the criteria share from the case-study run.
struct CaseStudy {
  Scenario scenario;
  RdmmResult result;
  std::vector<Trajectory> min_work;  // priced at the settlement prices
  PriceFunction prices{HorizonGrid(0.0, 1, 1.0), {{0.0}}};
  double seconds = 0.0;
};

CaseStudy run_case_study() {
  CaseStudy cs;
  cs.scenario = build_nec_scenario(synthetic_nec_prices());
  const auto t0 = Clock::now();
  cs.result = run_rdmm(cs.scenario);
  std::vector<std::vector<double>> lambda;
  for (const auto& p : cs.result.settlement.prices) lambda.push_back(p.electric);
  cs.prices = compose_train_prices(lambda, cs.scenario.horizon);
  TrainSolverConfig config = cs.scenario.solver.train;
  config.seed = cs.scenario.seed;
  for (std::size_t l = 0; l < cs.scenario.trains.size(); ++l) {
    const auto trip = cs.scenario.trip(l);
    auto mw = min_work_profile(trip, config);
    price_trajectory(mw, trip.track, cs.prices);
    cs.min_work.push_back(std::move(mw));
  }
  cs.seconds = seconds_since(t0);
  return cs;
}

std::vector<dispatch::DispatchResult> converged_results;  // for the KKT criterion
std::vector<std::pair<std::vector<DispatchableAgent>, dispatch::NetLoads>> converged_inputs;

Verdict oracle_equivalence() {
  std::mt19937_64 rng(20240118);
  const dispatch::StepSizes steps;
  double worst_y = 0.0, worst_lambda = 0.0;
  int unconverged = 0;
  double negotiate_s = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = fixtures::random_instance(rng, 5, 12);
    const auto t0 = Clock::now();
    const auto r = dispatch::negotiate(inst.agents, inst.loads, steps);
    negotiate_s += seconds_since(t0);
    const auto q = dispatch::qp_oracle(inst.agents, inst.loads);
    if (!r.converged) ++unconverged;
    worst_y = std::max(worst_y, fixtures::rel_diff(r.y, q.y));
    worst_lambda = std::max({worst_lambda, fixtures::rel_diff(r.lambda_e, q.lambda_e),
                             fixtures::rel_diff(r.lambda_th, q.lambda_th)});
    if (r.converged) {
      converged_results.push_back(r);
      converged_inputs.emplace_back(inst.agents, inst.loads);
    }
  }
  const bool pass = unconverged == 0 && worst_y <= 1e-3 && worst_lambda <= 1e-3 && negotiate_s < 10.0;
  return {pass, fmt::format("100 instances, {} unconverged, max rel dev y {:.2e} lambda {:.2e} (tol 1e-3), "
                            "negotiation {:.2f} s (limit 10 s)",
                            unconverged, worst_y, worst_lambda, negotiate_s)};
}

Verdict kkt_certificates(const CaseStudy& cs) {
  for (std::size_t n = 0; n < cs.scenario.track.size(); ++n) {
    const auto& it = cs.result.log[cs.result.settled_iterate];
    if (!it.dispatch[n].converged) continue;
    auto loads = acc_passive_loads(cs.scenario, n, it.j - 1);
    for (int k = 0; k < cs.scenario.horizon.size(); ++k) loads.electric_kw[k] += it.traction_kw[n][k];
    converged_results.push_back(it.dispatch[n]);
    converged_inputs.emplace_back(acc_agents(cs.scenario, n), loads);
  }
  double st = 0.0, bal = 0.0, cs_ = 0.0;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < converged_results.size(); ++i) {
    const auto rep = dispatch::kkt_certificate(converged_inputs[i].first, converged_inputs[i].second,
                                               converged_results[i]);
    st = std::max(st, rep.stationarity);
    bal = std::max(bal, rep.balance);
    cs_ = std::max(cs_, rep.complementarity);
    if (!rep.passes(1e-5, 1e-6, 1e-6)) ++failed;
  }
  return {failed == 0 && !converged_results.empty(),
          fmt::format("{} converged results, {} failing; worst stationarity {:.1e} (1e-5), balance {:.1e} (1e-6), "
                      "complementarity {:.1e} (1e-6)",
                      converged_results.size(), failed, st, bal, cs_)};
}

Verdict marginal_cost_pricing() {
  const std::vector<double> pis{50.0, 87.5, 12.25};
  double worst = 0.0;
  for (double pi : pis) {
    // Linear network agent (c = 0) with a train on the line.
    const Scenario s = fixtures::market_scenario({pi}, 12'000.0, 480.0, 4, 0.0);
    const auto r = run_rdmm(s);
    for (double l : r.settlement.prices[0].electric) {
      worst = std::max(worst, std::abs(l - units::usd_per_mwh_to_usd_per_kwh(pi)));
    }
  }
  return {worst <= 1e-9, fmt::format("max |lambda - pi| {:.2e} $/kWh over {} price levels (tol 1e-9)", worst,
                                     pis.size())};
}

Verdict train_physics(const CaseStudy& cs, const std::vector<Trajectory>& extra) {
  const TrainSpec acela = acela_train_spec();
  const double f0 = davis_force(acela, 0.0);

  std::vector<const Trajectory*> emitted;
  for (const auto& t : cs.result.trajectories) emitted.push_back(&t);
  for (const auto& t : cs.min_work) emitted.push_back(&t);
  for (const auto& t : extra) emitted.push_back(&t);
  double worst_we = 0.0;
  for (const auto* t : emitted) {
    const auto wb = work_energy_balance(acela, cs.scenario.trains[0].grade, t->nodes, t->traction_profile());
    worst_we = std::max(worst_we, wb.relative_residual());
  }

  // Objective gradient of each case-study leg against central differences.
  const auto trip = cs.scenario.trip(0);
  double worst_fd = 0.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> frac(0.4, 0.95), jitter(-1e-3, 1e-3);
  for (const auto& leg : leg_schedule(trip)) {
    const LegNlp nlp = transcribe_leg(trip, leg, cs.prices, cs.scenario.solver.train.dt_s,
                                      cs.scenario.solver.train.price_smoothing_m);
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::VectorXd z = nlp.trapezoid_guess(frac(rng));
      for (int i = 0; i < z.size(); ++i) z[i] += jitter(rng);
      Eigen::VectorXd g;
      nlp.gradient(z, g);
      const double h = 1e-6;
      double err = 0.0;
      for (int i = 0; i < z.size(); ++i) {
        Eigen::VectorXd zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        err = std::max(err, std::abs(g[i] - (nlp.objective(zp) - nlp.objective(zm)) / (2 * h)));
      }
      worst_fd = std::max(worst_fd, err / g.cwiseAbs().maxCoeff());
    }
  }
  const bool pass = f0 == 10'195.16 && worst_we <= 0.01 && worst_fd <= 1e-5;
  return {pass, fmt::format("Davis F(0) = {:.2f} N (10195.16), work-energy residual {:.2e} over {} trajectories "
                            "(tol 1e-2), gradient vs FD {:.2e} (tol 1e-5)",
                            f0, worst_we, emitted.size(), worst_fd)};
}

Verdict uniform_price_reduction(const CaseStudy& cs, std::vector<Trajectory>& emitted) {
  const auto trip = cs.scenario.trip(0);
  TrainSolverConfig config = cs.scenario.solver.train;
  const double price = units::usd_per_mwh_to_usd_per_joule(50.0);
  auto uniform = optimize_trip(trip, PriceFunction::uniform(price, trip.track.size()), config);
  auto mw = min_work_profile(trip, config);
  const double rel = std::abs(uniform.cost_usd / price - mw.energy_j) / std::abs(mw.energy_j);
  emitted.push_back(std::move(uniform));
  emitted.push_back(std::move(mw));
  return {rel <= 1e-3, fmt::format("cost/price vs min-work signed energy: relative gap {:.2e} (tol 1e-3), "
                                   "dt {} s",
                                   rel, config.dt_s)};
}

Verdict dominance(const CaseStudy& cs) {
  const Scenario& s = cs.scenario;
  double worst_ratio = 1e300;
  for (int k = 0; k < s.horizon.size(); ++k) {
    double lo = 1e300, hi = 0.0;
    for (const auto& p : s.prices) {
      const double m = p.mean(s.horizon.begin_of(k), s.horizon.end_of(k));
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    worst_ratio = std::min(worst_ratio, hi / lo);
  }
  const double rdmm_cost = cs.result.settlement.total_train_cost();
  const double mw_cost = cs.min_work.at(0).cost_usd;
  const double reduction = (mw_cost - rdmm_cost) / mw_cost;
  const auto legs = leg_schedule(s.trip(0)).size();
  const bool pass = worst_ratio >= 2.0 && rdmm_cost <= mw_cost && reduction >= 0.05 && cs.seconds < 300.0 &&
                    cs.result.settlement.converged;
  return {pass, fmt::format("inter-ACC price ratio >= {:.2f} (need 2), rDMM {:.2f} $ vs min-work {:.2f} $, "
                            "reduction {:.2f}% (need 5%), {} legs, dt {} s, M {}, converged {}, {:.1f} s (limit 300 s)",
                            worst_ratio, rdmm_cost, mw_cost, 100.0 * reduction, legs, s.solver.train.dt_s,
                            s.horizon.size(), cs.result.settlement.converged, cs.seconds)};
}

Verdict field_trace(const CaseStudy& cs, const fs::path& dir) {
  // Replay the optimized trip's traction forces through the forward model,
  // store the run as a trace file and price it like a measured trace.
  const auto trip = cs.scenario.trip(0);
  const Trajectory& traj = cs.result.trajectories.at(0);
  auto force = [&](double t) {
    auto it = std::upper_bound(traj.steps.begin(), traj.steps.end(), t + 1e-9,
                               [](double tt, const TrajectoryStep& s) { return tt < s.t0_s; });
    return it == traj.steps.begin() ? 0.0 : std::prev(it)->traction_n;
  };
  const double t0 = traj.start_s(), span = traj.end_s() - t0;
  const auto sim = integrate_forward(trip.train, trip.grade, force, 0.0, 0.0, 0.1, span, t0);
  write_trace_csv(sim, dir / "trace.csv");
  const auto trace = load_gps_trace(dir / "trace.csv", 0.1, 1);
  const auto eval = evaluate_profile_cost(trace.samples, trip, cs.prices, 0.1);
  const double rel = std::abs(eval.cost_usd - traj.cost_usd) / std::abs(traj.cost_usd);
  const double end_gap = std::abs(sim.back().x - trip.timetable.stations.back().x_m);
  return {rel <= 0.01, fmt::format("trace cost {:.2f} $ vs optimizer {:.2f} $, relative gap {:.2e} (tol 1e-2), "
                                   "{} samples, end position off by {:.1f} m",
                                   eval.cost_usd, traj.cost_usd, rel, sim.size(), end_gap)};
}

Verdict determinism(const CaseStudy& cs, const fs::path& dir) {
  const auto a = dir / "first";
  const auto b = dir / "second";
  ReportExtras extras{cs.min_work, {}};
  write_report(a, cs.scenario, cs.result, extras);

  // Independent second run of the whole pipeline.
  const CaseStudy again = run_case_study();
  write_report(b, again.scenario, again.result, ReportExtras{again.min_work, {}});

  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    if (slurp(entry.path()) != slurp(b / entry.path().filename())) ++differing;
  }
  std::size_t files_b = std::distance(fs::directory_iterator(b), fs::directory_iterator{});
  return {differing == 0 && files == files_b && files > 0,
          fmt::format("{} report files, {} differing between two full runs", files, differing)};
}

}  // namespace

int main() {
  const auto dir = fs::temp_directory_path() / "rdmm_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::cout << "case study run..." << std::endl;
  const CaseStudy cs = run_case_study();
  std::vector<Trajectory> extra;

  report("dispatch oracle equivalence", oracle_equivalence);
  report("KKT certificate", [&] { return kkt_certificates(cs); });
  report("marginal-cost pricing", marginal_cost_pricing);
  const Verdict uniform = [&] {
    try {
      return uniform_price_reduction(cs, extra);
    } catch (const std::exception& e) {
      return Verdict{false, fmt::format("threw: {}", e.what())};
    }
  }();
  report("train physics", [&] { return train_physics(cs, extra); });
  report("uniform-price reduction", [&] { return uniform; });
  report("dominance on the case study", [&] { return dominance(cs); });
  report("field-trace accounting", [&] { return field_trace(cs, dir); });
  report("determinism", [&] { return determinism(cs, dir); });

  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
