#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "rdmm/coordinator.hpp"
#include "rdmm/errors.hpp"
#include "rdmm/log.hpp"
#include "rdmm/nec_scenario.hpp"
#include "rdmm/parallel.hpp"
#include "rdmm/report.hpp"
#include "rdmm/scenario_io.hpp"
#include "rdmm/units.hpp"

namespace rdmm::cli {

namespace fs = std::filesystem;

namespace {

void resize_hold(std::vector<double>& v, std::size_t n) {
  if (v.empty()) return;
  v.resize(n, v.back());
}

TrainSolverConfig train_config(const Scenario& s) {
  TrainSolverConfig config = s.solver.train;
  config.seed = s.seed;
  const int jobs = resolve_jobs(s.solver.jobs);
  config.parallel_legs = config.parallel_legs && jobs > 1 && s.trains.size() < static_cast<std::size_t>(jobs);
  return config;
}

GpsTrace read_trace(const fs::path& path, double dt_s, std::ostream& out) {
  auto trace = load_gps_trace(path, dt_s);
  if (trace.clamped_speeds > 0) {
    out << fmt::format("trace: {} negative speeds clamped to zero\n", trace.clamped_speeds);
  }
  return trace;
}

void write_train_summary(const fs::path& path, const std::vector<std::pair<std::string, Trajectory>>& rows) {
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw ScenarioError(path.string(), "cannot write file");
  csv << "train_id,profile,cost_usd,work_kwh,energy_kwh\n";
  for (const auto& [profile, t] : rows) {
    csv << t.train_id << ',' << profile << ',' << format_cost(t.cost_usd) << ','
        << format_quantity(units::joules_to_kwh(t.work_j)) << ',' << format_quantity(units::joules_to_kwh(t.energy_j))
        << '\n';
  }
}

void print_trip(std::ostream& out, const std::string& profile, const Trajectory& t) {
  out << fmt::format("{} ({}): cost {} $, work {} kWh, energy {} kWh\n", t.train_id, profile,
                     format_cost(t.cost_usd), format_quantity(units::joules_to_kwh(t.work_j)),
                     format_quantity(units::joules_to_kwh(t.energy_j)));
}

// Largest per-agent change relative to max(1, |y|), and largest price change
// relative to the largest oracle price.
std::pair<double, double> deviation(const dispatch::DispatchResult& r, const dispatch::DispatchResult& oracle) {
  double dy = 0.0, dl = 0.0, scale = 1e-9;
  for (std::size_t i = 0; i < r.y.size(); ++i) {
    for (std::size_t k = 0; k < r.y[i].size(); ++k) {
      dy = std::max(dy, std::abs(r.y[i][k] - oracle.y[i][k]) / std::max(1.0, std::abs(oracle.y[i][k])));
    }
  }
  for (std::size_t k = 0; k < r.lambda_e.size(); ++k) {
    scale = std::max({scale, std::abs(oracle.lambda_e[k]), std::abs(oracle.lambda_th[k])});
    dl = std::max({dl, std::abs(r.lambda_e[k] - oracle.lambda_e[k]), std::abs(r.lambda_th[k] - oracle.lambda_th[k])});
  }
  return {dy, dl / scale};
}

int cmd_dispatch(const Scenario& s, const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto M = static_cast<std::size_t>(s.horizon.size());
  const std::size_t N = s.track.size();
  const auto bootstrap = bootstrap_prices(s);

  // Train forecasts are the trips optimized against the price series.
  std::vector<std::vector<double>> traction(N, std::vector<double>(M, 0.0));
  if (!s.trains.empty()) {
    const auto prices = compose_train_prices(bootstrap, s.horizon);
    const auto config = train_config(s);
    std::vector<Trajectory> trips(s.trains.size());
    parallel_for(trips.size(), s.solver.jobs,
                 [&](std::size_t l) { trips[l] = optimize_trip(s.trip(l), prices, config); });
    traction = aggregate_traction(trips, s.horizon, s.track);
  }

  std::vector<dispatch::DispatchResult> results(N);
  std::vector<std::vector<DispatchableAgent>> agents(N);
  std::vector<dispatch::NetLoads> loads(N);
  parallel_for(N, s.solver.jobs, [&](std::size_t n) {
    agents[n] = acc_agents(s, n);
    loads[n] = acc_passive_loads(s, n, 0);
    for (std::size_t k = 0; k < M; ++k) loads[n].electric_kw[k] += traction[n][k];
    dispatch::PriceDuple init{bootstrap[n], std::vector<double>(M, 0.0)};
    results[n] = dispatch::negotiate(agents[n], loads[n], s.solver.dispatch, init);
  });
  fs::create_directories(c.out);
  write_dispatch_tables(c.out, s, results);

  bool all_converged = true;
  for (std::size_t n = 0; n < N; ++n) {
    const auto& r = results[n];
    double residual = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      residual = std::max({residual, std::abs(r.residual_e[k]), std::abs(r.residual_th[k])});
    }
    out << fmt::format("{}: {} after {} rounds, max residual {} kWh\n", s.track[n].id,
                       r.converged ? "converged" : "NOT converged", r.iterations, format_quantity(residual));
    if (!r.converged) {
      all_converged = false;
      for (std::size_t k = 0; k < M; ++k) {
        err << fmt::format("  {} interval {}: residual electric {} kWh, thermal {} kWh\n", s.track[n].id, k + 1,
                           format_quantity(r.residual_e[k]), format_quantity(r.residual_th[k]));
      }
    }
    if (c.oracle) {
      const auto [dy, dl] = deviation(r, dispatch::qp_oracle(agents[n], loads[n]));
      out << fmt::format("{}: oracle deviation y {:.3e}, lambda {:.3e} (relative)\n", s.track[n].id, dy, dl);
    }
  }
  if (!all_converged) {
    err << "error: negotiation did not converge\n";
    return kSolverError;
  }
  return kOk;
}

int cmd_train(const Scenario& s, const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (s.trains.empty()) {
    err << "error: scenario has no trains\n";
    return kInputError;
  }
  const auto prices = compose_train_prices(bootstrap_prices(s), s.horizon);
  const auto config = train_config(s);
  fs::create_directories(c.out);

  std::vector<std::pair<std::string, Trajectory>> rows;
  if (c.trace) {
    // A trace belongs to the first train of the scenario.
    const auto trace = read_trace(*c.trace, config.dt_s, out);
    auto t = evaluate_profile_cost(trace.samples, s.trip(0), prices, config.dt_s);
    write_trajectory_csv(t, s.track, prices, c.out / trajectory_file_name(t.train_id, "_trace"));
    rows.emplace_back("trace", std::move(t));
  } else {
    std::vector<Trajectory> trips(s.trains.size());
    parallel_for(trips.size(), s.solver.jobs, [&](std::size_t l) {
      const auto trip = s.trip(l);
      if (c.min_work) {
        trips[l] = min_work_profile(trip, config);
        price_trajectory(trips[l], trip.track, prices);
      } else {
        trips[l] = optimize_trip(trip, prices, config);
      }
    });
    const std::string profile = c.min_work ? "min-work" : "optimized";
    for (auto& t : trips) {
      write_trajectory_csv(t, s.track, prices, c.out / trajectory_file_name(t.train_id, c.min_work ? "_min_work" : ""));
      rows.emplace_back(profile, std::move(t));
    }
  }
  for (const auto& [profile, t] : rows) print_trip(out, profile, t);
  write_train_summary(c.out / "train_summary.csv", rows);
  return kOk;
}

int cmd_rdmm(const Scenario& s, const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.trace && s.trains.empty()) {
    err << "error: --trace needs a scenario with a train\n";
    return kInputError;
  }
  const RdmmResult result = run_rdmm(s);
  const Settlement& st = result.settlement;

  ReportExtras extras;
  std::vector<std::vector<double>> lambda;
  for (const auto& p : st.prices) lambda.push_back(p.electric);
  const auto prices = compose_train_prices(lambda, s.horizon);
  const auto config = train_config(s);
  extras.min_work.resize(s.trains.size());
  parallel_for(s.trains.size(), s.solver.jobs, [&](std::size_t l) {
    const auto trip = s.trip(l);
    extras.min_work[l] = min_work_profile(trip, config);
    price_trajectory(extras.min_work[l], trip.track, prices);
  });
  if (c.trace) {
    const auto trace = read_trace(*c.trace, config.dt_s, out);
    extras.traces.push_back(evaluate_profile_cost(trace.samples, s.trip(0), prices, config.dt_s));
  }
  fs::create_directories(c.out);
  write_report(c.out, s, result, extras);

  out << fmt::format("forecast loop: {} after {} iterations, settled iterate {}\n",
                     st.converged ? "converged" : "NOT converged", result.log.size(), st.iterations);
  for (std::size_t l = 0; l < st.trains.size(); ++l) {
    const auto& t = st.trains[l];
    const double mw = extras.min_work[l].cost_usd;
    out << fmt::format("{}: rdmm {} $, min-work {} $", t.train_id, format_cost(t.trip_cost_usd), format_cost(mw));
    if (mw != 0.0) out << fmt::format(" ({:.2f}% lower)", 100.0 * (mw - t.trip_cost_usd) / std::abs(mw));
    if (l < extras.traces.size()) out << fmt::format(", trace {} $", format_cost(extras.traces[l].cost_usd));
    out << '\n';
  }
  out << fmt::format("payment imbalance {} $\n", format_cost(st.payment_imbalance()));
  if (!st.converged) {
    err << "error: forecast loop did not converge; the closest iterate was written\n";
    return kSolverError;
  }
  return kOk;
}

int cmd_nec(const RunConfig& c, std::ostream& out) {
  NecOptions options;
  options.with_train = !c.no_train;
  const auto prices = synthetic_nec_prices();
  Scenario s = build_nec_scenario(prices, options);
  apply_overrides(s, c);
  s.validate();

  // Inline document, then point the price entries at CSV files.
  auto doc = nlohmann::ordered_json::parse(scenario_to_json(s));
  auto& refs = doc["prices"] = nlohmann::ordered_json::array();
  for (const auto& p : s.prices) {
    const std::string rel = "prices/" + p.acc_id + ".csv";
    write_price_series(p, c.out / rel);
    refs.push_back({{"acc_id", p.acc_id}, {"csv", rel}});
  }
  std::ofstream file(c.out / "scenario.json", std::ios::binary);
  file << doc.dump(2) << '\n';
  if (!file) throw ScenarioError((c.out / "scenario.json").string(), "write failed");
  out << fmt::format("wrote {} and {} price series\n", (c.out / "scenario.json").string(), s.prices.size());
  return kOk;
}

void add_overrides(CLI::App& app, RunConfig& c, std::vector<std::function<void()>>& finish) {
  auto opt = [&]<typename T>(const std::string& name, std::optional<T>& target, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* o = app.add_option(name, *value, help);
    finish.push_back([o, value, &target] {
      if (o->count() > 0) target = *value;
    });
    return o;
  };
  opt("--dt", c.dt_s, "train time step [s]")->check(CLI::Range(0.1, 60.0));
  opt("--intervals", c.intervals, "dispatch intervals M")->check(CLI::Range(1, 288));
  opt("--interval-len", c.interval_length_s, "dispatch interval length [s]")->check(CLI::PositiveNumber);
  opt("--tol-k", c.tol_k, "negotiation exit tolerance")->check(CLI::PositiveNumber);
  opt("--tol-j", c.tol_j, "forecast-loop exit tolerance")->check(CLI::PositiveNumber);
  opt("--damping", c.damping, "train price damping in (0, 1]")->check(CLI::Range(1e-12, 1.0));
  opt("--jobs", c.jobs, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  opt("--seed", c.seed, "multi-start seed");
}

}  // namespace

void apply_overrides(Scenario& s, const RunConfig& c) {
  if (c.dt_s) s.solver.train.dt_s = *c.dt_s;
  if (c.tol_k) s.solver.dispatch.tol_k_y = s.solver.dispatch.tol_k_lambda = *c.tol_k;
  if (c.tol_j) s.solver.dispatch.tol_j_y = s.solver.dispatch.tol_j_lambda = *c.tol_j;
  if (c.damping) s.solver.damping = *c.damping;
  if (c.jobs) s.solver.jobs = *c.jobs;
  if (c.seed) s.seed = *c.seed;

  if (c.intervals || c.interval_length_s) {
    const int M = c.intervals.value_or(s.horizon.size());
    const double length = c.interval_length_s.value_or(s.horizon.interval_length());
    const double scale = length / s.horizon.interval_length();
    const auto n = static_cast<std::size_t>(M);
    for (auto& a : s.agents) {
      for (auto* v : {&a.d_e, &a.d_th, &a.a, &a.b, &a.c, &a.y_min, &a.y_max}) resize_hold(*v, n);
      for (auto& y : a.y_min) y *= scale;
      for (auto& y : a.y_max) y *= scale;
    }
    for (auto& p : s.passive) {
      for (auto* set : {&p.renewable_kw, &p.electric_kw, &p.thermal_kw}) {
        for (auto& v : *set) resize_hold(v, n);
      }
    }
    s.horizon = HorizonGrid(s.horizon.start(), M, length);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Railway dynamic market mechanism: DER dispatch coupled with train trajectory optimization", "rdmm"};
  app.require_subcommand(1);
  RunConfig c;
  std::vector<std::function<void()>> finish;

  auto* dispatch_cmd = app.add_subcommand("dispatch", "negotiate each ACC market against fixed train forecasts");
  auto* train_cmd = app.add_subcommand("train", "optimize trips against the scenario price series");
  auto* rdmm_cmd = app.add_subcommand("rdmm", "full market run with settlement and baseline comparison");
  auto* nec_cmd = app.add_subcommand("nec", "write the Northeast Corridor case-study scenario");
  for (auto* sub : {dispatch_cmd, train_cmd, rdmm_cmd}) {
    sub->add_option("--scenario", c.scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  }
  for (auto* sub : {dispatch_cmd, train_cmd, rdmm_cmd, nec_cmd}) {
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
    add_overrides(*sub, c, finish);
  }
  dispatch_cmd->add_flag("--oracle", c.oracle, "compare with a direct QP solve");
  auto* min_work = train_cmd->add_flag("--min-work", c.min_work, "work-minimal baseline instead of price-optimal");
  auto trace = std::make_shared<std::string>();
  auto* trace_train = train_cmd->add_option("--trace", *trace, "evaluate a GPS trace CSV for the first train")
                          ->check(CLI::ExistingFile);
  trace_train->excludes(min_work);
  auto* trace_rdmm = rdmm_cmd->add_option("--trace", *trace, "also price a GPS trace CSV for the first train")
                         ->check(CLI::ExistingFile);
  nec_cmd->add_flag("--no-train", c.no_train, "leave the train out");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  for (auto& f : finish) f();
  if (trace_train->count() + trace_rdmm->count() > 0) c.trace = *trace;
  c.subcommand = app.get_subcommands().front()->get_name();

  try {
    if (c.subcommand == "nec") return cmd_nec(c, out);
    Scenario s = load_scenario(c.scenario);
    apply_overrides(s, c);
    s.validate();
    log::info("scenario '{}': {} ACCs, {} agents, {} trains, M = {}", s.name, s.track.size(), s.agents.size(),
              s.trains.size(), s.horizon.size());
    if (c.subcommand == "dispatch") return cmd_dispatch(s, c, out, err);
    if (c.subcommand == "train") return cmd_train(s, c, out, err);
    return cmd_rdmm(s, c, out, err);
  } catch (const ScenarioError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const OutOfRange& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const InfeasibleError& e) {
    err << "error: infeasible: " << e.what() << '\n';
    return kSolverError;
  } catch (const OptimizationError& e) {
    err << "error: " << e.what() << '\n';
    return kSolverError;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kSolverError;
  }
}

}  // namespace rdmm::cli
