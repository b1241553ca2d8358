#include "rdmm/report.hpp"

#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>

#include <fmt/format.h>

#include "rdmm/errors.hpp"
#include "rdmm/units.hpp"

namespace rdmm {

namespace fs = std::filesystem;

namespace {

std::string strip_negative_zero(std::string s) {
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

class CsvFile {
 public:
  CsvFile(const fs::path& path, std::string_view header) : path_(path) {
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
    }
    out_.open(path, std::ios::binary);
    if (!out_) throw ScenarioError(path.string(), "cannot write file");
    out_ << header << '\n';
  }
  ~CsvFile() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw ScenarioError(path_.string(), "write failed");
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

double usd_per_kwh_to_mwh(double p) { return p * 1e3; }

}  // namespace

std::string trajectory_file_name(const std::string& train_id, const std::string& suffix) {
  std::string stem;
  for (char c : train_id) stem += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  if (stem.empty()) stem = "train";
  return "trajectory_" + stem + suffix + ".csv";
}

std::string format_cost(double usd) { return strip_negative_zero(fmt::format("{:.2f}", usd)); }

std::string format_quantity(double value) { return strip_negative_zero(fmt::format("{:.6g}", value)); }

void write_trajectory_csv(const Trajectory& traj, std::span<const AccDescriptor> track,
                          const PriceFunction& prices, const fs::path& path) {
  CsvFile csv(path, "t_s,price_usd_per_mwh,x_m,v_mps,power_mw");
  for (std::size_t i = 0; i < traj.nodes.size(); ++i) {
    const auto& n = traj.nodes[i];
    const double p = i < traj.steps.size() ? traj.steps[i].power_w : 0.0;
    const double price = prices.at(n.t, acc_of_position(track, n.x));
    csv.row(format_quantity(n.t), format_quantity(units::usd_per_joule_to_usd_per_mwh(price)), format_quantity(n.x),
            format_quantity(n.v), format_quantity(p / 1e6));
  }
}

void write_dispatch_tables(const fs::path& dir, const Scenario& scenario,
                           std::span<const dispatch::DispatchResult> results) {
  const HorizonGrid& grid = scenario.horizon;
  CsvFile prices(dir / "dispatch_prices.csv",
                 "acc_id,interval,t_start_s,lambda_e_usd_per_mwh,lambda_th_usd_per_mwh,residual_e_kwh,"
                 "residual_th_kwh,converged,iterations");
  CsvFile setpoints(dir / "dispatch_setpoints.csv", "acc_id,agent_id,interval,y_kwh");
  for (std::size_t n = 0; n < results.size(); ++n) {
    const auto& r = results[n];
    const auto& acc = scenario.track.at(n);
    for (int k = 0; k < grid.size(); ++k) {
      prices.row(acc.id, k + 1, format_quantity(grid.begin_of(k)), format_quantity(usd_per_kwh_to_mwh(r.lambda_e[k])),
                 format_quantity(usd_per_kwh_to_mwh(r.lambda_th[k])), format_quantity(r.residual_e[k]),
                 format_quantity(r.residual_th[k]), r.converged ? "true" : "false", r.iterations);
    }
    for (std::size_t i = 0; i < acc.agent_ids.size(); ++i) {
      for (int k = 0; k < grid.size(); ++k) {
        setpoints.row(acc.id, acc.agent_ids[i], k + 1, format_quantity(r.y[i][k]));
      }
    }
  }
}

void write_report(const fs::path& dir, const Scenario& scenario, const RdmmResult& result,
                  const ReportExtras& extras) {
  const Settlement& s = result.settlement;
  const HorizonGrid& grid = s.horizon;

  {
    CsvFile csv(dir / "settlement.csv",
                "acc_id,interval,t_start_s,lambda_e_usd_per_mwh,lambda_th_usd_per_mwh,traction_kw,"
                "passive_electric_kw,passive_thermal_kw,train_payment_usd,passive_payment_usd,agent_revenue_usd");
    for (std::size_t n = 0; n < s.acc_ids.size(); ++n) {
      for (int k = 0; k < grid.size(); ++k) {
        double trains = 0.0, agents = 0.0;
        for (const auto& t : s.trains) trains += t.payment_usd[n][k];
        for (const auto& a : s.agents) {
          if (a.acc == n) agents += a.revenue_usd[k];
        }
        csv.row(s.acc_ids[n], k + 1, format_quantity(grid.begin_of(k)),
                format_quantity(usd_per_kwh_to_mwh(s.prices[n].electric[k])),
                format_quantity(usd_per_kwh_to_mwh(s.prices[n].thermal[k])), format_quantity(s.traction_kw[n][k]),
                format_quantity(s.passive_electric_kw[n][k]), format_quantity(s.passive_thermal_kw[n][k]),
                format_cost(trains), format_cost(s.passive_payment_usd[n][k]), format_cost(agents));
      }
    }
  }
  {
    CsvFile csv(dir / "agents.csv", "agent_id,acc_id,interval,y_kwh,revenue_usd");
    for (const auto& a : s.agents) {
      for (int k = 0; k < grid.size(); ++k) {
        csv.row(a.agent_id, s.acc_ids[a.acc], k + 1, format_quantity(a.y_kwh[k]), format_cost(a.revenue_usd[k]));
      }
    }
  }
  {
    CsvFile csv(dir / "iterations.csv",
                "j,delta_y,delta_lambda,train_cost_usd,damping,oscillation,cost_increase,markets_converged");
    for (const auto& it : result.log) {
      std::size_t ok = 0;
      for (const auto& d : it.dispatch) ok += d.converged ? 1 : 0;
      csv.row(it.j, std::isfinite(it.delta_y) ? format_quantity(it.delta_y) : "",
              std::isfinite(it.delta_lambda) ? format_quantity(it.delta_lambda) : "", format_cost(it.train_cost_usd),
              format_quantity(it.damping), it.oscillation ? "true" : "false", it.cost_increase ? "true" : "false",
              fmt::format("{}/{}", ok, it.dispatch.size()));
    }
  }
  {
    CsvFile csv(dir / "summary.csv", "train_id,profile,cost_usd,work_kwh,energy_kwh,cost_vs_min_work_pct");
    for (std::size_t l = 0; l < s.trains.size(); ++l) {
      const auto& t = s.trains[l];
      const Trajectory* mw = l < extras.min_work.size() ? &extras.min_work[l] : nullptr;
      auto pct = [&](double cost) {
        if (mw == nullptr || mw->cost_usd == 0.0) return std::string();
        return format_cost(100.0 * (cost - mw->cost_usd) / std::abs(mw->cost_usd));
      };
      csv.row(t.train_id, "rdmm", format_cost(t.trip_cost_usd), format_quantity(units::joules_to_kwh(t.work_j)),
              format_quantity(units::joules_to_kwh(t.energy_j)), pct(t.trip_cost_usd));
      if (mw != nullptr) {
        csv.row(t.train_id, "min-work", format_cost(mw->cost_usd), format_quantity(units::joules_to_kwh(mw->work_j)),
                format_quantity(units::joules_to_kwh(mw->energy_j)), pct(mw->cost_usd));
      }
      if (l < extras.traces.size()) {
        const auto& tr = extras.traces[l];
        csv.row(t.train_id, "trace", format_cost(tr.cost_usd), format_quantity(units::joules_to_kwh(tr.work_j)),
                format_quantity(units::joules_to_kwh(tr.energy_j)), pct(tr.cost_usd));
      }
    }
  }
  {
    CsvFile csv(dir / "run.csv", "key,value");
    csv.row("scenario", scenario.name);
    csv.row("converged", s.converged ? "true" : "false");
    csv.row("forecast_iterations", result.log.size());
    csv.row("settled_iterate", s.iterations);
    csv.row("horizon_start_s", format_quantity(grid.start()));
    csv.row("intervals", grid.size());
    csv.row("interval_length_s", format_quantity(grid.interval_length()));
    csv.row("payment_imbalance_usd", format_cost(s.payment_imbalance()));
    csv.row("total_train_cost_usd", format_cost(s.total_train_cost()));
  }

  if (s.trains.empty()) return;
  std::vector<std::vector<double>> lambda;
  for (const auto& p : s.prices) lambda.push_back(p.electric);
  const auto prices = compose_train_prices(lambda, grid);
  for (std::size_t l = 0; l < result.trajectories.size(); ++l) {
    const std::string& id = result.trajectories[l].train_id;
    write_trajectory_csv(result.trajectories[l], scenario.track, prices, dir / trajectory_file_name(id));
    if (l < extras.min_work.size()) {
      write_trajectory_csv(extras.min_work[l], scenario.track, prices, dir / trajectory_file_name(id, "_min_work"));
    }
    if (l < extras.traces.size()) {
      write_trajectory_csv(extras.traces[l], scenario.track, prices, dir / trajectory_file_name(id, "_trace"));
    }
  }
}

}  // namespace rdmm
