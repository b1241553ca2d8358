#include "rdmm/scenario_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "rdmm/errors.hpp"
#include "rdmm/log.hpp"

namespace rdmm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// CSV helpers

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Reads numeric rows of a CSV with the exact header `header`.  Blank lines
// are skipped; every other row must have header-many numeric fields.
std::vector<std::pair<std::size_t, std::vector<double>>> read_numeric_csv(std::istream& in,
                                                                          const std::string& header,
                                                                          const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto strip = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(in, line)) throw ScenarioError(source, "empty file");
  ++line_no;
  strip(line);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != header) {
    throw ScenarioError(fmt::format("{}:1", source), fmt::format("expected header '{}', got '{}'", header, line));
  }
  const std::size_t columns = split_fields(header).size();
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    strip(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_fields(line);
    if (fields.size() != columns) {
      throw ScenarioError(fmt::format("{}:{}", source, line_no),
                          fmt::format("expected {} fields, got {}", columns, fields.size()));
    }
    std::vector<double> values;
    for (std::size_t c = 0; c < columns; ++c) {
      auto v = parse_double(fields[c]);
      if (!v) {
        throw ScenarioError(fmt::format("{}:{}", source, line_no),
                            fmt::format("cannot parse '{}' as a number", fields[c]));
      }
      values.push_back(*v);
    }
    rows.emplace_back(line_no, std::move(values));
  }
  return rows;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path.string(), "cannot open file");
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ScenarioError(path.string(), "cannot write file");
  return out;
}

// ---------------------------------------------------------------------------
// JSON reading with field paths

class Node {
 public:
  Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *j_; }
  bool has(const char* key) const { return j_->is_object() && j_->contains(key) && !(*j_)[key].is_null(); }

  Node operator[](const char* key) const {
    if (!j_->is_object()) fail("expected an object");
    if (!has(key)) throw ScenarioError(child(key), "missing required field");
    return Node((*j_)[key], child(key));
  }
  Node operator[](std::size_t i) const { return Node((*j_)[i], fmt::format("{}[{}]", path_, i)); }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }
  bool is_number() const { return j_->is_number(); }
  bool is_array() const { return j_->is_array(); }
  bool is_object() const { return j_->is_object(); }
  bool is_string() const { return j_->is_string(); }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  long long integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<long long>();
  }
  std::uint64_t unsigned_integer() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long long>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }
  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].number());
    return out;
  }
  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].string());
    return out;
  }

  [[noreturn]] void fail(const std::string& message) const { throw ScenarioError(path_, message); }

 private:
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
};

template <typename T>
void read_opt(const Node& n, const char* key, T& out) {
  if (!n.has(key)) return;
  if constexpr (std::is_same_v<T, bool>) {
    out = n[key].boolean();
  } else if constexpr (std::is_integral_v<T>) {
    out = static_cast<T>(n[key].integer());
  } else {
    out = n[key].number();
  }
}

// A number broadcast over M or an array of exactly M numbers.
std::vector<double> per_interval(const Node& n, std::size_t M) {
  if (n.is_number()) return std::vector<double>(M, n.number());
  if (!n.is_array()) n.fail(fmt::format("expected a number or an array of M = {} numbers", M));
  auto v = n.numbers();
  if (v.size() != M) n.fail(fmt::format("has {} values, expected M = {}", v.size(), M));
  return v;
}

PiecewiseLinear read_piecewise(const Node& n, const char* value_key) {
  if (n.is_number()) return PiecewiseLinear(n.number());
  auto xs = n["x_m"].numbers();
  auto ys = n[value_key].numbers();
  try {
    return PiecewiseLinear(std::move(xs), std::move(ys));
  } catch (const InvalidArgument& e) {
    n.fail(e.what());
  }
}

TrainSpec read_train_spec(const Node& n) {
  TrainSpec t;
  if (n.has("preset")) {
    const auto preset = n["preset"].string();
    if (preset != "acela") throw ScenarioError(n["preset"].path(), fmt::format("unknown preset '{}'", preset));
    t = acela_train_spec();
  } else {
    for (const char* key : {"mass_kg", "p_max_w", "p_min_w", "a_min", "a_max", "v_max", "davis", "f_max_n", "f_min_n"}) {
      (void)n[key];  // required without a preset
    }
  }
  if (n.has("id")) t.id = n["id"].string();
  read_opt(n, "mass_kg", t.mass_kg);
  read_opt(n, "p_max_w", t.p_max_w);
  read_opt(n, "p_min_w", t.p_min_w);
  read_opt(n, "a_min", t.a_min);
  read_opt(n, "a_max", t.a_max);
  read_opt(n, "v_max", t.v_max);
  read_opt(n, "f_max_n", t.f_max_n);
  read_opt(n, "f_min_n", t.f_min_n);
  read_opt(n, "eta_traction", t.eta_traction);
  read_opt(n, "eta_regen", t.eta_regen);
  if (n.has("davis")) {
    Node d = n["davis"];
    t.davis = {d["a"].number(), d["b"].number(), d["c"].number()};
  }
  return t;
}

std::vector<std::vector<double>> read_passive_series(const Node& n, std::size_t M, const fs::path& base_dir) {
  std::vector<std::vector<double>> out;
  if (n.is_object()) {
    // One column per forecast instance, one row per interval.
    const fs::path file = base_dir / n["csv"].string();
    std::ifstream in = open_input(file);
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    in.clear();
    in.seekg(0);
    auto rows = read_numeric_csv(in, header, file.string());
    if (rows.size() != M) n.fail(fmt::format("{} has {} rows, expected M = {}", file.string(), rows.size(), M));
    const std::size_t cols = rows.empty() ? 0 : rows.front().second.size();
    out.assign(cols, std::vector<double>(M));
    for (std::size_t k = 0; k < M; ++k) {
      for (std::size_t c = 0; c < cols; ++c) out[c][k] = rows[k].second[c];
    }
    return out;
  }
  if (n.size() > 0 && n[std::size_t{0}].is_number()) return {n.numbers()};
  for (std::size_t j = 0; j < n.size(); ++j) out.push_back(n[j].numbers());
  return out;
}

void read_step_sizes(const Node& n, dispatch::StepSizes& s) {
  read_opt(n, "beta_y", s.beta_y);
  read_opt(n, "beta_lambda_e", s.beta_lambda_e);
  read_opt(n, "beta_lambda_th", s.beta_lambda_th);
  read_opt(n, "beta_mu", s.beta_mu);
  read_opt(n, "c_floor", s.c_floor);
  read_opt(n, "bound_weight", s.bound_weight);
  read_opt(n, "tol_k_y", s.tol_k_y);
  read_opt(n, "tol_k_lambda", s.tol_k_lambda);
  read_opt(n, "tol_j_y", s.tol_j_y);
  read_opt(n, "tol_j_lambda", s.tol_j_lambda);
  read_opt(n, "k_max", s.k_max);
  read_opt(n, "j_max", s.j_max);
  read_opt(n, "max_halvings", s.max_halvings);
  read_opt(n, "divergence_window", s.divergence_window);
}

void read_train_config(const Node& n, TrainSolverConfig& c) {
  read_opt(n, "dt_s", c.dt_s);
  read_opt(n, "multi_starts", c.multi_starts);
  read_opt(n, "price_smoothing_m", c.price_smoothing_m);
  read_opt(n, "parallel_legs", c.parallel_legs);
  if (n.has("nlp")) {
    Node o = n["nlp"];
    read_opt(o, "tol", c.nlp.tol);
    read_opt(o, "acceptable_tol", c.nlp.acceptable_tol);
    read_opt(o, "constraint_tol", c.nlp.constraint_tol);
    read_opt(o, "max_iterations", c.nlp.max_iterations);
    read_opt(o, "mu_init", c.nlp.mu_init);
    read_opt(o, "bound_push", c.nlp.bound_push);
  }
}

Scenario read_scenario(const Node& root, const fs::path& base_dir) {
  if (!root.is_object()) root.fail("scenario document must be a JSON object");
  Scenario s;
  s.schema_version = static_cast<int>(root["schema_version"].integer());
  if (s.schema_version != Scenario::kSchemaVersion) {
    throw ScenarioError("schema_version", fmt::format("unsupported schema version {} (expected {})",
                                                      s.schema_version, Scenario::kSchemaVersion));
  }
  if (root.has("name")) s.name = root["name"].string();
  if (root.has("seed")) s.seed = root["seed"].unsigned_integer();

  {
    Node h = root["horizon"];
    const auto start = h["start_s"].number();
    const auto m = h["intervals"].integer();
    const auto len = h["interval_length_s"].number();
    try {
      s.horizon = HorizonGrid(start, static_cast<int>(m), len);
    } catch (const InvalidArgument& e) {
      h.fail(e.what());
    }
  }
  const auto M = static_cast<std::size_t>(s.horizon.size());

  Node accs = root["accs"];
  for (std::size_t n = 0; n < accs.size(); ++n) {
    Node a = accs[n];
    AccDescriptor acc{a["id"].string(), a["start_m"].number(), a["end_m"].number(), {}, {}};
    if (a.has("agent_ids")) acc.agent_ids = a["agent_ids"].strings();
    if (a.has("passive_profile_ids")) acc.passive_profile_ids = a["passive_profile_ids"].strings();
    s.track.push_back(std::move(acc));
  }

  if (root.has("agents")) {
    Node agents = root["agents"];
    for (std::size_t i = 0; i < agents.size(); ++i) {
      Node a = agents[i];
      DispatchableAgent ag;
      ag.id = a["id"].string();
      try {
        ag.kind = agent_kind_from_string(a["kind"].string());
      } catch (const InvalidArgument& e) {
        a["kind"].fail(e.what());
      }
      ag.d_e = per_interval(a["d_e"], M);
      ag.d_th = per_interval(a["d_th"], M);
      ag.a = a.has("a") ? per_interval(a["a"], M) : std::vector<double>(M, 0.0);
      ag.b = a.has("b") ? per_interval(a["b"], M) : std::vector<double>(M, 0.0);
      ag.c = per_interval(a["c"], M);
      ag.y_min = per_interval(a["y_min"], M);
      ag.y_max = per_interval(a["y_max"], M);
      s.agents.push_back(std::move(ag));
    }
  }

  if (root.has("passive")) {
    Node passive = root["passive"];
    for (std::size_t i = 0; i < passive.size(); ++i) {
      Node p = passive[i];
      PassiveProfiles prof;
      prof.id = p["id"].string();
      if (p.has("renewable_kw")) prof.renewable_kw = read_passive_series(p["renewable_kw"], M, base_dir);
      if (p.has("electric_kw")) prof.electric_kw = read_passive_series(p["electric_kw"], M, base_dir);
      if (p.has("thermal_kw")) prof.thermal_kw = read_passive_series(p["thermal_kw"], M, base_dir);
      s.passive.push_back(std::move(prof));
    }
  }

  if (root.has("trains")) {
    Node trains = root["trains"];
    for (std::size_t l = 0; l < trains.size(); ++l) {
      Node t = trains[l];
      TrainRun run;
      run.train = read_train_spec(t["spec"]);
      Node stations = t["timetable"];
      for (std::size_t k = 0; k < stations.size(); ++k) {
        Node st = stations[k];
        Station station{st["name"].string(), st["x_m"].number(), st["earliest_arrival_s"].number(),
                        st["latest_departure_s"].number(), 0.0};
        read_opt(st, "dwell_s", station.dwell_s);
        run.timetable.stations.push_back(std::move(station));
      }
      if (t.has("grade")) run.grade.alpha = read_piecewise(t["grade"], "alpha_rad");
      if (t.has("speed_limit")) {
        Node sl = t["speed_limit"];
        if (sl.has("upper")) run.speed_limit.upper = read_piecewise(sl["upper"], "v_mps");
        if (sl.has("lower")) run.speed_limit.lower = read_piecewise(sl["lower"], "v_mps");
      }
      s.trains.push_back(std::move(run));
    }
  }

  if (root.has("prices")) {
    Node prices = root["prices"];
    for (std::size_t p = 0; p < prices.size(); ++p) {
      Node ps = prices[p];
      const auto acc_id = ps["acc_id"].string();
      if (ps.has("csv")) {
        s.prices.push_back(load_price_series(base_dir / ps["csv"].string(), acc_id));
      } else {
        s.prices.push_back({acc_id, ps["timestamps_s"].numbers(), ps["usd_per_mwh"].numbers()});
      }
    }
  }

  if (root.has("solver")) {
    Node sv = root["solver"];
    if (sv.has("dispatch")) read_step_sizes(sv["dispatch"], s.solver.dispatch);
    if (sv.has("train")) read_train_config(sv["train"], s.solver.train);
    read_opt(sv, "damping", s.solver.damping);
    read_opt(sv, "oscillation_damping", s.solver.oscillation_damping);
    read_opt(sv, "jobs", s.solver.jobs);
  }

  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// JSON writing

json per_interval_json(const std::vector<double>& v) {
  if (!v.empty() && std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return v.front();
  return v;
}

json piecewise_json(const PiecewiseLinear& f, const char* value_key) {
  return {{"x_m", f.xs()}, {value_key, f.ys()}};
}

json train_spec_json(const TrainSpec& t) {
  return {{"id", t.id},
          {"mass_kg", t.mass_kg},
          {"p_max_w", t.p_max_w},
          {"p_min_w", t.p_min_w},
          {"a_min", t.a_min},
          {"a_max", t.a_max},
          {"v_max", t.v_max},
          {"davis", {{"a", t.davis.a}, {"b", t.davis.b}, {"c", t.davis.c}}},
          {"f_max_n", t.f_max_n},
          {"f_min_n", t.f_min_n},
          {"eta_traction", t.eta_traction},
          {"eta_regen", t.eta_regen}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario documents

Scenario parse_scenario(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("", fmt::format("invalid JSON: {}", e.what()));
  }
  return read_scenario(Node(doc, ""), base_dir);
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.parent_path());
}

std::string scenario_to_json(const Scenario& s) {
  json doc;
  doc["schema_version"] = s.schema_version;
  doc["name"] = s.name;
  doc["seed"] = s.seed;
  doc["horizon"] = {{"start_s", s.horizon.start()},
                    {"intervals", s.horizon.size()},
                    {"interval_length_s", s.horizon.interval_length()}};
  doc["accs"] = json::array();
  for (const auto& a : s.track) {
    doc["accs"].push_back({{"id", a.id},
                           {"start_m", a.start_m},
                           {"end_m", a.end_m},
                           {"agent_ids", a.agent_ids},
                           {"passive_profile_ids", a.passive_profile_ids}});
  }
  doc["agents"] = json::array();
  for (const auto& a : s.agents) {
    doc["agents"].push_back({{"id", a.id},
                             {"kind", std::string(to_string(a.kind))},
                             {"d_e", per_interval_json(a.d_e)},
                             {"d_th", per_interval_json(a.d_th)},
                             {"a", per_interval_json(a.a)},
                             {"b", per_interval_json(a.b)},
                             {"c", per_interval_json(a.c)},
                             {"y_min", per_interval_json(a.y_min)},
                             {"y_max", per_interval_json(a.y_max)}});
  }
  doc["passive"] = json::array();
  for (const auto& p : s.passive) {
    json entry = {{"id", p.id}};
    if (!p.renewable_kw.empty()) entry["renewable_kw"] = p.renewable_kw;
    if (!p.electric_kw.empty()) entry["electric_kw"] = p.electric_kw;
    if (!p.thermal_kw.empty()) entry["thermal_kw"] = p.thermal_kw;
    doc["passive"].push_back(std::move(entry));
  }
  doc["trains"] = json::array();
  for (const auto& t : s.trains) {
    json stations = json::array();
    for (const auto& st : t.timetable.stations) {
      stations.push_back({{"name", st.name},
                          {"x_m", st.x_m},
                          {"earliest_arrival_s", st.earliest_arrival_s},
                          {"latest_departure_s", st.latest_departure_s},
                          {"dwell_s", st.dwell_s}});
    }
    json entry = {{"spec", train_spec_json(t.train)}, {"timetable", stations}};
    if (!t.grade.alpha.xs().empty()) entry["grade"] = piecewise_json(t.grade.alpha, "alpha_rad");
    json limits = json::object();
    if (!t.speed_limit.upper.xs().empty()) limits["upper"] = piecewise_json(t.speed_limit.upper, "v_mps");
    if (!t.speed_limit.lower.xs().empty()) limits["lower"] = piecewise_json(t.speed_limit.lower, "v_mps");
    if (!limits.empty()) entry["speed_limit"] = limits;
    doc["trains"].push_back(std::move(entry));
  }
  doc["prices"] = json::array();
  for (const auto& p : s.prices) {
    doc["prices"].push_back({{"acc_id", p.acc_id}, {"timestamps_s", p.timestamps_s}, {"usd_per_mwh", p.usd_per_mwh}});
  }
  const auto& d = s.solver.dispatch;
  const auto& t = s.solver.train;
  doc["solver"] = {
      {"dispatch",
       {{"beta_y", d.beta_y}, {"beta_lambda_e", d.beta_lambda_e}, {"beta_lambda_th", d.beta_lambda_th},
        {"beta_mu", d.beta_mu}, {"c_floor", d.c_floor}, {"bound_weight", d.bound_weight},
        {"tol_k_y", d.tol_k_y}, {"tol_k_lambda", d.tol_k_lambda}, {"tol_j_y", d.tol_j_y},
        {"tol_j_lambda", d.tol_j_lambda}, {"k_max", d.k_max}, {"j_max", d.j_max},
        {"max_halvings", d.max_halvings}, {"divergence_window", d.divergence_window}}},
      {"train",
       {{"dt_s", t.dt_s}, {"multi_starts", t.multi_starts}, {"price_smoothing_m", t.price_smoothing_m},
        {"parallel_legs", t.parallel_legs},
        {"nlp",
         {{"tol", t.nlp.tol}, {"acceptable_tol", t.nlp.acceptable_tol}, {"constraint_tol", t.nlp.constraint_tol},
          {"max_iterations", t.nlp.max_iterations}, {"mu_init", t.nlp.mu_init}, {"bound_push", t.nlp.bound_push}}}}},
      {"damping", s.solver.damping},
      {"oscillation_damping", s.solver.oscillation_damping},
      {"jobs", s.solver.jobs}};
  return doc.dump(2) + "\n";
}

void write_scenario(const Scenario& scenario, const fs::path& path) {
  std::ofstream out = open_output(path);
  out << scenario_to_json(scenario);
  if (!out) throw ScenarioError(path.string(), "write failed");
}

// ---------------------------------------------------------------------------
// Price series

PriceSeries parse_price_csv(std::istream& in, const std::string& acc_id, const std::string& source) {
  PriceSeries series{acc_id, {}, {}};
  for (const auto& [line, row] : read_numeric_csv(in, "timestamp_s,price_usd_per_mwh", source)) {
    if (!series.timestamps_s.empty() && !(row[0] > series.timestamps_s.back())) {
      throw ScenarioError(fmt::format("{}:{}", source, line), "timestamps not strictly increasing");
    }
    series.timestamps_s.push_back(row[0]);
    series.usd_per_mwh.push_back(row[1]);
  }
  if (series.timestamps_s.empty()) throw ScenarioError(source, "no price rows");
  return series;
}

PriceSeries load_price_series(const fs::path& path, const std::string& acc_id) {
  std::ifstream in = open_input(path);
  return parse_price_csv(in, acc_id, path.string());
}

void write_price_series(const PriceSeries& series, const fs::path& path) {
  std::ofstream out = open_output(path);
  out << "timestamp_s,price_usd_per_mwh\n";
  for (std::size_t i = 0; i < series.timestamps_s.size(); ++i) {
    out << fmt::format("{},{}\n", series.timestamps_s[i], series.usd_per_mwh[i]);
  }
  if (!out) throw ScenarioError(path.string(), "write failed");
}

void check_coverage(const PriceSeries& series, const HorizonGrid& grid) {
  if (!series.covers(grid.start(), grid.end())) {
    throw ScenarioError(series.acc_id, fmt::format("price series covers [{}, {}) but the horizon is [{}, {})",
                                                   series.timestamps_s.front(), series.coverage_end(),
                                                   grid.start(), grid.end()));
  }
}

// ---------------------------------------------------------------------------
// GPS traces

std::vector<RawTraceSample> parse_trace_csv(std::istream& in, const std::string& source) {
  std::vector<RawTraceSample> out;
  for (const auto& [line, row] : read_numeric_csv(in, "t_s,x_m,v_mps", source)) {
    if (!out.empty() && !(row[0] > out.back().t_s)) {
      throw ScenarioError(fmt::format("{}:{}", source, line), "time not strictly increasing");
    }
    out.push_back({row[0], row[1], row[2]});
  }
  return out;
}

GpsTrace condition_trace(std::span<const RawTraceSample> raw, double dt_s, int window) {
  if (raw.size() < kMinTraceSamples) {
    throw InvalidArgument(fmt::format("trace has {} samples, need at least {}", raw.size(), kMinTraceSamples));
  }
  if (!(dt_s > 0.0)) throw InvalidArgument("trace resampling step must be positive");
  if (window < 1) throw InvalidArgument("smoothing window must be at least one sample");
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (!(raw[i].t_s > raw[i - 1].t_s)) {
      throw InvalidArgument(fmt::format("trace time not strictly increasing at sample {}", i));
    }
  }

  const double t0 = raw.front().t_s;
  const auto n = static_cast<std::size_t>(std::floor((raw.back().t_s - t0) / dt_s + 1e-9)) + 1;
  GpsTrace out;
  out.samples.resize(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) * dt_s;
    while (seg + 2 < raw.size() && raw[seg + 1].t_s <= t) ++seg;
    const auto& a = raw[seg];
    const auto& b = raw[seg + 1];
    const double w = std::clamp((t - a.t_s) / (b.t_s - a.t_s), 0.0, 1.0);
    out.samples[i] = {t, a.x_m + w * (b.x_m - a.x_m), a.v_mps + w * (b.v_mps - a.v_mps), 0.0};
  }

  const auto half = static_cast<std::ptrdiff_t>((window - 1) / 2);
  const auto len = static_cast<std::ptrdiff_t>(n);
  std::vector<double> smooth(n);
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    // Symmetric window, shrunk near the ends so it stays centered.
    const std::ptrdiff_t h = std::min({half, i, len - 1 - i});
    double sum = 0.0;
    for (std::ptrdiff_t k = i - h; k <= i + h; ++k) sum += out.samples[static_cast<std::size_t>(k)].v;
    smooth[static_cast<std::size_t>(i)] = sum / static_cast<double>(2 * h + 1);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (smooth[i] < 0.0) {
      smooth[i] = 0.0;
      ++out.clamped_speeds;
    }
    out.samples[i].v = smooth[i];
  }
  if (out.clamped_speeds > 0) log::warn("trace: {} negative speeds clamped to zero", out.clamped_speeds);
  for (std::size_t i = 0; i < n; ++i) {
    if (n == 1) break;
    if (i == 0) {
      out.samples[i].a = (smooth[1] - smooth[0]) / dt_s;
    } else if (i + 1 == n) {
      out.samples[i].a = (smooth[i] - smooth[i - 1]) / dt_s;
    } else {
      out.samples[i].a = (smooth[i + 1] - smooth[i - 1]) / (2.0 * dt_s);
    }
  }
  return out;
}

GpsTrace load_gps_trace(const fs::path& path, double dt_s, int window) {
  std::ifstream in = open_input(path);
  auto raw = parse_trace_csv(in, path.string());
  try {
    return condition_trace(raw, dt_s, window);
  } catch (const InvalidArgument& e) {
    throw ScenarioError(path.string(), e.what());
  }
}

void write_trace_csv(std::span<const KinematicSample> samples, const fs::path& path) {
  std::ofstream out = open_output(path);
  out << "t_s,x_m,v_mps\n";
  for (const auto& s : samples) out << fmt::format("{},{},{}\n", s.t, s.x, s.v);
  if (!out) throw ScenarioError(path.string(), "write failed");
}

}  // namespace rdmm
