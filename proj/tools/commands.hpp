#pragma once

// Command implementations behind the hjbqvi executable. Kept in a header so the
// test suite can drive them without spawning processes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjbqvi/hjbqvi.hpp"

namespace hjbqvi::cli {

using json = nlohmann::ordered_json;

struct RunConfig {
  std::string command;
  std::string model = "forest";  // forest | custom
  std::string spec_file;         // key=value model file when model == custom
  forest::ForestParams params;
  double delta_x = 0.1;
  double t_horizon = 3.0;
  Index n_t = 3000;
  Scheme scheme = Scheme::central;
  double tol = 1e-8;
  LinearMethod solver = LinearMethod::direct;
  std::string out = ".";
  std::uint64_t seed = 42;
  bool cold_start = false;
  bool terminal_q = false;
  std::vector<double> delta_list{0.1, 0.05, 0.025, 0.0125};
  Index paths = 10000;
  std::optional<double> x0;  // defaults to x_tilde for the forest model
  double t0 = 0.0;
};

class UsageError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline std::string format_number(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "central") return Scheme::central;
  if (s == "one_sided") return Scheme::one_sided;
  throw UsageError("unknown scheme '" + s + "' (central | one_sided)");
}

inline LinearMethod parse_solver(const std::string& s) {
  if (s == "direct") return LinearMethod::direct;
  if (s == "sweep") return LinearMethod::sweep;
  throw UsageError("unknown linear solver '" + s + "' (direct | sweep)");
}


// Single-line resolved configuration, used as the provenance comment of every file.
inline std::string describe(const RunConfig& c) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  auto kv = [&](const char* k, const std::string& v) { os << (os.tellp() > 0 ? " " : "") << k << '=' << v; };
  auto num = [&](const char* k, double v) { kv(k, format_number(v)); };
  kv("command", c.command);
  kv("model", c.model);
  if (c.model == "custom") kv("spec_file", c.spec_file);
  num("x_max", c.params.x_max);
  num("x_tilde", c.params.x_tilde);
  num("beta", c.params.beta);
  num("Q", c.params.Q);
  num("mu", c.params.mu);
  num("sigma", c.params.sigma);
  num("lambda", c.params.lambda);
  num("delta_x", c.delta_x);
  num("t_horizon", c.t_horizon);
  kv("n_t", std::to_string(c.n_t));
  kv("scheme", to_string(c.scheme));
  num("tol", c.tol);
  kv("solver", to_string(c.solver));
  kv("seed", std::to_string(c.seed));
  kv("cold_start", c.cold_start ? "true" : "false");
  kv("terminal_q", c.terminal_q ? "true" : "false");
  if (c.command == "convergence") {
    std::string list;
    for (double d : c.delta_list) list += (list.empty() ? "" : ",") + format_number(d);
    kv("delta_list", list);
  }
  if (c.command == "simulate") {
    kv("paths", std::to_string(c.paths));
    kv("x0", c.x0 ? format_number(*c.x0) : "x_tilde");
    num("t0", c.t0);
  }
  return os.str();
}

inline json config_json(const RunConfig& c) {
  json j;
  std::istringstream in(describe(c));
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    j[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return j;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const RunConfig& cfg, const std::vector<std::string>& header)
      : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os_.imbue(std::locale::classic());
    os_ << "# " << describe(cfg) << '\n';
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((os_ << (first ? "" : ",") << cell(cells), first = false), ...);
    os_ << '\n';
  }

  void close() {
    os_.close();
    if (!os_) throw std::runtime_error("failed writing " + path_.string());
  }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(Index v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  std::filesystem::path path_;
  std::ofstream os_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Custom 1-D model file.
//
//   lo = 0                 domain
//   hi = 10
//   drift = a0 a1          mu(x) = a0 + a1 x
//   volatility = s0 s1     sigma(x) = s0 + s1 x
//   discount = r           generator discount (needed for the stationary solve)
//   running_profit = f0 f1
//   impulse_target = xt    every intervention moves the state to xt
//   impulse_above = xa     interventions allowed at nodes x > xa (default xt)
//   impulse_profit = k0 k1 K(x) = k0 + k1 x
//   profit_discount = rho  f and K carry e^{-rho t}
//   terminal = g0 g1
//   boundary_lo = c, boundary_hi = c
// ---------------------------------------------------------------------------

struct AffineModel {
  double lo = 0.0, hi = 1.0;
  double a0 = 0.0, a1 = 0.0;
  double s0 = 0.0, s1 = 0.0;
  double discount = 0.0;
  double f0 = 0.0, f1 = 0.0;
  double target = 0.0;
  std::optional<double> above;
  double k0 = 0.0, k1 = 0.0;
  double rho = 0.0;
  double g0 = 0.0, g1 = 0.0;
  double boundary_lo = 0.0, boundary_hi = 0.0;
};

inline AffineModel parse_affine_model(std::istream& in, const std::string& name = "model file") {
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(name + ":" + std::to_string(lineno) + ": expected key = value");
    std::istringstream key(line.substr(0, eq));
    std::string k;
    key >> k;
    std::istringstream vals(line.substr(eq + 1));
    vals.imbue(std::locale::classic());
    std::vector<double> v;
    double d;
    while (vals >> d) v.push_back(d);
    if (!vals.eof()) throw UsageError(name + ":" + std::to_string(lineno) + ": bad number for '" + k + "'");
    kv[k] = v;
  }
  AffineModel m;
  auto take = [&](const char* k, std::size_t n, std::initializer_list<double*> dst, bool required = false) {
    auto it = kv.find(k);
    if (it == kv.end()) {
      if (required) throw UsageError(name + ": missing '" + k + "'");
      return;
    }
    if (it->second.size() != n)
      throw UsageError(name + ": '" + k + "' needs " + std::to_string(n) + " value(s)");
    std::size_t i = 0;
    for (double* p : dst) *p = it->second[i++];
    kv.erase(it);
  };
  take("lo", 1, {&m.lo}, true);
  take("hi", 1, {&m.hi}, true);
  take("drift", 2, {&m.a0, &m.a1});
  take("volatility", 2, {&m.s0, &m.s1});
  take("discount", 1, {&m.discount});
  take("running_profit", 2, {&m.f0, &m.f1});
  take("impulse_target", 1, {&m.target}, true);
  if (auto it = kv.find("impulse_above"); it != kv.end()) {
    if (it->second.size() != 1) throw UsageError(name + ": 'impulse_above' needs 1 value(s)");
    m.above = it->second[0];
    kv.erase(it);
  }
  take("impulse_profit", 2, {&m.k0, &m.k1});
  take("profit_discount", 1, {&m.rho});
  take("terminal", 2, {&m.g0, &m.g1});
  take("boundary_lo", 1, {&m.boundary_lo});
  take("boundary_hi", 1, {&m.boundary_hi});
  if (!kv.empty()) throw UsageError(name + ": unknown key '" + kv.begin()->first + "'");
  if (!(m.hi > m.lo)) throw UsageError(name + ": need hi > lo");
  return m;
}

inline ProblemSpec make_affine_spec(const AffineModel& m, double dx, bool stationary) {
  ProblemSpec s;
  s.domain = {{m.lo, m.hi}};
  s.steps = {dx};
  const SpaceGrid grid(s.domain, s.steps);
  const Index target = grid.nearest(std::vector<double>{m.target});
  if (!grid.is_interior(target) || std::abs(grid.coord(target, 0) - m.target) > 1e-9 * std::max(1.0, std::abs(m.target)))
    throw InvalidArgument("impulse_target " + format_number(m.target) + " is not an interior grid point");
  const double above = m.above.value_or(m.target);
  s.drift = [m](double, Point x, const ControlValue&, std::span<double> out) { out[0] = m.a0 + m.a1 * x[0]; };
  s.diffusion_sq = [m](double, Point x, const ControlValue&, std::span<double> out) {
    const double sig = m.s0 + m.s1 * x[0];
    out[0] = sig * sig;
  };
  if (m.discount != 0.0) s.discount_rate = [r = m.discount](double, Point, const ControlValue&) { return r; };
  s.running_profit = [m](double t, Point x, const ControlValue&) {
    return std::exp(-m.rho * t) * (m.f0 + m.f1 * x[0]);
  };
  s.intervention_index = [target](Index, const ControlValue&) { return target; };
  s.intervention_profit = [m](double t, Point x, const ControlValue&) {
    return std::exp(-m.rho * t) * (m.k0 + m.k1 * x[0]);
  };
  const double mid = 0.5 * (m.lo + m.hi);
  s.boundary_value = [m, mid](double, Index, Point x, std::span<const double>) {
    return x[0] < mid ? m.boundary_lo : m.boundary_hi;
  };
  s.terminal_value = [m](Point x) { return m.g0 + m.g1 * x[0]; };
  s.controls.regular = {ControlValue{}};
  s.controls.impulse = {ControlValue{}};
  s.controls.impulse_available.assign(grid.interior_count(), false);
  for (Index i = 0; i < grid.interior_count(); ++i)
    s.controls.impulse_available[i] = grid.coord(i, 0) > above + 1e-12 && i > target;
  s.stationary = stationary;
  return s;
}

inline AffineModel load_affine_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read model file '" + path + "'");
  return parse_affine_model(in, path);
}

// ---------------------------------------------------------------------------

inline void check_config(const RunConfig& c) {
  if (c.model != "forest" && c.model != "custom") throw UsageError("model must be forest or custom");
  if (c.model == "custom" && c.spec_file.empty()) throw UsageError("--spec-file is required with --model custom");
  if (!(c.delta_x > 0.0)) throw UsageError("--delta-x must be positive");
  if (!(c.t_horizon > 0.0)) throw UsageError("--t-horizon must be positive");
  if (c.n_t < 1) throw UsageError("--n-t must be at least 1");
  if (!(c.tol > 0.0)) throw UsageError("--tol must be positive");
  if (c.model == "forest") forest::validate(c.params);
  if (c.command == "convergence") {
    if (c.model != "forest") throw UsageError("convergence needs the forest model (analytic reference)");
    if (c.delta_list.empty()) throw UsageError("--delta-list is empty");
    for (double d : c.delta_list)
      if (!(d > 0.0)) throw UsageError("--delta-list entries must be positive");
  }
  if (c.command == "simulate" && c.paths == 0) throw UsageError("--paths must be positive");
}

inline SolverOptions solver_options(const RunConfig& c) {
  SolverOptions o;
  o.scheme = c.scheme;
  o.tol = c.tol;
  o.linear.method = c.solver;
  o.cold_start = c.cold_start;
  return o;
}

inline ProblemSpec finite_spec(const RunConfig& c) {
  if (c.model == "custom") return make_affine_spec(load_affine_model(c.spec_file), c.delta_x, false);
  return forest::make_finite_spec(c.params, c.delta_x, c.t_horizon, c.terminal_q);
}

inline std::filesystem::path prepare_out(const RunConfig& c) {
  std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  return dir;
}

inline json stability_json(const StabilityReport& s) {
  return json{{"pass", s.pass},
              {"worst_margin", s.worst_margin},
              {"worst_time", s.worst_time},
              {"worst_node", s.worst_node},
              {"violations", s.violations}};
}

// Nodes of a 1-D grid in coordinate order.
inline std::vector<Index> nodes_by_coordinate(const SpaceGrid& g) {
  std::vector<Index> order(g.size());
  for (Index i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return g.coord(a, 0) < g.coord(b, 0); });
  return order;
}

inline int cmd_infinite(const RunConfig& c) {
  check_config(c);
  const auto dir = prepare_out(c);
  const SolverOptions opt = solver_options(c);
  const bool is_forest = c.model == "forest";
  const ProblemSpec spec = is_forest ? forest::make_infinite_spec(c.params, c.delta_x)
                                     : make_affine_spec(load_affine_model(c.spec_file), c.delta_x, true);
  const SpaceGrid grid(spec.domain, spec.steps);
  const StationarySolution sol = solve_stationary(spec, grid, opt);
  const auto y = extract_switch_point(sol.policy, grid);

  json report;
  report["config"] = config_json(c);
  report["scheme"] = to_string(c.scheme);
  report["switch_point"] = y ? json(*y) : json(nullptr);
  report["iterations"] = sol.iterations();
  report["h"] = sol.report.h;
  report["interior_nodes"] = grid.interior_count();
  report["clamped_rows"] = sol.report.clamped_rows;
  report["qvi_residual"] = sol.report.steps.front().qvi_residual;
  report["invariants_ok"] = sol.report.invariants_ok;
  report["stability"] = stability_json(sol.report.stability);

  const auto order = nodes_by_coordinate(grid);
  if (is_forest) {
    const auto exact = forest::solve_analytic(c.params);
    CsvWriter csv(dir / "value.csv", c, {"x", "value", "analytic", "abs_error"});
    for (Index g : order) {
      const double x = grid.coord(g, 0), v = exact(x);
      csv.row(x, sol.phi[g], v, std::abs(sol.phi[g] - v));
    }
    csv.close();
    report["analytic_switch_point"] = exact.y;
    report["gamma"] = exact.gamma;
    report["max_error"] = validate::compare_analytic(sol.phi, grid, exact);
  } else {
    CsvWriter csv(dir / "value.csv", c, {"x", "value"});
    for (Index g : order) csv.row(grid.coord(g, 0), sol.phi[g]);
    csv.close();
  }
  report["seconds"] = sol.report.seconds;
  write_json(dir / "report.json", report);
  return sol.report.invariants_ok ? 0 : 1;
}

inline int cmd_finite(const RunConfig& c) {
  check_config(c);
  const auto dir = prepare_out(c);
  const SolverOptions opt = solver_options(c);
  const ProblemSpec spec = finite_spec(c);
  const Grids grids = build_grid(spec.domain, spec.steps, c.t_horizon, c.n_t);
  const BackwardSolution sol = solve_backward(spec, grids, opt);
  const auto traj = validate::switch_point_trajectory(sol.policies, grids);
  const double upper = grids.space.box()[0].hi;

  {
    CsvWriter csv(dir / "switch_trajectory.csv", c, {"t", "switch_point"});
    for (const auto& [t, y] : traj) csv.row(t, y);
    csv.close();
  }
  {
    CsvWriter csv(dir / "value_t0.csv", c, {"x", "value"});
    for (Index g : nodes_by_coordinate(grids.space)) csv.row(grids.space.coord(g, 0), sol.initial()[g]);
    csv.close();
  }
  {
    CsvWriter csv(dir / "iterations.csv", c, {"k", "t", "iterations", "final_change", "seconds"});
    for (const auto& s : sol.report.steps) csv.row(s.k, grids.time.t(s.k), s.iterations, s.final_change, s.seconds);
    csv.close();
  }

  double y_min = upper;
  for (const auto& p : traj) y_min = std::min(y_min, p.second);
  const Index plateau = validate::terminal_plateau(traj, upper);
  json report;
  report["config"] = config_json(c);
  report["scheme"] = to_string(c.scheme);
  report["h"] = sol.report.h;
  report["switch_point_t0"] = traj.front().second;
  report["min_switch_point"] = y_min;
  report["plateau_steps"] = plateau;
  report["plateau_length"] = static_cast<double>(plateau) * grids.time.dt();
  report["total_iterations"] = sol.report.total_iterations;
  report["max_step_iterations"] = sol.report.max_step_iterations;
  report["max_sup_norm"] = sol.report.max_sup_norm;
  report["clamped_rows"] = sol.report.clamped_rows;
  report["invariants_ok"] = sol.report.invariants_ok;
  report["stability"] = stability_json(sol.report.stability);
  if (c.model == "forest") {
    // Reference for the warm-start comparison: stationary solve at the same dx.
    const ProblemSpec inf = forest::make_infinite_spec(c.params, c.delta_x);
    const StationarySolution st = solve_stationary(inf, SpaceGrid(inf.domain, inf.steps), opt);
    report["stationary_switch_point"] = forest::switch_point(c.params);
    report["stationary_iterations"] = st.iterations();
    report["iteration_ratio"] =
        static_cast<double>(sol.report.max_step_iterations) / static_cast<double>(st.iterations());
  }
  report["seconds"] = sol.report.seconds;
  write_json(dir / "report.json", report);
  return sol.report.invariants_ok ? 0 : 1;
}

inline int cmd_convergence(const RunConfig& c) {
  check_config(c);
  const auto dir = prepare_out(c);
  const auto study = validate::convergence_study(c.params, c.delta_list, solver_options(c));
  CsvWriter csv(dir / "convergence.csv", c,
                {"delta_x", "max_error", "switch_point", "iterations", "seconds", "interior_nodes"});
  bool ok = true;
  for (const auto& r : study.rows) {
    csv.row(r.dx, r.max_error, r.switch_point ? format_number(*r.switch_point) : std::string("none"), r.iterations,
            r.seconds, r.interior_nodes);
    ok = ok && r.invariants_ok;
  }
  csv.close();
  json report;
  report["config"] = config_json(c);
  report["analytic_switch_point"] = forest::switch_point(c.params);
  report["order"] = study.order ? json(*study.order) : json(nullptr);
  json rejected = json::array();
  for (const auto& [dx, why] : study.rejected) rejected.push_back({{"delta_x", dx}, {"reason", why}});
  report["rejected"] = rejected;
  report["invariants_ok"] = ok;
  write_json(dir / "report.json", report);
  return ok ? 0 : 1;
}

inline int cmd_simulate(const RunConfig& c) {
  check_config(c);
  const auto dir = prepare_out(c);
  const ProblemSpec spec = finite_spec(c);
  const Grids grids = build_grid(spec.domain, spec.steps, c.t_horizon, c.n_t);
  if (c.model == "custom" && !c.x0) throw UsageError("--x0 is required with --model custom");
  const double x0 = c.x0.value_or(c.params.x_tilde);
  const BackwardSolution sol = solve_backward(spec, grids, solver_options(c));
  const std::vector<double> start{x0};
  const auto est = validate::simulate_policy(spec, grids, sol.policies, start, c.t0, c.paths, c.seed);

  const Index k0 = static_cast<Index>(std::llround(c.t0 / grids.time.dt()));
  const Index node = grids.space.nearest(start);
  const double solver_value = sol.values[k0][node];
  const double z = est.std_error > 0.0 ? (est.mean - solver_value) / est.std_error : 0.0;

  CsvWriter csv(dir / "mc.csv", c,
                {"paths", "valid_paths", "mean", "std_error", "seed", "clamp_events", "interventions", "solver_value",
                 "z_score"});
  csv.row(est.paths, est.valid_paths, est.mean, est.std_error, static_cast<Index>(est.seed), est.clamp_events,
          est.interventions, solver_value, z);
  csv.close();

  json report;
  report["config"] = config_json(c);
  report["mean"] = est.mean;
  report["std_error"] = est.std_error;
  report["solver_value"] = solver_value;
  report["z_score"] = z;
  report["within_3_se"] = std::abs(z) <= 3.0;
  report["seed"] = est.seed;
  report["excluded_paths"] = est.excluded;
  report["invariants_ok"] = sol.report.invariants_ok;
  report["seconds"] = sol.report.seconds;
  write_json(dir / "report.json", report);
  return sol.report.invariants_ok ? 0 : 1;
}

inline int run(const RunConfig& c) {
  if (c.command == "infinite") return cmd_infinite(c);
  if (c.command == "finite") return cmd_finite(c);
  if (c.command == "convergence") return cmd_convergence(c);
  if (c.command == "simulate") return cmd_simulate(c);
  throw UsageError("unknown command '" + c.command + "'");
}

}  // namespace hjbqvi::cli
