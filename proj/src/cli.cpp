#include "weakkam/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "weakkam/critical.hpp"
#include "weakkam/mather.hpp"

namespace weakkam {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::array<std::pair<Command, std::string_view>, 11> kCommands = {{
    {Command::evolve, "evolve"},
    {Command::stationary, "stationary"},
    {Command::critical, "critical"},
    {Command::ceps, "ceps"},
    {Command::mather, "mather"},
    {Command::barrier, "barrier"},
    {Command::stability, "stability"},
    {Command::instability, "instability"},
    {Command::corollary, "corollary"},
    {Command::homogenize, "homogenize"},
    {Command::example_ex, "example-ex"},
}};

void allow_keys(const json& obj, std::initializer_list<std::string_view> keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

double number(const json& obj, const char* key, const std::string& where, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("'" + where + key + "' must be a number");
  return v.get<double>();
}

std::size_t count(const json& obj, const char* key, const std::string& where, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) throw ConfigError("'" + where + key + "' must be a positive integer");
  return v.get<std::size_t>();
}

std::vector<double> numbers(const json& obj, const char* key, const std::string& where, std::vector<double> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.empty()) throw ConfigError("'" + where + key + "' must be a nonempty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("'" + where + key + "' must be a nonempty array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

// Formula keys accept strings or plain numbers.
std::string formula(const json& obj, const char* key, const std::string& where, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return format_double(v.get<double>());
  throw ConfigError("'" + where + key + "' must be a formula string or a number");
}

void require_positive(double value, const char* key) {
  if (!(value > 0.0) || !std::isfinite(value)) throw ConfigError("'numerics." + std::string(key) + "' must be positive");
}

Numerics parse_numerics(const json& doc, Command command) {
  Numerics n;
  if (!doc.contains("numerics")) {
    // fall through to defaults
  } else {
    const json& j = doc.at("numerics");
    allow_keys(j,
               {"n", "m", "k", "dt", "tol", "vmax", "pmax", "T", "T_max", "mode", "direction", "snap_every",
                "lambda_schedule", "zeta_grid", "eps_list", "dt_critical", "longtime_T", "cross_tol", "margin",
                "n_per_period", "n_slow"},
               "numerics");
    const std::string w = "numerics.";
    n.n = count(j, "n", w, n.n);
    n.m = count(j, "m", w, n.m);
    n.k = count(j, "k", w, n.k);
    n.dt = number(j, "dt", w, n.dt);
    n.tol = number(j, "tol", w, n.tol);
    n.vmax = number(j, "vmax", w, n.vmax);
    n.pmax = number(j, "pmax", w, n.pmax);
    n.T = number(j, "T", w, 0.0);
    n.T_max = number(j, "T_max", w, n.T_max);
    if (j.contains("mode")) {
      if (!j.at("mode").is_string()) throw ConfigError("'numerics.mode' must be a string");
      n.mode = parse_contact_mode(j.at("mode").get<std::string>());
    }
    if (j.contains("direction")) {
      if (!j.at("direction").is_string()) throw ConfigError("'numerics.direction' must be a string");
      n.direction = parse_direction(j.at("direction").get<std::string>());
    }
    if (j.contains("snap_every")) {
      const json& s = j.at("snap_every");
      if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("'numerics.snap_every' must be a nonnegative integer");
      n.snap_every = s.get<std::size_t>();
    }
    n.lambda_schedule = numbers(j, "lambda_schedule", w, n.lambda_schedule);
    n.zeta_grid = numbers(j, "zeta_grid", w, n.zeta_grid);
    n.eps_list = numbers(j, "eps_list", w, {});
    n.dt_critical = number(j, "dt_critical", w, n.dt_critical);
    n.longtime_T = number(j, "longtime_T", w, n.longtime_T);
    n.cross_tol = number(j, "cross_tol", w, n.cross_tol);
    n.margin = number(j, "margin", w, n.margin);
    n.n_per_period = count(j, "n_per_period", w, n.n_per_period);
    n.n_slow = count(j, "n_slow", w, n.n_slow);
  }
  if (n.T == 0.0) {
    switch (command) {
      case Command::evolve: n.T = 1.0; break;
      case Command::corollary: n.T = 40.0; break;
      default: n.T = 10.0; break;
    }
  }
  if (n.eps_list.empty()) {
    if (command == Command::ceps || command == Command::example_ex) n.eps_list = {-0.1, -0.05, 0.0, 0.05, 0.1};
    if (command == Command::homogenize) n.eps_list = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  }
  for (auto [value, key] : {std::pair{n.dt, "dt"}, {n.tol, "tol"}, {n.vmax, "vmax"}, {n.pmax, "pmax"}, {n.T, "T"},
                            {n.T_max, "T_max"}, {n.dt_critical, "dt_critical"}, {n.longtime_T, "longtime_T"},
                            {n.cross_tol, "cross_tol"}, {n.margin, "margin"}}) {
    require_positive(value, key);
  }
  if (n.m < 3) throw ConfigError("'numerics.m' must be at least 3");
  if (n.k < 2) throw ConfigError("'numerics.k' must be at least 2");
  for (std::size_t a = 0; a < n.lambda_schedule.size(); ++a) {
    if (!(n.lambda_schedule[a] > 0.0) || (a > 0 && n.lambda_schedule[a] >= n.lambda_schedule[a - 1])) {
      throw ConfigError("'numerics.lambda_schedule' must be positive and strictly decreasing");
    }
  }
  if (n.lambda_schedule.size() < 2) throw ConfigError("'numerics.lambda_schedule' needs at least two values");
  for (double z : n.zeta_grid) {
    if (!(z > 0.0)) throw ConfigError("'numerics.zeta_grid' entries must be positive");
  }
  return n;
}

BuiltinParams builtin_params(const json& h) {
  BuiltinParams params;
  if (!h.contains("params")) return params;
  const json& p = h.at("params");
  if (!p.is_object()) throw ConfigError("'hamiltonian.params' must be an object");
  for (const auto& [key, value] : p.items()) params[key] = formula(p, key.c_str(), "hamiltonian.params.", "");
  return params;
}

ojson spec_json(const HamiltonianSpec& spec) {
  ojson j;
  j["name"] = spec.name;
  j["G"] = spec.G.source();
  j["W"] = spec.W.source();
  j["dWu"] = spec.dWu.source();
  j["Lambda"] = spec.lambda_bound;
  return j;
}

std::string example_default(const json& h, const char* key, const std::string& fallback) {
  return h.is_null() ? fallback : formula(h, key, "hamiltonian.", fallback);
}

ojson numerics_json(const Numerics& n) {
  ojson j;
  j["n"] = n.n;
  j["m"] = n.m;
  j["k"] = n.k;
  j["dt"] = n.dt;
  j["tol"] = n.tol;
  j["vmax"] = n.vmax;
  j["pmax"] = n.pmax;
  j["T"] = n.T;
  j["T_max"] = n.T_max;
  j["mode"] = n.mode == ContactMode::picard ? "picard" : "explicit";
  j["direction"] = n.direction == Direction::forward ? "forward" : "backward";
  j["snap_every"] = n.snap_every;
  j["lambda_schedule"] = n.lambda_schedule;
  j["zeta_grid"] = n.zeta_grid;
  j["eps_list"] = n.eps_list;
  j["dt_critical"] = n.dt_critical;
  j["longtime_T"] = n.longtime_T;
  j["cross_tol"] = n.cross_tol;
  j["margin"] = n.margin;
  j["n_per_period"] = n.n_per_period;
  j["n_slow"] = n.n_slow;
  return j;
}

// --- running -------------------------------------------------------------

struct Outcome {
  int code = kExitOk;
  std::string summary;
  std::string property_failure;  // nonempty means exit 3
};

class Artifacts {
 public:
  Artifacts(std::filesystem::path dir, const ExperimentConfig& cfg)
      : dir_(std::move(dir)), cfg_(cfg), header_("# weakkam " + to_string(cfg.command) + " config " + cfg.resolved.dump()) {}

  void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream f(dir_ / name);
    if (!f) throw SolverError("cannot write artifact " + (dir_ / name).string());
    f << header_ << '\n';
    body(f);
    if (!f) throw SolverError("failed while writing artifact " + (dir_ / name).string());
  }

  // JSON has no comments, so the resolved config leads the document as its first member.
  void report(const std::string& name, const ojson& body) {
    ojson doc;
    doc["config"] = cfg_.resolved;
    for (const auto& [key, value] : body.items()) doc[key] = value;
    std::ofstream f(dir_ / name);
    if (!f) throw SolverError("cannot write artifact " + (dir_ / name).string());
    f << doc.dump(2) << '\n';
  }

 private:
  std::filesystem::path dir_;
  const ExperimentConfig& cfg_;
  std::string header_;
};

class DirectoryLock {
 public:
  explicit DirectoryLock(std::filesystem::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw ConfigError("output directory is locked by another run (" + path_.string() +
                        "); remove the file if no run is active");
    }
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

ojson indices_json(const std::vector<std::size_t>& idx) { return ojson(idx); }

CriticalOptions critical_options(const Numerics& n) {
  CriticalOptions o;
  o.lambdas = n.lambda_schedule;
  o.dt = n.dt_critical;
  o.tol = n.tol;
  o.longtime_T = n.longtime_T;
  o.cross_tol = n.cross_tol;
  return o;
}

StabilityOptions stability_options(const Numerics& n) {
  StabilityOptions o;
  o.zeta_grid = n.zeta_grid;
  o.margin = n.margin;
  o.critical = critical_options(n);
  return o;
}

ProbeOptions probe_options(const Numerics& n) {
  ProbeOptions p;
  p.T = n.T;
  p.dt = n.dt;
  p.mode = n.mode;
  return p;
}

struct Setup {
  TorusGrid grid;
  LagrangianTable table;
};

Setup setup(const ExperimentConfig& cfg) {
  const TorusGrid grid(cfg.numerics.n);
  return {grid, legendre(cfg.spec, grid, cfg.numerics.m, cfg.numerics.k)};
}

// A formula for u_minus is a fixed point of the continuum equation only; the
// probes measure distances to the fixed point of the scheme.
Field u_minus_field(const ExperimentConfig& cfg, const Setup& s) {
  const Numerics& n = cfg.numerics;
  const Field start = field_from_expr(s.grid, parse(cfg.u_minus.value_or(cfg.phi0)));
  if (cfg.u_minus && !cfg.polish_u_minus) return start;
  return stationary_solve(start, cfg.spec, s.table, n.dt, n.tol, n.T_max, n.mode).u;
}

// G + W(x, u_minus): the frozen Hamiltonian whose critical value and Mather
// measures the critical, mather and barrier commands study.
LagrangianTable frozen(const ExperimentConfig& cfg, const Setup& s, const Field& u) {
  return frozen_table(s.table, cfg.spec, u, 0.0);
}

Outcome run_evolve(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Numerics& n = cfg.numerics;
  EvolveOptions o;
  o.T = n.T;
  o.dt = n.dt;
  o.mode = n.mode;
  o.direction = n.direction;
  o.snap_every = n.snap_every;
  const EvolveResult r = evolve(field_from_expr(s.grid, parse(cfg.phi0)), cfg.spec, s.table, o);
  art.csv("snapshots.csv", [&](std::ostream& os) {
    os << "t,x,value\n";
    for (const Snapshot& snap : r.snapshots) {
      for (std::size_t i = 0; i < snap.u.size(); ++i) {
        os << format_double(snap.t) << ',' << format_double(s.grid.node(i)) << ',' << format_double(snap.u[i]) << '\n';
      }
    }
  });
  art.csv("summary.csv", [&](std::ostream& os) {
    os << "steps,final_residual\n" << r.steps << ',' << format_double(r.final_residual) << '\n';
  });
  return {kExitOk, "evolve: steps=" + std::to_string(r.steps) + " final_residual=" + format_double(r.final_residual) +
                       " range=[" + fixed(r.final.min(), 6) + ", " + fixed(r.final.max(), 6) + "]", ""};
}

Outcome run_stationary(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Numerics& n = cfg.numerics;
  const StationaryResult r =
      stationary_solve(field_from_expr(s.grid, parse(cfg.phi0)), cfg.spec, s.table, n.dt, n.tol, n.T_max, n.mode);
  art.csv("stationary.csv", [&](std::ostream& os) { write_csv(os, r.u); });
  return {kExitOk, "stationary: residual=" + format_double(r.residual) + " steps=" + std::to_string(r.steps), ""};
}

Outcome run_critical(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = cfg.u_minus ? field_from_expr(s.grid, parse(*cfg.u_minus)) : Field::constant(s.grid, 0.0);
  const CriticalValueResult r = critical_value(frozen(cfg, s, u), critical_options(cfg.numerics));
  art.csv("discount.csv", [&](std::ostream& os) { write_discount_csv(os, r); });
  art.csv("corrector.csv", [&](std::ostream& os) { write_csv(os, r.u_corrector); });
  ojson body;
  body["c"] = r.c;
  body["method"] = to_string(r.method);
  body["c_discount"] = r.c_discount;
  body["c_longtime"] = r.c_longtime;
  body["nonlinearity"] = r.nonlinearity;
  body["nonlinear_flag"] = r.nonlinear_flag;
  art.report("critical.json", body);
  Outcome out{kExitOk, "c=" + fixed(r.c, 2) + "±" + fixed(cfg.numerics.cross_tol, 2) + " (" + to_string(r.method) + ")", ""};
  if (r.method != CriticalMethod::agree) {
    out.property_failure = "discount and long-time estimators disagree: " + format_double(r.c_discount) + " vs " +
                           format_double(r.c_longtime);
  }
  return out;
}

Outcome run_ceps(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = u_minus_field(cfg, s);
  const CEpsCurve curve = c_eps_curve(cfg.spec, s.table, u, cfg.numerics.eps_list, critical_options(cfg.numerics));
  const LagrangianTable t0 = frozen(cfg, s, u);
  const OccupationalMeasure mu = solve_occupational(t0);
  std::vector<double> d(s.grid.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = cfg.spec.dw(s.grid.node(i), u[i]);
  const Field dw(s.grid, d);
  const double lo = extremal_integral(mu, dw, Sense::min);
  const double hi = extremal_integral(mu, dw, Sense::max);
  art.csv("ceps.csv", [&](std::ostream& os) { write_curve_csv(os, curve); });
  ojson body;
  body["D_minus"] = curve.D_minus;
  body["D_plus"] = curve.D_plus;
  body["mather_min_dWu"] = lo;
  body["mather_max_dWu"] = hi;
  body["lipschitz_excess"] = curve.lipschitz_excess;
  body["lipschitz_ok"] = curve.lipschitz_ok;
  art.report("ceps.json", body);
  Outcome out{kExitOk, "D-=" + fixed(curve.D_minus, 4) + " D+=" + fixed(curve.D_plus, 4) + " mather=[" + fixed(lo, 4) +
                           ", " + fixed(hi, 4) + "]", ""};
  if (!curve.lipschitz_ok) out.property_failure = "c(eps) breaks the Lipschitz bound by " + format_double(curve.lipschitz_excess);
  if (std::abs(curve.D_minus - lo) > 5e-2 || std::abs(curve.D_plus - hi) > 5e-2) {
    out.property_failure = "one-sided derivatives disagree with the Mather integrals of dWu";
  }
  return out;
}

Outcome run_mather(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = cfg.u_minus ? field_from_expr(s.grid, parse(*cfg.u_minus)) : Field::constant(s.grid, 0.0);
  const LagrangianTable t = frozen(cfg, s, u);
  const OccupationalMeasure mu = solve_occupational(t);
  const CriticalValueResult c = critical_value(t, critical_options(cfg.numerics));
  art.csv("measure.csv", [&](std::ostream& os) { write_measure_csv(os, mu); });
  ojson body;
  body["value"] = mu.value;
  body["c"] = c.c;
  body["closedness_residual"] = closedness_residual(mu);
  body["mean_velocity"] = mu.mean_velocity();
  art.report("mather.json", body);
  Outcome out{kExitOk, "value=" + fixed(mu.value, 4) + " -c=" + fixed(-c.c, 4), ""};
  if (std::abs(mu.value + c.c) > 1e-2) out.property_failure = "LP value differs from -c by more than 1e-2";
  return out;
}

std::vector<std::size_t> support_nodes(const OccupationalMeasure& mu) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mu.grid.size(); ++i) {
    if (mu.node_mass(i) > 1e-9) out.push_back(i);
  }
  return out;
}

Outcome run_barrier(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = cfg.u_minus ? field_from_expr(s.grid, parse(*cfg.u_minus)) : Field::constant(s.grid, 0.0);
  const LagrangianTable t = frozen(cfg, s, u);
  const CriticalValueResult c = critical_value(t, critical_options(cfg.numerics));
  const BarrierTable bt = peierls_barrier(t, c.c);
  const OccupationalMeasure mu = solve_occupational(t);
  const std::vector<std::size_t> support = support_nodes(mu);
  std::size_t stray = 0;
  for (std::size_t i : support) {
    bool near = false;
    for (std::size_t a : bt.aubry_indices) near = near || s.grid.index_distance(i, a) <= 1;
    if (!near) ++stray;
  }
  art.csv("barrier.csv", [&](std::ostream& os) { write_barrier_csv(os, bt); });
  ojson body;
  body["c"] = c.c;
  body["aubry_indices"] = indices_json(bt.aubry_indices);
  body["mather_support"] = indices_json(support);
  body["support_outside_aubry"] = stray;
  art.report("barrier.json", body);
  Outcome out{kExitOk, "aubry nodes=" + std::to_string(bt.aubry_indices.size()) + " mather support nodes=" +
                           std::to_string(support.size()) + " outside=" + std::to_string(stray), ""};
  if (stray > 0) out.property_failure = "Mather support leaves the Aubry set by more than one cell";
  return out;
}

ojson report_json(const StabilityReport& r) {
  std::ostringstream os;
  write_report_json(os, r);
  return ojson::parse(os.str());
}

Outcome run_stability(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = u_minus_field(cfg, s);
  StabilityReport r = check_condition(cfg.spec, s.table, u, cfg.condition, stability_options(cfg.numerics));
  Outcome out;
  if (cfg.condition == Condition::A3 && r.verdict == Verdict::holds) {
    const DecayResult d = decay_exponent(cfg.spec, s.table, u, cfg.probe.delta, probe_options(cfg.numerics));
    r.decay_slope = d.slope;
    r.Delta_estimate = basin_estimate(cfg.spec, s.table, u, 4.0 * cfg.probe.delta, probe_options(cfg.numerics));
    if (r.A_estimate && d.slope > -0.5 * *r.A_estimate) {
      out.property_failure = "decay slope " + format_double(d.slope) + " is slower than -A/2";
    }
  }
  art.csv("u_minus.csv", [&](std::ostream& os) { write_csv(os, u); });
  art.report("stability.json", report_json(r));
  out.summary = to_string(r.condition) + " verdict=" + to_string(r.verdict) +
                (r.A_estimate ? " A_estimate=" + fixed(*r.A_estimate, 4) : std::string()) +
                (r.decay_slope ? " decay_slope=" + fixed(*r.decay_slope, 4) : std::string());
  return out;
}

Outcome run_instability(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = u_minus_field(cfg, s);
  const EscapeResult r = instability_probe(cfg.spec, s.table, u, cfg.probe.eps, cfg.probe.Delta, probe_options(cfg.numerics));
  art.csv("series.csv", [&](std::ostream& os) { write_series_csv(os, r.series); });
  ojson body;
  body["escaped"] = r.escaped;
  body["t_escape"] = r.t_escape ? ojson(*r.t_escape) : ojson(nullptr);
  body["sup_dev"] = r.sup_dev;
  art.report("instability.json", body);
  if (r.escaped) return {kExitOk, "escaped t≈" + fixed(*r.t_escape, 2), ""};
  return {kExitOk, "no escape by T=" + format_double(cfg.numerics.T) + " (sup_dev=" + format_double(r.sup_dev) + ")", ""};
}

Outcome run_corollary(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field a = field_from_expr(s.grid, parse(cfg.a));
  StabilityOptions so = stability_options(cfg.numerics);
  StabilityReport r = check_corollary_a(s.table, a, so);
  // a(x) u + G(x, Du) = c(G) evolved from the constants +2 and -2
  const HamiltonianSpec contact =
      make_spec(cfg.spec.G.source(), "(" + cfg.a + ")*u-(" + format_double(*r.c_G) + ")", cfg.a, std::nullopt,
                cfg.spec.vmax, cfg.spec.pmax);
  ProbeOptions probe = probe_options(cfg.numerics);
  const double gap = constant_data_gap(contact, s.table, 2.0, probe);
  art.report("corollary.json", report_json(r));
  art.csv("constant_gap.csv", [&](std::ostream& os) {
    os << "amplitude,T,gap\n2," << format_double(probe.T) << ',' << format_double(gap) << '\n';
  });
  Outcome out{kExitOk, "corollary verdict=" + to_string(r.verdict) +
                           (r.a0 ? " a0=" + fixed(*r.a0, 4) : std::string()) + " gap=" + format_double(gap), ""};
  if (r.verdict == Verdict::holds && gap > 1e-2) {
    out.property_failure = "constant data did not merge by T: gap " + format_double(gap);
  }
  return out;
}

Outcome run_homogenize(const ExperimentConfig& cfg, Artifacts& art) {
  const Numerics& n = cfg.numerics;
  RateOptions o;
  o.ks.clear();
  for (double e : n.eps_list) o.ks.push_back(static_cast<std::size_t>(std::llround(1.0 / e)));
  o.n_per_period = n.n_per_period;
  o.n_slow = n.n_slow;
  o.solve.m = n.m;
  o.solve.k = n.k;
  o.solve.dt = n.dt;
  o.solve.tol = n.tol;
  o.solve.T_max = n.T_max;
  o.solve.mode = n.mode;
  o.cell.critical = critical_options(n);
  const RateResult r = rate_experiment(*cfg.homog, o);
  art.csv("rate.csv", [&](std::ostream& os) { write_rate_csv(os, r); });
  art.csv("ubar.csv", [&](std::ostream& os) { write_csv(os, r.u_bar); });
  ojson body;
  body["slope"] = r.slope ? ojson(*r.slope) : ojson(nullptr);
  body["C_fit"] = r.C_fit;
  body["noise_limited"] = r.noise_limited;
  body["monotone"] = r.monotone;
  body["interp_bound"] = r.interp_bound;
  body["setting"] = "eps = 1/k on the unit torus; H 1-periodic in x and y";
  art.report("homogenize.json", body);
  Outcome out{kExitOk, std::string("slope=") + (r.slope ? fixed(*r.slope, 3) : std::string("noise")) +
                           " C_fit=" + fixed(r.C_fit, 4), ""};
  if (r.slope && *r.slope < 0.4) out.property_failure = "error slope " + format_double(*r.slope) + " is below 0.4";
  if (!r.monotone) out.property_failure = "errors do not decrease along the eps ladder";
  return out;
}

Outcome run_example(const ExperimentConfig& cfg, Artifacts& art) {
  const Setup s = setup(cfg);
  const Field u = u_minus_field(cfg, s);
  const StabilityOptions so = stability_options(cfg.numerics);
  StabilityReport r = check_condition(cfg.spec, s.table, u, Condition::A3, so);
  const DecayResult d = decay_exponent(cfg.spec, s.table, u, cfg.probe.delta, probe_options(cfg.numerics));
  r.decay_slope = d.slope;
  const CEpsCurve curve = c_eps_curve(cfg.spec, s.table, u, cfg.numerics.eps_list, so.critical);
  art.csv("ceps.csv", [&](std::ostream& os) { write_curve_csv(os, curve); });
  ojson body = report_json(r);
  body["D_minus"] = curve.D_minus;
  body["D_plus"] = curve.D_plus;
  body["decay_window"] = {d.t_lo, d.t_hi};
  art.report("example_ex.json", body);
  Outcome out{kExitOk, "A3 verdict=" + to_string(r.verdict) +
                           (r.A_estimate ? " A_estimate=" + fixed(*r.A_estimate, 4) : std::string()) +
                           " decay_slope=" + fixed(d.slope, 4) + " D-=" + fixed(curve.D_minus, 4) +
                           " D+=" + fixed(curve.D_plus, 4), ""};
  if (r.verdict != Verdict::holds) out.property_failure = "A3 does not hold";
  if (r.A_estimate && d.slope > -0.5 * *r.A_estimate) out.property_failure = "decay slower than -A/2";
  return out;
}

Outcome dispatch(const ExperimentConfig& cfg, Artifacts& art) {
  switch (cfg.command) {
    case Command::evolve: return run_evolve(cfg, art);
    case Command::stationary: return run_stationary(cfg, art);
    case Command::critical: return run_critical(cfg, art);
    case Command::ceps: return run_ceps(cfg, art);
    case Command::mather: return run_mather(cfg, art);
    case Command::barrier: return run_barrier(cfg, art);
    case Command::stability: return run_stability(cfg, art);
    case Command::instability: return run_instability(cfg, art);
    case Command::corollary: return run_corollary(cfg, art);
    case Command::homogenize: return run_homogenize(cfg, art);
    case Command::example_ex: return run_example(cfg, art);
  }
  throw ConfigError("unhandled command");
}

}  // namespace

Command parse_command(std::string_view text) {
  for (const auto& [c, name] : kCommands) {
    if (name == text) return c;
  }
  std::string names;
  for (const auto& [c, name] : kCommands) names += (names.empty() ? "" : ", ") + std::string(name);
  throw ConfigError("unknown command '" + std::string(text) + "' (expected one of " + names + ")");
}

std::string to_string(Command c) {
  for (const auto& [cmd, name] : kCommands) {
    if (cmd == c) return std::string(name);
  }
  return "?";
}

ExperimentConfig parse_config(const json& doc, std::optional<Command> command) {
  allow_keys(doc,
             {"command", "hamiltonian", "numerics", "phi0", "u_minus", "polish_u_minus", "a", "condition", "probe",
              "output_dir", "seed"},
             "");
  ExperimentConfig cfg;
  if (doc.contains("command")) {
    if (!doc.at("command").is_string()) throw ConfigError("'command' must be a string");
    const Command named = parse_command(doc.at("command").get<std::string>());
    if (command && *command != named) {
      throw ConfigError("command line says '" + to_string(*command) + "' but the config says '" + to_string(named) + "'");
    }
    cfg.command = named;
  } else if (command) {
    cfg.command = *command;
  } else {
    throw ConfigError("no command given on the command line or under 'command'");
  }

  cfg.numerics = parse_numerics(doc, cfg.command);
  Numerics& n = cfg.numerics;
  const json h = doc.contains("hamiltonian") ? doc.at("hamiltonian") : json();
  ojson h_resolved;

  if (cfg.command == Command::homogenize) {
    if (h.is_null()) throw ConfigError("'hamiltonian' is required");
    allow_keys(h, {"H", "dHu", "Lambda1", "Lambda2"}, "hamiltonian");
    if (!h.contains("H") || !h.contains("dHu")) throw ConfigError("homogenize needs 'hamiltonian.H' and 'hamiltonian.dHu'");
    std::optional<double> l1, l2;
    if (h.contains("Lambda1")) l1 = number(h, "Lambda1", "hamiltonian.", 0.0);
    if (h.contains("Lambda2")) l2 = number(h, "Lambda2", "hamiltonian.", 0.0);
    cfg.homog = make_homog_problem(formula(h, "H", "hamiltonian.", ""), formula(h, "dHu", "hamiltonian.", ""), l1, l2,
                                   n.vmax, n.pmax);
    cfg.warnings = cfg.homog->warnings;
    if (n.dt * cfg.homog->Lambda2 > 0.5) {
      throw ConfigError("dt*Lambda exceeds 1/2 (dt=" + format_double(n.dt) + ", Lambda=" +
                        format_double(cfg.homog->Lambda2) + ")");
    }
    for (double e : n.eps_list) {
      const double k = 1.0 / e;
      if (!(e > 0.0) || std::abs(k - std::round(k)) > 1e-9 * k) {
        throw ConfigError("'numerics.eps_list' entries must be unit fractions 1/k, got " + format_double(e));
      }
    }
    h_resolved["H"] = cfg.homog->H.source();
    h_resolved["dHu"] = cfg.homog->dHu.source();
    h_resolved["Lambda1"] = cfg.homog->Lambda1;
    h_resolved["Lambda2"] = cfg.homog->Lambda2;
  } else {
    if (cfg.command == Command::example_ex) {
      if (!h.is_null()) allow_keys(h, {"phi", "dphi", "theta", "zeta"}, "hamiltonian");
      const BuiltinParams params = {
          {"phi", example_default(h, "phi", "sin(2*pi*x)/(2*pi)")},
          {"dphi", example_default(h, "dphi", "cos(2*pi*x)")},
          {"theta", example_default(h, "theta", "0.5")},
          {"zeta", example_default(h, "zeta", "1")},
      };
      cfg.spec = builtin("example_ex", params);
      for (const auto& [k, v] : params) h_resolved["params"][k] = v;
      if (!doc.contains("u_minus")) cfg.u_minus = params.at("phi");
    } else if (h.is_null()) {
      throw ConfigError("'hamiltonian' is required");
    } else if (h.contains("builtin")) {
      allow_keys(h, {"builtin", "params"}, "hamiltonian");
      if (!h.at("builtin").is_string()) throw ConfigError("'hamiltonian.builtin' must be a string");
      const BuiltinParams params = builtin_params(h);
      cfg.spec = builtin(h.at("builtin").get<std::string>(), params);
      for (const auto& [k, v] : params) h_resolved["params"][k] = v;
    } else {
      allow_keys(h, {"G", "W", "dWu", "Lambda"}, "hamiltonian");
      if (!h.contains("G")) throw ConfigError("inline Hamiltonian needs 'hamiltonian.G'");
      std::optional<double> lambda;
      if (h.contains("Lambda")) lambda = number(h, "Lambda", "hamiltonian.", 0.0);
      cfg.spec = make_spec(formula(h, "G", "hamiltonian.", ""), formula(h, "W", "hamiltonian.", "0"),
                           formula(h, "dWu", "hamiltonian.", "0"), lambda, n.vmax, n.pmax);
    }
    cfg.spec.vmax = n.vmax;
    cfg.spec.pmax = n.pmax;
    cfg.warnings = validate(cfg.spec);
    if (n.dt * cfg.spec.lambda_bound > 0.5) {
      throw ConfigError("dt*Lambda exceeds 1/2 (dt=" + format_double(n.dt) + ", Lambda=" +
                        format_double(cfg.spec.lambda_bound) + ")");
    }
    const ojson resolved_spec = spec_json(cfg.spec);
    for (const auto& [k, v] : resolved_spec.items()) h_resolved[k] = v;
  }

  cfg.phi0 = formula(doc, "phi0", "", cfg.phi0);
  parse(cfg.phi0);
  if (doc.contains("u_minus")) cfg.u_minus = formula(doc, "u_minus", "", "");
  if (cfg.u_minus) parse(*cfg.u_minus);
  if (doc.contains("polish_u_minus")) {
    if (!doc.at("polish_u_minus").is_boolean()) throw ConfigError("'polish_u_minus' must be true or false");
    cfg.polish_u_minus = doc.at("polish_u_minus").get<bool>();
  }
  if (cfg.command == Command::corollary) {
    if (!doc.contains("a")) throw ConfigError("corollary needs the weight formula 'a'");
    cfg.a = formula(doc, "a", "", "");
    parse(cfg.a);
  } else if (doc.contains("a")) {
    throw ConfigError("'a' is only used by the corollary command");
  }
  if (doc.contains("condition")) {
    if (!doc.at("condition").is_string()) throw ConfigError("'condition' must be a string");
    cfg.condition = parse_condition(doc.at("condition").get<std::string>());
    if (cfg.condition == Condition::corollary_a) throw ConfigError("use the corollary command for 'corollary_a'");
  }
  if (doc.contains("probe")) {
    const json& p = doc.at("probe");
    allow_keys(p, {"eps", "Delta", "delta"}, "probe");
    cfg.probe.eps = number(p, "eps", "probe.", cfg.probe.eps);
    cfg.probe.Delta = number(p, "Delta", "probe.", cfg.probe.Delta);
    cfg.probe.delta = number(p, "delta", "probe.", cfg.probe.delta);
  }
  if (!(cfg.probe.eps > 0.0 && cfg.probe.eps < 1.0)) throw ConfigError("'probe.eps' must lie in (0, 1)");
  if (!(cfg.probe.Delta > cfg.probe.eps)) throw ConfigError("'probe.Delta' must exceed 'probe.eps'");
  if (!(cfg.probe.delta > 0.0)) throw ConfigError("'probe.delta' must be positive");
  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) throw ConfigError("'output_dir' must be a string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a nonnegative integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }

  ojson& r = cfg.resolved;
  r["command"] = to_string(cfg.command);
  r["hamiltonian"] = h_resolved;
  r["numerics"] = numerics_json(n);
  r["phi0"] = cfg.phi0;
  r["u_minus"] = cfg.u_minus ? ojson(*cfg.u_minus) : ojson("stationary solve from phi0");
  r["polish_u_minus"] = cfg.polish_u_minus;
  if (!cfg.a.empty()) r["a"] = cfg.a;
  r["condition"] = to_string(cfg.condition);
  r["probe"] = {{"eps", cfg.probe.eps}, {"Delta", cfg.probe.Delta}, {"delta", cfg.probe.delta}};
  r["output_dir"] = cfg.output_dir;
  r["seed"] = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<Command> command) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  return parse_config(doc, command);
}

void write_diagnostic(const std::filesystem::path& dir, int code, const std::string& message) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream f(dir / "diagnostic.txt");
  if (!f) return;
  f << "exit_code=" << code << '\n' << message << '\n';
}

int run(const ExperimentConfig& config, const RunOptions& options) {
  std::ostream& log = options.log ? *options.log : std::cout;
  const std::filesystem::path dir = options.output_dir.value_or(config.output_dir);
  int code = kExitOk;
  std::string message;
  try {
    std::filesystem::create_directories(dir);
    const DirectoryLock lock(dir / ".weakkam.lock");
    std::error_code ec;
    std::filesystem::remove(dir / "diagnostic.txt", ec);
    Artifacts art(dir, config);
    const Outcome out = dispatch(config, art);
    if (!options.quiet) {
      for (const auto& w : config.warnings) log << "warning: " << w << '\n';
      log << out.summary << '\n';
    }
    if (!out.property_failure.empty()) {
      code = kExitProperty;
      message = "property check failed: " + out.property_failure + "\nsummary: " + out.summary;
    }
  } catch (const ConfigError& e) {
    code = kExitConfig;
    message = std::string("config error: ") + e.what();
  } catch (const ConvergenceError& e) {
    code = kExitSolver;
    message = std::string("solver error: ") + e.what() + " (last residual " + format_double(e.residual()) + ")";
  } catch (const Error& e) {
    code = kExitSolver;
    message = std::string("solver error: ") + e.what();
  } catch (const std::filesystem::filesystem_error& e) {
    code = kExitConfig;
    message = std::string("output directory error: ") + e.what();
  } catch (const std::exception& e) {
    code = kExitSolver;
    message = std::string("error: ") + e.what();
  }
  if (code != kExitOk) {
    write_diagnostic(dir, code, message);
    if (!options.quiet) log << message << '\n';
  }
  return code;
}

}  // namespace weakkam
