#include "weakkam/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace weakkam {

namespace {

double sup_dev(std::span<const double> u, const Field& ref) {
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) d = std::max(d, std::abs(u[i] - ref[i]));
  return d;
}

double ls_slope(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) throw SolverError("too few points to fit a decay slope");
  double st = 0.0, sy = 0.0;
  for (const auto& [t, y] : pts) {
    st += t;
    sy += y;
  }
  const double k = static_cast<double>(pts.size());
  const double mt = st / k, my = sy / k;
  double num = 0.0, den = 0.0;
  for (const auto& [t, y] : pts) {
    num += (t - mt) * (y - my);
    den += (t - mt) * (t - mt);
  }
  return num / den;
}

EvolveOptions evolve_options(const ProbeOptions& probe) {
  EvolveOptions o;
  o.T = probe.T;
  o.dt = probe.dt;
  o.mode = probe.mode;
  o.direction = Direction::backward;
  return o;
}

}  // namespace

std::string to_string(Condition c) {
  switch (c) {
    case Condition::A3: return "A3";
    case Condition::A4: return "A4";
    case Condition::corollary_a: return "corollary_a";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

Condition parse_condition(std::string_view text) {
  if (text == "A3") return Condition::A3;
  if (text == "A4") return Condition::A4;
  if (text == "corollary_a") return Condition::corollary_a;
  throw ConfigError("unknown condition '" + std::string(text) + "' (expected A3, A4 or corollary_a)");
}

StabilityReport check_condition(const HamiltonianSpec& spec, const LagrangianTable& base, const Field& u_minus,
                                Condition which, const StabilityOptions& opts) {
  if (which == Condition::corollary_a) throw ConfigError("use check_corollary_a for the a(x) u + G criterion");
  if (!(u_minus.grid() == base.grid())) throw ConfigError("u_- and the Lagrangian table use different grids");
  if (opts.zeta_grid.empty()) throw ConfigError("zeta grid is empty");
  for (double z : opts.zeta_grid) {
    if (!(z > 0.0)) throw ConfigError("zeta grid entries must be positive");
  }
  const TorusGrid& g = u_minus.grid();
  const std::size_t n = g.size();
  std::vector<double> w(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = spec.w(g.node(i), u_minus[i]);
    d[i] = spec.dw(g.node(i), u_minus[i]);
  }
  const double sign = which == Condition::A3 ? -1.0 : 1.0;

  StabilityReport report;
  report.condition = which;
  bool all_positive = true;
  for (double z : opts.zeta_grid) {
    std::vector<double> pot(n);
    for (std::size_t i = 0; i < n; ++i) pot[i] = w[i] + sign * z * d[i];
    const double c = critical_value(base.with_potential(Field(g, std::move(pot))), opts.critical).c;
    report.c_values.emplace_back(z, c);
    if (c < -opts.margin && !report.zeta_found) report.zeta_found = z;
    if (!(c > opts.margin)) all_positive = false;
  }
  if (report.zeta_found) {
    report.verdict = Verdict::holds;
  } else if (all_positive) {
    report.verdict = Verdict::fails;
  } else {
    report.verdict = Verdict::inconclusive;
  }

  const OccupationalMeasure mu = solve_occupational(base.with_potential(Field(g, w)));
  report.A_estimate = extremal_integral(mu, Field(g, d), Sense::min, opts.face_tol);
  return report;
}

StabilityReport check_corollary_a(const LagrangianTable& g_table, const Field& a, const StabilityOptions& opts) {
  if (!(a.grid() == g_table.grid())) throw ConfigError("a(x) and the Lagrangian table use different grids");
  if (a.min() < 0.0) throw ConfigError("a(x) must be nonnegative; its minimum is " + format_double(a.min()));
  StabilityReport report;
  report.condition = Condition::corollary_a;
  const double c = critical_value(g_table, opts.critical).c;
  report.c_G = c;
  const BarrierTable bt = peierls_barrier(g_table, c, opts.barrier);
  report.aubry_indices = bt.aubry_indices;
  if (bt.aubry_indices.empty()) {
    report.verdict = Verdict::inconclusive;
    return report;
  }
  double a0 = std::numeric_limits<double>::infinity();
  for (std::size_t i : bt.aubry_indices) a0 = std::min(a0, a[i]);
  report.a0 = a0;
  report.A_estimate = a0;
  report.verdict = a0 > opts.margin ? Verdict::holds : Verdict::fails;
  return report;
}

DecayResult decay_exponent(const HamiltonianSpec& spec, const LagrangianTable& table, const Field& u_minus,
                           double delta, const ProbeOptions& probe, std::optional<std::pair<double, double>> window) {
  if (!(delta > 0.0)) throw ConfigError("decay amplitude must be positive");
  const double t_lo = window ? window->first : 0.5 * probe.T;
  const double t_hi = window ? window->second : probe.T;
  if (!(t_lo < t_hi) || t_hi > probe.T + 1e-12) throw ConfigError("decay window must satisfy t_lo < t_hi <= T");
  const double floor = 100.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::max(std::abs(u_minus.max()), std::abs(u_minus.min())));

  DecayResult out{0.0, 0.0, 0.0, t_lo, t_hi, false};
  double used_hi = t_hi;
  for (double s : {1.0, -1.0}) {
    std::vector<std::pair<double, double>> pts;
    bool hit_floor = false;
    const EvolveObserver obs = [&](double t, std::span<const double> u) {
      if (t < t_lo - 1e-12) return true;
      if (t > t_hi + 1e-12) return false;
      const double dev = sup_dev(u, u_minus);
      if (dev <= floor) {
        hit_floor = true;
        return false;
      }
      pts.emplace_back(t, std::log(dev));
      return true;
    };
    evolve(u_minus + s * delta, spec, table, evolve_options(probe), obs);
    if (hit_floor) {
      out.window_shrunk = true;
      if (!pts.empty()) used_hi = std::min(used_hi, pts.back().first);
    }
    const double slope = ls_slope(pts);
    (s > 0 ? out.slope_plus : out.slope_minus) = slope;
  }
  out.t_hi = used_hi;
  out.slope = std::max(out.slope_plus, out.slope_minus);
  return out;
}

EscapeResult instability_probe(const HamiltonianSpec& spec, const LagrangianTable& table, const Field& u_minus,
                               double eps, double Delta_target, const ProbeOptions& probe) {
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("probe eps must lie in (0, 1)");
  if (!(Delta_target > eps)) throw ConfigError("Delta target must exceed eps");
  EscapeResult out{false, eps, std::nullopt, {{0.0, eps}}};
  double prev_t = 0.0, prev_dev = eps;
  const EvolveObserver obs = [&](double t, std::span<const double> u) {
    const double dev = sup_dev(u, u_minus);
    out.series.emplace_back(t, dev);
    out.sup_dev = std::max(out.sup_dev, dev);
    if (dev >= Delta_target) {
      double te = t;
      if (prev_dev > 0.0 && dev > prev_dev) {
        te = prev_t + (t - prev_t) * (std::log(Delta_target) - std::log(prev_dev)) / (std::log(dev) - std::log(prev_dev));
      }
      out.escaped = true;
      out.t_escape = te;
      return false;
    }
    prev_t = t;
    prev_dev = dev;
    return true;
  };
  evolve(u_minus - eps, spec, table, evolve_options(probe), obs);
  return out;
}

double basin_estimate(const HamiltonianSpec& spec, const LagrangianTable& table, const Field& u_minus,
                      double delta_hi, const ProbeOptions& probe, int rounds) {
  if (!(delta_hi > 0.0)) throw ConfigError("basin upper bound must be positive");
  auto returns = [&](double delta) {
    for (double s : {1.0, -1.0}) {
      bool back = false;
      const EvolveObserver obs = [&](double, std::span<const double> u) {
        back = sup_dev(u, u_minus) <= 0.5 * delta;
        return !back;
      };
      evolve(u_minus + s * delta, spec, table, evolve_options(probe), obs);
      if (!back) return false;
    }
    return true;
  };
  if (returns(delta_hi)) return delta_hi;
  double lo = 0.0, hi = delta_hi;
  for (int r = 0; r < rounds; ++r) {
    const double mid = 0.5 * (lo + hi);
    if (returns(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double constant_data_gap(const HamiltonianSpec& spec, const LagrangianTable& table, double amplitude,
                         const ProbeOptions& probe) {
  const TorusGrid& g = table.grid();
  const EvolveResult up = evolve(Field::constant(g, amplitude), spec, table, evolve_options(probe));
  const EvolveResult down = evolve(Field::constant(g, -amplitude), spec, table, evolve_options(probe));
  return sup_diff(up.final, down.final);
}

void write_report_json(std::ostream& os, const StabilityReport& r) {
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["condition"] = to_string(r.condition);
  j["verdict"] = to_string(r.verdict);
  j["zeta_found"] = opt(r.zeta_found);
  nlohmann::ordered_json cv = nlohmann::ordered_json::array();
  for (const auto& [z, c] : r.c_values) cv.push_back({{"zeta", z}, {"c", c}});
  j["c_values"] = cv;
  j["A_estimate"] = opt(r.A_estimate);
  j["Delta_estimate"] = opt(r.Delta_estimate);
  j["decay_slope"] = opt(r.decay_slope);
  if (r.condition == Condition::corollary_a) {
    j["c_G"] = opt(r.c_G);
    j["aubry_indices"] = r.aubry_indices;
    j["a0"] = opt(r.a0);
  }
  os << j.dump(2) << '\n';
}

void write_series_csv(std::ostream& os, const std::vector<std::pair<double, double>>& series) {
  os << "t,sup_dev\n";
  for (const auto& [t, d] : series) os << format_double(t) << ',' << format_double(d) << '\n';
}

}  // namespace weakkam
