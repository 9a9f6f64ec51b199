#include "weakkam/homogenize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace weakkam {

namespace {

constexpr std::size_t kLatticeXY = 16;
constexpr std::size_t kLatticeP = 9;
constexpr std::size_t kLatticeU = 9;
constexpr double kURadius = 4.0;

VarSlots slots(double x, double y, double p, double u) {
  VarSlots s{};
  s[static_cast<std::size_t>(Var::x)] = x;
  s[static_cast<std::size_t>(Var::y)] = y;
  s[static_cast<std::size_t>(Var::p)] = p;
  s[static_cast<std::size_t>(Var::u)] = u;
  return s;
}

double lattice(std::size_t k, std::size_t count, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
}

void require_two_scale_vars(const Expr& e, const char* role) {
  for (Var v : {Var::v, Var::eps}) {
    if (e.uses(v)) {
      throw ConfigError(std::string(role) + " formula '" + e.source() + "' may not use '" + std::string(var_name(v)) + "'");
    }
  }
}

Expr difference(const Expr& a, const Expr& b) { return parse("(" + a.to_string() + ")-(" + b.to_string() + ")"); }

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = lattice(k, count, lo, hi);
  return out;
}

// Segment index and weight for linear interpolation on a sorted axis, with
// extrapolation from the end segments.
std::pair<std::size_t, double> locate(const std::vector<double>& axis, double t) {
  if (axis.size() == 1) return {0, 0.0};
  const auto it = std::upper_bound(axis.begin(), axis.end(), t);
  std::size_t j = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
  j = std::min(j, axis.size() - 2);
  return {j, (t - axis[j]) / (axis[j + 1] - axis[j])};
}

double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / k;
    my += ys[i] / k;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

}  // namespace

double HomogProblem::h(double x, double y, double p, double u) const { return H.eval(slots(x, y, p, u)); }

HomogProblem make_homog_problem(const std::string& H, const std::string& dHu, std::optional<double> Lambda1,
                                std::optional<double> Lambda2, double vmax, double pmax) {
  HomogProblem hp;
  hp.H = parse(H);
  hp.dHu = parse(dHu);
  require_two_scale_vars(hp.H, "H");
  require_two_scale_vars(hp.dHu, "dHu");
  if (!(vmax > 0.0) || !(pmax > 0.0)) throw ConfigError("vmax and pmax must be positive");
  hp.vmax = vmax;
  hp.pmax = pmax;
  hp.G = hp.H.bind(Var::u, 0.0);
  const Expr u_part = hp.H.bind(Var::p, 0.0).bind(Var::y, 0.0);
  hp.W = difference(u_part, u_part.bind(Var::u, 0.0));
  hp.dWu = hp.dHu.bind(Var::p, 0.0).bind(Var::y, 0.0);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  double split = 0.0, nonconvex = 0.0, scale = 1.0;
  bool x_dep = false;
  for (std::size_t a = 0; a < kLatticeXY; ++a) {
    const double x = static_cast<double>(a) / kLatticeXY;
    for (std::size_t b = 0; b < kLatticeXY; ++b) {
      const double y = static_cast<double>(b) / kLatticeXY;
      for (std::size_t d = 0; d < kLatticeU; ++d) {
        const double u = lattice(d, kLatticeU, -kURadius, kURadius);
        const double w = hp.W.eval(slots(x, 0.0, 0.0, u));
        for (std::size_t c = 0; c < kLatticeP; ++c) {
          const double p = lattice(c, kLatticeP, -pmax, pmax);
          const double val = hp.h(x, y, p, u);
          scale = std::max(scale, std::abs(val));
          split = std::max(split, std::abs(val - hp.h(x, y, p, 0.0) - w));
          if (std::abs(val - hp.h(0.0, y, p, u)) > 1e-12 * (1.0 + std::abs(val))) x_dep = true;
          const double du = hp.dHu.eval(slots(x, y, p, u));
          lo = std::min(lo, du);
          hi = std::max(hi, du);
          if (c + 2 < kLatticeP) {
            const double p2 = lattice(c + 2, kLatticeP, -pmax, pmax);
            const double mid = hp.h(x, y, 0.5 * (p + p2), u);
            nonconvex = std::max(nonconvex, mid - 0.5 * (val + hp.h(x, y, p2, u)));
          }
        }
      }
    }
  }
  if (split > 1e-9 * scale) {
    throw ConfigError("H must split as G(x,y,p) + W(x,u); the sampled defect is " + format_double(split));
  }
  if (nonconvex > 1e-9 * scale) {
    throw ConfigError("H is not convex in p (midpoint defect " + format_double(nonconvex) + ")");
  }
  hp.Lambda1 = Lambda1.value_or(lo);
  hp.Lambda2 = Lambda2.value_or(hi);
  if (!(hp.Lambda1 > 0.0)) throw ConfigError("Lambda1 must be positive, got " + format_double(hp.Lambda1));
  if (lo < hp.Lambda1 - 1e-12 || hi > hp.Lambda2 + 1e-12) {
    throw ConfigError("dHu ranges over [" + format_double(lo) + ", " + format_double(hi) + "] outside [Lambda1, Lambda2] = [" +
                      format_double(hp.Lambda1) + ", " + format_double(hp.Lambda2) + "]");
  }
  hp.x_dependent = x_dep;

  for (std::size_t a = 0; a < kLatticeXY; ++a) {
    const double x = static_cast<double>(a) / kLatticeXY;
    double top = -std::numeric_limits<double>::infinity(), edge = -top;
    for (std::size_t b = 0; b < kLatticeXY; ++b) {
      const double y = static_cast<double>(b) / kLatticeXY;
      top = std::max(top, hp.h(x, y, 0.0, 0.0));
      edge = std::min({edge, hp.h(x, y, pmax, 0.0), hp.h(x, y, -pmax, 0.0)});
    }
    if (!(edge > top)) {
      hp.warnings.push_back("H at |p|=pmax does not exceed its p=0 maximum near x=" + format_double(x) +
                            "; coercivity is doubtful");
      break;
    }
  }
  return hp;
}

double cell_problem(const HomogProblem& hp, double x, double p, double c, const CellOptions& opts) {
  if (!std::isfinite(x) || !std::isfinite(p) || !std::isfinite(c)) throw ConfigError("cell coordinates must be finite");
  const TorusGrid fast(opts.n_fast);
  const auto g = [&](std::size_t i, double q) { return hp.h(x, fast.node(i), p + q, c); };
  return critical_value(legendre(g, fast, opts.vmax, opts.pmax, opts.m, opts.k), opts.critical).c;
}

EffectiveTable::EffectiveTable(HomogProblem hp, const TableAxes& axes, std::vector<double> values)
    : hp_(std::move(hp)), values_(std::move(values)), tol_(axes.table_tol) {
  if (axes.x_count == 0 || axes.p_count < 2 || axes.c_count == 0) {
    throw ConfigError("effective table needs at least one x node, two p nodes and one c node");
  }
  if (!(axes.p_max > 0.0) || axes.c_max < axes.c_min) throw ConfigError("effective table ranges are empty");
  x_ = linspace(0.0, 1.0 - 1.0 / static_cast<double>(axes.x_count), axes.x_count);
  p_ = linspace(-axes.p_max, axes.p_max, axes.p_count);
  c_ = linspace(axes.c_min, axes.c_max, axes.c_count);
  if (values_.size() != x_.size() * p_.size() * c_.size()) throw ConfigError("effective table has the wrong size");

  gbar_.assign(x_.size() * p_.size(), 0.0);
  for (std::size_t i = 0; i < x_.size(); ++i) {
    for (std::size_t j = 0; j < p_.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < c_.size(); ++k) s += at(i, j, k) - hp_.W.eval(slots(x_[i], 0.0, 0.0, c_[k]));
      gbar_[i * p_.size() + j] = s / static_cast<double>(c_.size());
    }
  }
  for (std::size_t i = 0; i < x_.size(); ++i) {
    for (std::size_t j = 0; j < p_.size(); ++j) {
      for (std::size_t k = 0; k < c_.size(); ++k) {
        const double r = at(i, j, k) - hp_.W.eval(slots(x_[i], 0.0, 0.0, c_[k])) - gbar_[i * p_.size() + j];
        split_defect_ = std::max(split_defect_, std::abs(r));
      }
    }
  }
}

double EffectiveTable::operator()(double x, double p, double c) const {
  const std::size_t nx = x_.size();
  const double s = (x - std::floor(x)) * static_cast<double>(nx);
  const std::size_t i0 = std::min(static_cast<std::size_t>(s), nx - 1);
  const std::size_t i1 = (i0 + 1) % nx;
  const double wx = nx == 1 ? 0.0 : s - static_cast<double>(i0);
  const auto [j, wp] = locate(p_, p);
  const auto [k, wc] = locate(c_, c);
  const std::size_t k1 = c_.size() == 1 ? k : k + 1;
  auto plane = [&](std::size_t i) {
    const double a = (1.0 - wc) * at(i, j, k) + wc * at(i, j, k1);
    const double b = (1.0 - wc) * at(i, j + 1, k) + wc * at(i, j + 1, k1);
    return (1.0 - wp) * a + wp * b;
  };
  return (1.0 - wx) * plane(i0) + wx * plane(i1);
}

double EffectiveTable::momentum_part(double x, double p) const {
  const std::size_t nx = x_.size();
  const double s = (x - std::floor(x)) * static_cast<double>(nx);
  const std::size_t i0 = std::min(static_cast<std::size_t>(s), nx - 1);
  const std::size_t i1 = (i0 + 1) % nx;
  const double wx = nx == 1 ? 0.0 : s - static_cast<double>(i0);
  const auto [j, wp] = locate(p_, p);
  auto line = [&](std::size_t i) {
    return (1.0 - wp) * gbar_[i * p_.size() + j] + wp * gbar_[i * p_.size() + j + 1];
  };
  return (1.0 - wx) * line(i0) + wx * line(i1);
}

void EffectiveTable::verify() const {
  auto where = [&](std::size_t i, std::size_t j, std::size_t k) {
    return "(x=" + format_double(x_[i]) + ", p=" + format_double(p_[j]) + ", c=" + format_double(c_[k]) + ")";
  };
  for (std::size_t i = 0; i < x_.size(); ++i) {
    for (std::size_t j = 0; j < p_.size(); ++j) {
      for (std::size_t k = 0; k < c_.size(); ++k) {
        if (k + 1 < c_.size() && at(i, j, k + 1) < at(i, j, k) + hp_.Lambda1 * (c_[k + 1] - c_[k]) - tol_) {
          throw SolverError("effective table is not Lambda1-monotone in c at " + where(i, j, k));
        }
        if (j + 2 < p_.size() && at(i, j + 1, k) > 0.5 * (at(i, j, k) + at(i, j + 2, k)) + tol_) {
          throw SolverError("effective table is not convex in p at " + where(i, j + 1, k));
        }
      }
    }
  }
}

EffectiveTable build_effective_table(const HomogProblem& hp, const TableAxes& axes, const CellOptions& cell) {
  const EffectiveTable shape(hp, axes, std::vector<double>(axes.x_count * axes.p_count * axes.c_count, 0.0));
  const auto& xs = shape.x_nodes();
  const auto& ps = shape.p_nodes();
  const auto& cs = shape.c_nodes();
  // W carries no fast variable, so Hbar(x, p, c) - W(x, c) does not depend on c
  // and one cell per (x, p) suffices; x-independent problems need one x.
  const std::size_t solved_x = hp.x_dependent ? xs.size() : 1;
  const double c0 = cs.front();
  const std::size_t jobs = solved_x * ps.size();
  std::vector<double> base(jobs, 0.0);
  std::vector<std::string> failure(jobs);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(jobs); ++q) {
    const auto job = static_cast<std::size_t>(q);
    const std::size_t i = job / ps.size(), j = job % ps.size();
    try {
      base[job] = cell_problem(hp, xs[i], ps[j], c0, cell);
    } catch (const Error& e) {
      failure[job] = "cell problem at (x=" + format_double(xs[i]) + ", p=" + format_double(ps[j]) +
                     ", c=" + format_double(c0) + ") failed: " + e.what();
    }
  }
  for (const auto& f : failure) {
    if (!f.empty()) throw SolverError(f);
  }
  std::vector<double> values(xs.size() * ps.size() * cs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t src = hp.x_dependent ? i : 0;
    const double w0 = hp.W.eval(slots(xs[i], 0.0, 0.0, c0));
    for (std::size_t j = 0; j < ps.size(); ++j) {
      for (std::size_t k = 0; k < cs.size(); ++k) {
        values[(i * ps.size() + j) * cs.size() + k] =
            base[src * ps.size() + j] + hp.W.eval(slots(xs[i], 0.0, 0.0, cs[k])) - w0;
      }
    }
  }
  EffectiveTable et(hp, axes, std::move(values));
  et.verify();
  return et;
}

StationaryResult solve_effective(const EffectiveTable& et, const TorusGrid& slow, const SolveOptions& opts) {
  const HomogProblem& hp = et.problem();
  if (!(hp.Lambda1 > 0.0)) throw ConfigError("effective solve needs Lambda1 > 0");
  if (et.separability_defect() > et.table_tol()) {
    throw ConfigError("effective table does not split as Gbar(x,p) + W(x,c); defect " +
                      format_double(et.separability_defect()));
  }
  HamiltonianSpec spec;
  spec.name = "effective";
  spec.W = hp.W;
  spec.dWu = hp.dWu;
  spec.lambda_bound = hp.Lambda2;
  spec.vmax = hp.vmax;
  spec.pmax = et.p_nodes().back();
  const auto g = [&](std::size_t i, double p) { return et.momentum_part(slow.node(i), p); };
  const LagrangianTable table = legendre(g, slow, spec.vmax, spec.pmax, opts.m, opts.k);
  StationaryResult r = stationary_solve(Field::constant(slow, 0.0), spec, table, opts.dt, opts.tol, opts.T_max, opts.mode);
  if (2.0 * r.u.lipschitz() > spec.pmax) {
    throw ConfigError("effective table p-range " + format_double(spec.pmax) + " is below twice the Lipschitz constant " +
                      format_double(r.u.lipschitz()) + " of the effective solution");
  }
  return r;
}

StationaryResult solve_multiscale(const HomogProblem& hp, std::size_t k, std::size_t n_per_period,
                                  const SolveOptions& opts) {
  if (k == 0) throw ConfigError("eps = 1/k needs k >= 1");
  const TorusGrid fine(k * n_per_period);
  HamiltonianSpec spec;
  spec.name = "two_scale";
  spec.G = hp.G;
  spec.W = hp.W;
  spec.dWu = hp.dWu;
  spec.lambda_bound = hp.Lambda2;
  spec.vmax = hp.vmax;
  spec.pmax = hp.pmax;
  spec.eps = 1.0 / static_cast<double>(k);
  const LagrangianTable table = legendre(spec, fine, opts.m, opts.k);
  return stationary_solve(Field::constant(fine, 0.0), spec, table, opts.dt, opts.tol, opts.T_max, opts.mode);
}

RateResult rate_experiment(const HomogProblem& hp, const RateOptions& opts) {
  if (opts.ks.size() < 2) throw ConfigError("rate experiment needs at least two eps values");
  for (std::size_t a = 1; a < opts.ks.size(); ++a) {
    if (opts.ks[a] <= opts.ks[a - 1]) throw ConfigError("eps ladder must be strictly decreasing");
  }
  const EffectiveTable et = build_effective_table(hp, opts.axes, opts.cell);
  const TorusGrid slow(opts.n_slow);
  Field u_bar = solve_effective(et, slow, opts.solve).u;

  double curvature = 0.0;
  const double hs = slow.spacing();
  for (std::size_t i = 0; i < slow.size(); ++i) {
    const double d2 = u_bar[slow.wrap(static_cast<std::ptrdiff_t>(i) - 1)] - 2.0 * u_bar[i] + u_bar[(i + 1) % slow.size()];
    curvature = std::max(curvature, std::abs(d2) / (hs * hs));
  }

  std::vector<double> eps, errors, log_eps, log_err;
  for (std::size_t k : opts.ks) {
    const Field u_eps = solve_multiscale(hp, k, opts.n_per_period, opts.solve).u;
    const double e = 1.0 / static_cast<double>(k);
    const double err = sup_diff(u_eps, resample(u_bar, u_eps.grid()));
    eps.push_back(e);
    errors.push_back(err);
    log_eps.push_back(std::log(e));
    log_err.push_back(std::log(std::max(err, std::numeric_limits<double>::min())));
  }
  double C_fit = 0.0;
  bool monotone = true, noisy = true;
  for (std::size_t a = 0; a < eps.size(); ++a) {
    C_fit = std::max(C_fit, errors[a] / std::sqrt(eps[a]));
    if (errors[a] > opts.noise_floor) noisy = false;
    if (a > 0 && errors[a] > errors[a - 1] + opts.noise_floor) monotone = false;
  }
  std::optional<double> slope;
  if (!noisy) slope = ls_slope(log_eps, log_err);
  return RateResult{std::move(eps), std::move(errors), slope, C_fit, noisy, monotone, hs * hs / 8.0 * curvature,
                    std::move(u_bar)};
}

void write_rate_csv(std::ostream& os, const RateResult& r) {
  os << "eps,error,sqrt_eps_ratio\n";
  for (std::size_t a = 0; a < r.eps.size(); ++a) {
    os << format_double(r.eps[a]) << ',' << format_double(r.errors[a]) << ','
       << format_double(r.errors[a] / std::sqrt(r.eps[a])) << '\n';
  }
}

void write_table_csv(std::ostream& os, const EffectiveTable& et) {
  os << "x,p,c,Hbar\n";
  for (std::size_t i = 0; i < et.x_nodes().size(); ++i) {
    for (std::size_t j = 0; j < et.p_nodes().size(); ++j) {
      for (std::size_t k = 0; k < et.c_nodes().size(); ++k) {
        os << format_double(et.x_nodes()[i]) << ',' << format_double(et.p_nodes()[j]) << ','
           << format_double(et.c_nodes()[k]) << ',' << format_double(et.at(i, j, k)) << '\n';
      }
    }
  }
}

}  // namespace weakkam
