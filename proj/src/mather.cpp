#include "weakkam/mather.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "weakkam/semigroup.hpp"

namespace weakkam {

namespace {

LinearProgram build_lp(const TorusGrid& grid, std::span<const double> v, std::span<const double> objective,
                       std::span<const double> face_cost) {
  const std::size_t n = grid.size();
  const std::size_t m = v.size();
  if (objective.size() != n * m) throw ConfigError("occupational objective has wrong size");
  const bool face = !face_cost.empty();
  LinearProgram lp(n + 1 + (face ? 1 : 0));
  lp.set_rhs(0, 1.0);
  const auto face_row = static_cast<std::uint32_t>(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ahead = static_cast<std::uint32_t>(1 + (i + 1) % n);
    const auto behind = static_cast<std::uint32_t>(1 + (i + n - 1) % n);
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<LinearProgram::Entry> entries{{0u, 1.0}};
      if (v[j] != 0.0) {
        entries.emplace_back(ahead, v[j]);
        entries.emplace_back(behind, -v[j]);
      }
      if (face) entries.emplace_back(face_row, face_cost[i * m + j]);
      lp.add_column(objective[i * m + j], std::move(entries));
    }
  }
  return lp;
}

}  // namespace

double OccupationalMeasure::node_mass(std::size_t i) const {
  const std::size_t m = velocities.size();
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) s += weights[i * m + j];
  return s;
}

double OccupationalMeasure::mean_velocity() const {
  const std::size_t m = velocities.size();
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * velocities[k % m];
  return s;
}

LinearProgram occupational_lp(const TorusGrid& grid, std::span<const double> velocities,
                              std::span<const double> cost) {
  return build_lp(grid, velocities, cost, {});
}

OccupationalMeasure solve_occupational(const LagrangianTable& lt, const Field* potential, const LpOptions& lp_opts) {
  const TorusGrid& grid = lt.grid();
  const std::size_t n = grid.size();
  const std::size_t m = lt.velocity_count();
  if (potential && !(potential->grid() == grid)) throw ConfigError("potential lives on a different grid");
  std::vector<double> cost(lt.values().begin(), lt.values().end());
  if (potential) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) cost[i * m + j] -= (*potential)[i];
    }
  }
  const LpSolution sol = lp_simplex(occupational_lp(grid, lt.velocities(), cost), lp_opts);
  std::vector<double> v(lt.velocities().begin(), lt.velocities().end());
  return OccupationalMeasure{grid, std::move(v), sol.x, std::move(cost), sol.value};
}

double closedness_residual(const OccupationalMeasure& mu) {
  const std::size_t n = mu.grid.size();
  const std::size_t m = mu.velocities.size();
  const double h = mu.grid.spacing();
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t before = (k + n - 1) % n;
    const std::size_t after = (k + 1) % n;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      s += mu.velocities[j] * (mu.weight(before, j) - mu.weight(after, j)) / (2.0 * h);
    }
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

double extremal_integral(const OccupationalMeasure& base, const Field& f, Sense sense, double face_tol,
                         const LpOptions& lp_opts) {
  if (!(face_tol > 0.0)) throw ConfigError("face tolerance must be positive");
  if (!(f.grid() == base.grid)) throw ConfigError("integrand lives on a different grid than the measure");
  const std::size_t n = base.grid.size();
  const std::size_t m = base.velocities.size();
  const double s = sense == Sense::min ? 1.0 : -1.0;
  std::vector<double> objective(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) objective[i * m + j] = s * f[i];
  }
  LinearProgram lp = build_lp(base.grid, base.velocities, objective, base.cost);
  const std::size_t face_row = n + 1;
  lp.add_column(0.0, {{static_cast<std::uint32_t>(face_row), 1.0}});
  lp.set_rhs(face_row, base.value + face_tol);
  const LpSolution sol = lp_simplex(lp, lp_opts);
  return s * sol.value;
}

std::vector<std::vector<double>> minimal_action(const LagrangianTable& lt, double c,
                                                const std::vector<double>& horizons, double dt) {
  if (horizons.empty()) throw ConfigError("horizon list is empty");
  for (std::size_t k = 0; k < horizons.size(); ++k) {
    if (!(horizons[k] > 0.0) || (k > 0 && !(horizons[k] > horizons[k - 1]))) {
      throw ConfigError("horizons must be positive and increasing");
    }
  }
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (dt * lt.vmax() > 0.5 * lt.grid().period() + 1e-12) throw ConfigError("dt*vmax exceeds period/2");

  const std::size_t n = lt.grid().size();
  std::vector<std::size_t> marks;
  for (double t : horizons) marks.push_back(static_cast<std::size_t>(std::llround(t / dt)));
  const FootPoints feet = foot_points(lt.grid(), lt.velocities(), -dt);
  std::vector<std::vector<double>> out(horizons.size(), std::vector<double>(n * n));
  const double inf = std::numeric_limits<double>::infinity();

#pragma omp parallel for schedule(dynamic)
  for (std::size_t x = 0; x < n; ++x) {
    std::vector<double> cur(n, inf), next(n);
    cur[x] = 0.0;
    std::size_t mark = 0;
    for (std::size_t s = 1; mark < marks.size(); ++s) {
      transport_min(cur, feet, lt, dt, c, next);
      cur.swap(next);
      while (mark < marks.size() && s == marks[mark]) {
        std::copy(cur.begin(), cur.end(), out[mark].begin() + static_cast<std::ptrdiff_t>(x * n));
        ++mark;
      }
    }
  }
  for (const auto& table : out) {
    for (double v : table) {
      if (std::isnan(v)) throw SolverError("minimal action produced NaN");
    }
  }
  return out;
}

BarrierTable peierls_barrier(const LagrangianTable& lt, double c, const BarrierOptions& opts) {
  const double h = lt.grid().spacing();
  const double dt = opts.dt > 0.0 ? opts.dt : opts.safety * h / lt.vmax();
  if (dt * lt.vmax() > opts.safety * h * (1.0 + 1e-12)) {
    throw ConfigError("barrier dt*vmax exceeds safety*h (dt=" + format_double(dt) + ")");
  }
  const auto tables = minimal_action(lt, c, opts.t_list, dt);
  const std::size_t n = lt.grid().size();
  std::vector<double> best(tables.front());
  for (const auto& t : tables) {
    for (std::size_t k = 0; k < n * n; ++k) best[k] = std::min(best[k], t[k]);
  }
  for (double v : best) {
    if (!std::isfinite(v)) throw SolverError("barrier has unreachable pairs; increase the horizons or vmax");
  }
  BarrierTable bt{lt.grid(), std::move(best), c, {}};
  bt.aubry_indices = aubry_set(bt, opts.aubry_tol);
  return bt;
}

std::vector<std::size_t> aubry_set(const BarrierTable& bt, double tol) {
  if (!(tol > 0.0)) throw ConfigError("Aubry tolerance must be positive");
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < bt.grid.size(); ++y) {
    if (bt(y, y) <= tol) out.push_back(y);
  }
  return out;
}

void write_measure_csv(std::ostream& os, const OccupationalMeasure& mu) {
  os << "x,v,weight\n";
  const std::size_t m = mu.velocities.size();
  for (std::size_t k = 0; k < mu.weights.size(); ++k) {
    if (mu.weights[k] < 1e-12) continue;
    os << format_double(mu.grid.node(k / m)) << ',' << format_double(mu.velocities[k % m]) << ','
       << format_double(mu.weights[k]) << '\n';
  }
}

void write_barrier_csv(std::ostream& os, const BarrierTable& bt) {
  os << "x,y,h\n";
  const std::size_t n = bt.grid.size();
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      os << format_double(bt.grid.node(x)) << ',' << format_double(bt.grid.node(y)) << ',' << format_double(bt(x, y))
         << '\n';
    }
  }
}

}  // namespace weakkam
