#include "weakkam/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace weakkam {

ContactMode parse_contact_mode(std::string_view text) {
  if (text == "explicit") return ContactMode::explicit_euler;
  if (text == "picard") return ContactMode::picard;
  throw ConfigError("unknown contact mode '" + std::string(text) + "' (expected explicit or picard)");
}

Direction parse_direction(std::string_view text) {
  if (text == "backward") return Direction::backward;
  if (text == "forward") return Direction::forward;
  throw ConfigError("unknown direction '" + std::string(text) + "' (expected backward or forward)");
}

FootPoints foot_points(const TorusGrid& grid, std::span<const double> velocities, double signed_dt) {
  FootPoints feet;
  feet.offset.resize(velocities.size());
  feet.weight.resize(velocities.size());
  const double h = grid.spacing();
  for (std::size_t j = 0; j < velocities.size(); ++j) {
    const double cells = velocities[j] * signed_dt / h;
    double fl = std::floor(cells);
    double w = cells - fl;
    if (w < 1e-12) {
      w = 0.0;
    } else if (w > 1.0 - 1e-12) {
      w = 0.0;
      fl += 1.0;
    }
    feet.offset[j] = grid.wrap(static_cast<std::ptrdiff_t>(fl));
    feet.weight[j] = w;
  }
  return feet;
}

namespace {

inline double sample(std::span<const double> u, std::size_t i, std::size_t offset, double w) {
  const std::size_t n = u.size();
  std::size_t a = i + offset;
  if (a >= n) a -= n;
  if (w == 0.0) return u[a];
  const std::size_t b = a + 1 == n ? 0 : a + 1;
  return (1.0 - w) * u[a] + w * u[b];
}

}  // namespace

void transport_min(std::span<const double> u, const FootPoints& feet, const LagrangianTable& table, double dt,
                   double cost_shift, std::span<double> out, std::span<std::uint32_t> argmin) {
  const std::size_t n = u.size();
  const std::size_t m = table.velocity_count();
  const auto L = table.values();
  const bool want_arg = !argmin.empty();
#pragma omp parallel for schedule(static) if (n * m > 65536)
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = static_cast<std::uint32_t>(table.zero_velocity());
    const double* row = L.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double val = sample(u, i, feet.offset[j], feet.weight[j]) + dt * (row[j] + cost_shift);
      if (val < best) {
        best = val;
        arg = static_cast<std::uint32_t>(j);
      }
    }
    out[i] = best;
    if (want_arg) argmin[i] = arg;
  }
}

void transport_max(std::span<const double> u, const FootPoints& feet, const LagrangianTable& table, double dt,
                   std::span<double> out) {
  const std::size_t n = u.size();
  const std::size_t m = table.velocity_count();
  const auto L = table.values();
#pragma omp parallel for schedule(static) if (n * m > 65536)
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    const double* row = L.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      best = std::max(best, sample(u, i, feet.offset[j], feet.weight[j]) - dt * row[j]);
    }
    out[i] = best;
  }
}

void check_cfl(const HamiltonianSpec& spec, const LagrangianTable& table, double dt) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (dt * spec.lambda_bound > 0.5 + 1e-12) {
    throw ConfigError("dt*Lambda exceeds 1/2 (dt=" + format_double(dt) + ", Lambda=" +
                      format_double(spec.lambda_bound) + ")");
  }
  if (dt * table.vmax() > 0.5 * table.grid().period() + 1e-12) {
    throw ConfigError("dt*vmax exceeds period/2 (dt=" + format_double(dt) + ", vmax=" + format_double(table.vmax()) +
                      ")");
  }
}

Stepper::Stepper(const HamiltonianSpec& spec, const LagrangianTable& table, double dt, ContactMode mode,
                 Direction direction)
    : spec_(&spec),
      table_(&table),
      dt_(dt),
      mode_(mode),
      direction_(direction),
      w_depends_on_u_(spec.W.uses(Var::u)) {
  check_cfl(spec, table, dt);
  const double sign = direction == Direction::backward ? -1.0 : 1.0;
  feet_ = foot_points(table.grid(), table.velocities(), sign * dt);
  const std::size_t n = table.grid().size();
  nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i) nodes_[i] = table.grid().node(i);
  if (!w_depends_on_u_) {
    frozen_w_.resize(n);
    for (std::size_t i = 0; i < n; ++i) frozen_w_[i] = spec.w(nodes_[i], 0.0);
  }
}

double Stepper::contact(std::size_t i, double u) const {
  return w_depends_on_u_ ? spec_->w(nodes_[i], u) : frozen_w_[i];
}

void Stepper::apply(std::span<const double> u, std::span<double> out) const {
  const std::size_t n = u.size();
  if (n != nodes_.size()) throw ConfigError("field does not match the stepper grid");
  const double sign = direction_ == Direction::backward ? -1.0 : 1.0;
  if (direction_ == Direction::backward) {
    transport_min(u, feet_, *table_, dt_, 0.0, out);
  } else {
    transport_max(u, feet_, *table_, dt_, out);
  }
  if (!w_depends_on_u_) {
    for (std::size_t i = 0; i < n; ++i) out[i] += sign * dt_ * frozen_w_[i];
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double transported = out[i];
    double z = transported + sign * dt_ * contact(i, u[i]);
    if (mode_ == ContactMode::picard) {
      // z = transported + sign*dt*W(x_i, z); contraction factor dt*Lambda <= 1/2.
      bool converged = false;
      for (int it = 0; it < 50; ++it) {
        const double next = transported + sign * dt_ * contact(i, z);
        const double delta = std::abs(next - z);
        z = next;
        if (delta <= 1e-13 * std::max(1.0, std::abs(z))) {
          converged = true;
          break;
        }
      }
      if (!converged) throw SolverError("picard iteration did not converge at node " + std::to_string(i));
    }
    out[i] = z;
  }
}

Field Stepper::operator()(const Field& u) const {
  std::vector<double> out(u.size());
  apply(u.values(), out);
  return Field(u.grid(), std::move(out));
}

Field backward_step(const Field& u, const HamiltonianSpec& spec, const LagrangianTable& table, double dt,
                    ContactMode mode) {
  return Stepper(spec, table, dt, mode, Direction::backward)(u);
}

Field forward_step(const Field& u, const HamiltonianSpec& spec, const LagrangianTable& table, double dt,
                   ContactMode mode) {
  return Stepper(spec, table, dt, mode, Direction::forward)(u);
}

namespace {

double residual_per_time(std::span<const double> a, std::span<const double> b, double dt) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d / dt;
}

void require_finite(std::span<const double> u, double t) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i])) {
      throw SolverError("nonfinite value at node " + std::to_string(i) + " at t=" + format_double(t));
    }
  }
}

}  // namespace

EvolveResult evolve(const Field& phi, const HamiltonianSpec& spec, const LagrangianTable& table,
                    const EvolveOptions& opts, const EvolveObserver& observer) {
  if (!(opts.T > 0.0)) throw ConfigError("evolution horizon T must be positive");
  if (!(phi.grid() == table.grid())) throw ConfigError("initial field and Lagrangian table use different grids");
  const Stepper step(spec, table, opts.dt, opts.mode, opts.direction);
  const auto total = static_cast<std::size_t>(std::ceil(opts.T / opts.dt - 1e-9));

  std::vector<double> cur(phi.values().begin(), phi.values().end());
  std::vector<double> next(cur.size());
  std::vector<Snapshot> snaps;
  snaps.push_back({0.0, phi, phi.lipschitz()});
  double residual = 0.0;
  std::size_t done = 0;
  bool stopped = false;
  for (std::size_t s = 1; s <= total && !stopped; ++s) {
    step.apply(cur, next);
    const double t = static_cast<double>(s) * opts.dt;
    require_finite(next, t);
    residual = residual_per_time(next, cur, opts.dt);
    cur.swap(next);
    done = s;
    if (observer && !observer(t, cur)) stopped = true;
    const bool last = s == total || stopped;
    if ((opts.snap_every != 0 && s % opts.snap_every == 0) || last) {
      Field f(phi.grid(), cur);
      const double lip = f.lipschitz();
      snaps.push_back({t, std::move(f), lip});
    }
  }
  Field final = snaps.back().u;
  return EvolveResult{std::move(snaps), std::move(final), opts.dt, done, residual};
}

StationaryResult stationary_solve(const Field& phi0, const HamiltonianSpec& spec, const LagrangianTable& table,
                                  double dt, double tol, double T_max, ContactMode mode) {
  if (!(tol > 0.0)) throw ConfigError("stationary tolerance must be positive");
  if (!(phi0.grid() == table.grid())) throw ConfigError("initial field and Lagrangian table use different grids");
  const Stepper step(spec, table, dt, mode, Direction::backward);
  const auto max_steps = static_cast<std::size_t>(std::ceil(T_max / dt));
  std::vector<double> cur(phi0.values().begin(), phi0.values().end());
  std::vector<double> next(cur.size());
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s <= max_steps; ++s) {
    step.apply(cur, next);
    require_finite(next, static_cast<double>(s + 1) * dt);
    residual = residual_per_time(next, cur, dt);
    if (residual <= tol) return StationaryResult{Field(phi0.grid(), cur), residual, s};
    cur.swap(next);
  }
  throw ConvergenceError("stationary solve did not reach tol=" + format_double(tol) + " by T=" + format_double(T_max) +
                             " (last residual " + format_double(residual) + ")",
                         residual);
}

}  // namespace weakkam
