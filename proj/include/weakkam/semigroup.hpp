#pragma once

// Semi-Lagrangian backward and forward Lax-Oleinik steps for
// u_t + G(x, Du) + W(x, u) = 0 on the periodic grid.
//
// backward: u'(x_i) = min_j [ I(u)(x_i - v_j dt) + dt L(x_i, v_j) ] - dt W(x_i, u*)
// forward:  u'(x_i) = max_j [ I(u)(x_i + v_j dt) - dt L(x_i, v_j) ] + dt W(x_i, u*)
//
// with u* = u(x_i) in explicit mode and u* = u'(x_i) in picard mode.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "weakkam/grid.hpp"
#include "weakkam/hamiltonian.hpp"

namespace weakkam {

enum class ContactMode { explicit_euler, picard };
enum class Direction { backward, forward };

ContactMode parse_contact_mode(std::string_view text);
Direction parse_direction(std::string_view text);

/// Interpolation stencil of the points x_i + shift_j, identical for every i
/// on a uniform grid: I(u)(x_i + shift_j) = (1-w_j) u[i+k_j] + w_j u[i+k_j+1].
struct FootPoints {
  std::vector<std::size_t> offset;  // k_j reduced modulo n
  std::vector<double> weight;       // w_j in [0, 1)
};

/// Stencils for shifts sign * v_j * dt.
FootPoints foot_points(const TorusGrid& grid, std::span<const double> velocities, double signed_dt);

/// out_i = min_j [ I(u)(foot_ij) + dt (L_ij + cost_shift) ]. Entries of u may be
/// +infinity (unreachable). When `argmin` is nonempty it receives the minimizing j.
void transport_min(std::span<const double> u, const FootPoints& feet, const LagrangianTable& table, double dt,
                   double cost_shift, std::span<double> out, std::span<std::uint32_t> argmin = {});

/// out_i = max_j [ I(u)(foot_ij) - dt L_ij ].
void transport_max(std::span<const double> u, const FootPoints& feet, const LagrangianTable& table, double dt,
                   std::span<double> out);

/// Reusable one-step operator for a fixed (spec, table, dt, mode, direction).
class Stepper {
 public:
  Stepper(const HamiltonianSpec& spec, const LagrangianTable& table, double dt, ContactMode mode, Direction direction);

  Field operator()(const Field& u) const;
  void apply(std::span<const double> u, std::span<double> out) const;

  double dt() const noexcept { return dt_; }
  const TorusGrid& grid() const noexcept { return table_->grid(); }

 private:
  double contact(std::size_t i, double u) const;

  const HamiltonianSpec* spec_;
  const LagrangianTable* table_;
  double dt_;
  ContactMode mode_;
  Direction direction_;
  FootPoints feet_;
  std::vector<double> nodes_;
  std::vector<double> frozen_w_;  // W(x_i) when W does not depend on u
  bool w_depends_on_u_;
};

/// Throws ConfigError unless dt * Lambda <= 1/2 and dt * vmax <= period / 2.
void check_cfl(const HamiltonianSpec& spec, const LagrangianTable& table, double dt);

Field backward_step(const Field& u, const HamiltonianSpec& spec, const LagrangianTable& table, double dt,
                    ContactMode mode = ContactMode::explicit_euler);
Field forward_step(const Field& u, const HamiltonianSpec& spec, const LagrangianTable& table, double dt,
                   ContactMode mode = ContactMode::explicit_euler);

struct Snapshot {
  double t;
  Field u;
  double lipschitz;  // discrete Lipschitz constant, logged rather than asserted
};

struct EvolveResult {
  std::vector<Snapshot> snapshots;
  Field final;
  double dt;
  std::size_t steps;
  double final_residual;  // sup|u_N - u_{N-1}| / dt
};

/// Called after every step with (t, u); return false to stop early.
using EvolveObserver = std::function<bool(double, std::span<const double>)>;

struct EvolveOptions {
  double T = 1.0;
  double dt = 1e-3;
  ContactMode mode = ContactMode::explicit_euler;
  Direction direction = Direction::backward;
  std::size_t snap_every = 0;  // 0: only the initial and final fields
};

EvolveResult evolve(const Field& phi, const HamiltonianSpec& spec, const LagrangianTable& table,
                    const EvolveOptions& opts, const EvolveObserver& observer = {});

struct StationaryResult {
  Field u;
  double residual;  // sup_diff(backward_step(u), u) / dt
  std::size_t steps;
};

/// Backward evolution until the per-unit-time residual drops to `tol`.
/// Throws ConvergenceError (carrying the last residual) past `T_max`.
StationaryResult stationary_solve(const Field& phi0, const HamiltonianSpec& spec, const LagrangianTable& table,
                                  double dt, double tol, double T_max,
                                  ContactMode mode = ContactMode::explicit_euler);

}  // namespace weakkam
