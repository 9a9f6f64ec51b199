#pragma once

// Periodic homogenization of u + H(x, x/eps, Du, u) = 0 on the unit torus:
// cell problems for the effective Hamiltonian Hbar(x, p, c), the effective
// stationary solve, two-scale solves for eps = 1/k and the sqrt(eps) rate fit.
//
// H must split as G(x, y, p) + W(x, u); the fast variable y enters only
// through G.

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "weakkam/critical.hpp"
#include "weakkam/grid.hpp"
#include "weakkam/hamiltonian.hpp"
#include "weakkam/semigroup.hpp"

namespace weakkam {

struct HomogProblem {
  Expr H;    // in (x, y, p, u)
  Expr dHu;  // in (x, y, p, u)
  double Lambda1 = 0.0;
  double Lambda2 = 0.0;
  double vmax = 4.0;
  double pmax = 4.0;

  Expr G;    // H with u = 0
  Expr W;    // H(x, 0, 0, u) - H(x, 0, 0, 0)
  Expr dWu;  // dHu with y = p = 0
  bool x_dependent = true;
  std::vector<std::string> warnings;

  double h(double x, double y, double p, double u) const;
};

/// Parses and validates H and dHu on a sampled lattice: Lambda1 <= dHu <= Lambda2
/// with Lambda1 > 0, midpoint convexity in p, and the G(x,y,p) + W(x,u) split.
/// Missing Lambda bounds are sampled.
HomogProblem make_homog_problem(const std::string& H, const std::string& dHu,
                                std::optional<double> Lambda1 = std::nullopt,
                                std::optional<double> Lambda2 = std::nullopt, double vmax = 4.0, double pmax = 4.0);

struct CellOptions {
  std::size_t n_fast = 64;
  std::size_t m = 65;
  std::size_t k = 64;
  double vmax = 8.0;
  double pmax = 6.0;
  CriticalOptions critical;
};

/// Critical value of q -> H(x, y, p + q, c) on the fast torus.
double cell_problem(const HomogProblem& hp, double x, double p, double c, const CellOptions& opts = {});

struct TableAxes {
  std::size_t x_count = 9;
  std::size_t p_count = 17;
  double p_max = 2.0;
  std::size_t c_count = 5;
  double c_min = -1.0;
  double c_max = 1.0;
  double table_tol = 1e-3;
};

class EffectiveTable {
 public:
  EffectiveTable(HomogProblem hp, const TableAxes& axes, std::vector<double> values);

  const HomogProblem& problem() const noexcept { return hp_; }
  const std::vector<double>& x_nodes() const noexcept { return x_; }
  const std::vector<double>& p_nodes() const noexcept { return p_; }
  const std::vector<double>& c_nodes() const noexcept { return c_; }
  double table_tol() const noexcept { return tol_; }

  double at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return values_[(i * p_.size() + j) * c_.size() + k];
  }
  /// Trilinear interpolation, periodic in x and linearly extrapolated in p and c.
  double operator()(double x, double p, double c) const;

  /// Hbar(x, p, c) - W(x, c) averaged over the c nodes, bilinear in (x, p).
  double momentum_part(double x, double p) const;
  /// max |Hbar - W - momentum part| over the nodes.
  double separability_defect() const noexcept { return split_defect_; }

  /// Throws SolverError naming the first node that breaks Lambda1-monotonicity
  /// in c or convexity in p beyond table_tol.
  void verify() const;

 private:
  HomogProblem hp_;
  std::vector<double> x_, p_, c_;
  std::vector<double> values_;
  std::vector<double> gbar_;  // x_count * p_count
  double tol_;
  double split_defect_ = 0.0;
};

/// Runs one cell problem per node in parallel, then verifies the table.
EffectiveTable build_effective_table(const HomogProblem& hp, const TableAxes& axes = {}, const CellOptions& cell = {});

struct SolveOptions {
  std::size_t m = 65;
  std::size_t k = 64;
  double dt = 2e-3;
  double tol = 1e-8;
  double T_max = 200.0;
  ContactMode mode = ContactMode::explicit_euler;
};

/// Stationary solve of Hbar(x, Du, u) = 0 on `slow`. ConfigError when the
/// table's p-range is below twice the Lipschitz constant of the result.
StationaryResult solve_effective(const EffectiveTable& et, const TorusGrid& slow, const SolveOptions& opts = {});

/// Stationary solve of H(x, k x, Du, u) = 0 on the grid of k * n_per_period nodes.
StationaryResult solve_multiscale(const HomogProblem& hp, std::size_t k, std::size_t n_per_period,
                                  const SolveOptions& opts = {});

struct RateOptions {
  std::vector<std::size_t> ks{8, 16, 32, 64};  // eps = 1/k
  std::size_t n_per_period = 32;
  std::size_t n_slow = 64;
  TableAxes axes;
  CellOptions cell;
  SolveOptions solve;
  double noise_floor = 1e-6;
};

struct RateResult {
  std::vector<double> eps;
  std::vector<double> errors;
  std::optional<double> slope;  // empty when every error is below the noise floor
  double C_fit = 0.0;
  bool noise_limited = false;
  bool monotone = true;
  double interp_bound = 0.0;  // h_slow^2 / 8 * max |u_bar''|
  Field u_bar;
};

RateResult rate_experiment(const HomogProblem& hp, const RateOptions& opts = {});

void write_rate_csv(std::ostream& os, const RateResult& r);
void write_table_csv(std::ostream& os, const EffectiveTable& et);

}  // namespace weakkam
