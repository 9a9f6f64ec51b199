#pragma once

// Discrete closed probability measures on grid x velocity grid, the
// occupational linear program, extremal integrals over its optimal face, and
// the Peierls barrier with the projected Aubry set.

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "weakkam/grid.hpp"
#include "weakkam/hamiltonian.hpp"
#include "weakkam/linear_program.hpp"

namespace weakkam {

struct OccupationalMeasure {
  TorusGrid grid;
  std::vector<double> velocities;
  std::vector<double> weights;  // n x m row-major
  std::vector<double> cost;     // L_ij - potential_i, the objective
  double value;                 // sum of weights * cost

  double weight(std::size_t i, std::size_t j) const { return weights[i * velocities.size() + j]; }
  /// Total mass at node i.
  double node_mass(std::size_t i) const;
  /// Mean velocity under the measure.
  double mean_velocity() const;
};

/// Probability row plus the n hat-function closedness rows. Row k + 1 reads
/// sum_j v_j (w_{k-1,j} - w_{k+1,j}) = 0, the centered-difference pairing
/// with the hat at node k scaled by 2h.
LinearProgram occupational_lp(const TorusGrid& grid, std::span<const double> velocities,
                              std::span<const double> cost);

/// Minimizes sum w_ij (L_ij - potential_i) over discrete closed probability measures.
OccupationalMeasure solve_occupational(const LagrangianTable& lt, const Field* potential = nullptr,
                                       const LpOptions& lp = {});

/// max_k |sum_ij w_ij v_j De_k(x_i)| with De_k the centered difference of the hat at node k.
double closedness_residual(const OccupationalMeasure& mu);

enum class Sense { min, max };

/// Optimizes sum w_ij f_i over closed measures within face_tol of the optimal value.
double extremal_integral(const OccupationalMeasure& base, const Field& f, Sense sense, double face_tol = 1e-6,
                         const LpOptions& lp = {});

struct BarrierOptions {
  std::vector<double> t_list{4.0, 8.0, 16.0};
  double dt = 0.0;          // 0: safety * h / vmax
  double safety = 16.0;     // dt * vmax <= safety * h
  double aubry_tol = 1e-3;
};

struct BarrierTable {
  TorusGrid grid;
  std::vector<double> h;  // n x n, h[x * n + y]
  double c_used;
  std::vector<std::size_t> aubry_indices;

  double operator()(std::size_t x, std::size_t y) const { return h[x * grid.size() + y]; }
};

/// h_t(x, y) for each requested horizon, by min-plus dynamic programming on the
/// normalized cost L + c. Each matrix is n x n row-major, indexed [x * n + y].
std::vector<std::vector<double>> minimal_action(const LagrangianTable& lt, double c, const std::vector<double>& horizons,
                                                double dt);

/// Minimum of h_t over the horizon list.
BarrierTable peierls_barrier(const LagrangianTable& lt, double c, const BarrierOptions& opts = {});

/// Nodes with h(y, y) <= tol.
std::vector<std::size_t> aubry_set(const BarrierTable& bt, double tol);

void write_measure_csv(std::ostream& os, const OccupationalMeasure& mu);
void write_barrier_csv(std::ostream& os, const BarrierTable& bt);

}  // namespace weakkam
