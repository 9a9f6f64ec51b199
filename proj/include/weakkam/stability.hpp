#pragma once

// Stability (A3), instability (A4) and global-attraction (a(x) u + G = c)
// checks around a stationary solution u_-, plus the empirical probes that go
// with them: decay exponents, escape times and basin sizes.

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "weakkam/critical.hpp"
#include "weakkam/grid.hpp"
#include "weakkam/hamiltonian.hpp"
#include "weakkam/mather.hpp"
#include "weakkam/semigroup.hpp"

namespace weakkam {

enum class Condition { A3, A4, corollary_a };
enum class Verdict { holds, fails, inconclusive };

std::string to_string(Condition c);
std::string to_string(Verdict v);
Condition parse_condition(std::string_view text);

struct StabilityOptions {
  std::vector<double> zeta_grid{0.25, 0.5, 1.0, 2.0, 4.0};
  double margin = 1e-2;
  double face_tol = 1e-6;
  CriticalOptions critical;
  BarrierOptions barrier;
};

struct StabilityReport {
  Condition condition = Condition::A3;
  Verdict verdict = Verdict::inconclusive;
  std::optional<double> zeta_found;
  std::vector<std::pair<double, double>> c_values;  // (zeta, c)
  std::optional<double> A_estimate;
  std::optional<double> Delta_estimate;
  std::optional<double> decay_slope;
  // corollary_a only
  std::optional<double> c_G;
  std::vector<std::size_t> aubry_indices;
  std::optional<double> a0;
};

/// c(G + W(., u_-) -/+ zeta dWu(., u_-)) over the zeta grid (minus for A3,
/// plus for A4). A_estimate is the minimum of dWu(., u_-) over Mather measures
/// of G + W(., u_-).
StabilityReport check_condition(const HamiltonianSpec& spec, const LagrangianTable& base, const Field& u_minus,
                                Condition which, const StabilityOptions& opts = {});

/// Holds iff min of `a` over the Aubry set of G exceeds the margin. `g_table`
/// is the transform of G. ConfigError when `a` is negative somewhere.
StabilityReport check_corollary_a(const LagrangianTable& g_table, const Field& a, const StabilityOptions& opts = {});

struct DecayResult {
  double slope;        // the larger of the two fitted slopes
  double slope_plus;   // from u_- + delta
  double slope_minus;  // from u_- - delta
  double t_lo, t_hi;   // fit window actually used
  bool window_shrunk;  // deviations hit the noise floor before t_hi
};

struct ProbeOptions {
  double T = 10.0;
  double dt = 1e-3;
  ContactMode mode = ContactMode::explicit_euler;
};

/// Least-squares slope of ln sup|u(t) - u_-| on [t_lo, t_hi] (default [T/2, T]).
DecayResult decay_exponent(const HamiltonianSpec& spec, const LagrangianTable& table, const Field& u_minus,
                           double delta, const ProbeOptions& probe, std::optional<std::pair<double, double>> window = {});

struct EscapeResult {
  bool escaped;
  double sup_dev;                     // largest deviation seen
  std::optional<double> t_escape;     // log-linear interpolation between steps
  std::vector<std::pair<double, double>> series;  // (t, sup_dev)
};

/// Evolves u_- - eps until the deviation reaches Delta_target or T passes.
EscapeResult instability_probe(const HamiltonianSpec& spec, const LagrangianTable& table, const Field& u_minus,
                               double eps, double Delta_target, const ProbeOptions& probe);

/// Largest delta in (0, delta_hi] found by bisection for which both u_- +/- delta
/// re-enter the delta/2 neighbourhood of u_- by time T. 0 when none does.
double basin_estimate(const HamiltonianSpec& spec, const LagrangianTable& table, const Field& u_minus,
                      double delta_hi, const ProbeOptions& probe, int rounds = 6);

/// sup distance at time T between the evolutions of the constants +amplitude and -amplitude.
double constant_data_gap(const HamiltonianSpec& spec, const LagrangianTable& table, double amplitude,
                         const ProbeOptions& probe);

void write_report_json(std::ostream& os, const StabilityReport& report);
void write_series_csv(std::ostream& os, const std::vector<std::pair<double, double>>& series);

}  // namespace weakkam
