#pragma once

// Split contact Hamiltonians H(x,p,u) = G(x,p) + W(x,u) and their discrete
// Legendre transform L(x,v) = sup_p (p v - G(x,p)).

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weakkam/expr.hpp"
#include "weakkam/grid.hpp"

namespace weakkam {

struct HamiltonianSpec {
  std::string name = "inline";
  Expr G;    // in (x, p)
  Expr W;    // in (x, u)
  Expr dWu;  // in (x, u), the u-derivative of W
  double lambda_bound = 0.0;
  double vmax = 4.0;
  double pmax = 4.0;
  // When positive, every formula additionally sees y = x / eps and eps.
  double eps = 0.0;

  double g(double x, double p) const { return G.eval(slots(x, p, 0.0)); }
  double w(double x, double u) const { return W.eval(slots(x, 0.0, u)); }
  double dw(double x, double u) const { return dWu.eval(slots(x, 0.0, u)); }
  double h(double x, double p, double u) const { return g(x, p) + w(x, u); }

  bool has_contact_term() const { return W.uses(Var::u); }

 private:
  VarSlots slots(double x, double p, double u) const {
    VarSlots s{};
    s[static_cast<std::size_t>(Var::x)] = x;
    s[static_cast<std::size_t>(Var::p)] = p;
    s[static_cast<std::size_t>(Var::u)] = u;
    if (eps > 0.0) {
      s[static_cast<std::size_t>(Var::y)] = x / eps;
      s[static_cast<std::size_t>(Var::eps)] = eps;
    }
    return s;
  }
};

struct SpecCheckOptions {
  std::size_t x_samples = 256;
  double u_radius = 4.0;
  std::size_t u_samples = 33;
  std::size_t convexity_triples = 400;
  unsigned long long seed = 12345;
};

/// Largest |dWu| over the (x, u) test lattice.
double sampled_lambda(const HamiltonianSpec& spec, const SpecCheckOptions& opts = {});

/// Checks the Lambda bound and midpoint convexity of G (ConfigError on
/// violation). Returns warnings for the sampled coercivity test.
std::vector<std::string> validate(const HamiltonianSpec& spec, const SpecCheckOptions& opts = {});

/// Builds and validates an inline spec. Without `lambda`, the bound is sampled.
HamiltonianSpec make_spec(const std::string& G, const std::string& W, const std::string& dWu,
                          std::optional<double> lambda = std::nullopt, double vmax = 4.0, double pmax = 4.0);

/// Formula-or-number text per parameter name.
using BuiltinParams = std::map<std::string, std::string>;

/// eikonal(V), linear_contact(a, V), example_ex(phi, dphi, theta, zeta),
/// corollary_a(a, V, c).
HamiltonianSpec builtin(std::string_view name, const BuiltinParams& params);

/// L(x_i, v_j) on the grid times a symmetric velocity grid containing v = 0.
class LagrangianTable {
 public:
  LagrangianTable(TorusGrid grid, std::vector<double> velocities, std::vector<double> values);

  const TorusGrid& grid() const noexcept { return grid_; }
  std::span<const double> velocities() const noexcept { return velocities_; }
  std::size_t velocity_count() const noexcept { return velocities_.size(); }
  double vmax() const noexcept { return velocities_.back(); }
  std::size_t zero_velocity() const noexcept { return velocities_.size() / 2; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * velocities_.size() + j]; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * velocities_.size(), velocities_.size()};
  }
  std::span<const double> values() const noexcept { return values_; }

  /// L(x_i, v) - potential_i: the table of G(x,p) + potential(x).
  LagrangianTable with_potential(const Field& potential) const;
  /// L + c.
  LagrangianTable shifted(double c) const;
  /// L - p v: the table of p' -> G(x, p + p').
  LagrangianTable tilted(double p) const;

  /// Number of (i, j) whose maximizing momentum sat on the truncation radius.
  std::size_t boundary_hits = 0;

 private:
  TorusGrid grid_;
  std::vector<double> velocities_;
  std::vector<double> values_;
};

inline constexpr double kLagrangianClip = 1e6;

/// Odd-sized uniform velocity grid on [-vmax, vmax]; even counts round up.
std::vector<double> velocity_grid(double vmax, std::size_t m);

/// Discrete transform of an arbitrary node-indexed momentum function.
LagrangianTable legendre(const std::function<double(std::size_t, double)>& g_at_node, const TorusGrid& grid,
                         double vmax, double pmax, std::size_t m, std::size_t k);

/// Discrete Legendre transform of G: max over k momenta in [-pmax, pmax],
/// refined by ternary search on the bracketing interval.
LagrangianTable legendre(const HamiltonianSpec& spec, const TorusGrid& grid, std::size_t m, std::size_t k);

}  // namespace weakkam
