#include "weakkam/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace weakkam {

namespace {

std::string wrap(const std::string& text) { return "(" + text + ")"; }

const std::string& require(const BuiltinParams& params, const std::string& key, std::string_view builtin_name) {
  const auto it = params.find(key);
  if (it == params.end()) {
    throw ConfigError("builtin '" + std::string(builtin_name) + "' requires parameter '" + key + "'");
  }
  return it->second;
}

void require_vars(const Expr& e, std::initializer_list<Var> allowed, const char* role) {
  for (std::size_t i = 0; i < kVarCount; ++i) {
    const auto v = static_cast<Var>(i);
    if (!e.uses(v)) continue;
    if (v == Var::y || v == Var::eps) continue;  // fast variables are bound when eps > 0
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      throw ConfigError(std::string(role) + " formula '" + e.source() + "' may not use '" + std::string(var_name(v)) + "'");
    }
  }
}

}  // namespace

double sampled_lambda(const HamiltonianSpec& spec, const SpecCheckOptions& opts) {
  double bound = 0.0;
  for (std::size_t i = 0; i < opts.x_samples; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(opts.x_samples);
    for (std::size_t k = 0; k < opts.u_samples; ++k) {
      const double u = -opts.u_radius + 2.0 * opts.u_radius * static_cast<double>(k) / static_cast<double>(opts.u_samples - 1);
      bound = std::max(bound, std::abs(spec.dw(x, u)));
    }
  }
  return bound;
}

std::vector<std::string> validate(const HamiltonianSpec& spec, const SpecCheckOptions& opts) {
  require_vars(spec.G, {Var::x, Var::p}, "G");
  require_vars(spec.W, {Var::x, Var::u}, "W");
  require_vars(spec.dWu, {Var::x, Var::u}, "dWu");
  if (!(spec.vmax > 0.0) || !(spec.pmax > 0.0)) throw ConfigError("vmax and pmax must be positive");
  if (!(spec.lambda_bound >= 0.0)) throw ConfigError("Lambda must be nonnegative");

  const double observed = sampled_lambda(spec, opts);
  if (observed > spec.lambda_bound * (1.0 + 1e-12) + 1e-12) {
    throw ConfigError("|dWu| reaches " + format_double(observed) + " which exceeds Lambda=" +
                      format_double(spec.lambda_bound));
  }

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> mom(-spec.pmax, spec.pmax);
  for (std::size_t t = 0; t < opts.convexity_triples; ++t) {
    const double x = unit(rng);
    const double p1 = mom(rng);
    const double p2 = mom(rng);
    const double mid = spec.g(x, 0.5 * (p1 + p2));
    const double chord = 0.5 * (spec.g(x, p1) + spec.g(x, p2));
    if (mid > chord + 1e-9) {
      throw ConfigError("G is not convex in p: midpoint test fails at x=" + format_double(x) + ", p=" +
                        format_double(p1) + "," + format_double(p2));
    }
  }

  std::vector<std::string> warnings;
  double rim = std::numeric_limits<double>::infinity();
  double centre = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < opts.x_samples; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(opts.x_samples);
    rim = std::min({rim, spec.g(x, spec.pmax), spec.g(x, -spec.pmax)});
    centre = std::max(centre, spec.g(x, 0.0));
  }
  if (!(rim > centre)) {
    warnings.push_back("coercivity not visible on the sampled lattice: min G at |p|=pmax is " + format_double(rim) +
                       " but max G at p=0 is " + format_double(centre));
  }
  return warnings;
}

HamiltonianSpec make_spec(const std::string& G, const std::string& W, const std::string& dWu,
                          std::optional<double> lambda, double vmax, double pmax) {
  HamiltonianSpec spec;
  spec.G = parse(G);
  spec.W = parse(W);
  spec.dWu = parse(dWu);
  spec.vmax = vmax;
  spec.pmax = pmax;
  spec.lambda_bound = lambda ? *lambda : sampled_lambda(spec);
  validate(spec);
  return spec;
}

HamiltonianSpec builtin(std::string_view name, const BuiltinParams& params) {
  HamiltonianSpec spec;
  spec.name = std::string(name);
  if (name == "eikonal") {
    const auto& V = require(params, "V", name);
    spec.G = parse("p^2+" + wrap(V));
    spec.W = parse("0");
    spec.dWu = parse("0");
  } else if (name == "linear_contact") {
    const auto& a = require(params, "a", name);
    const auto& V = require(params, "V", name);
    spec.G = parse("p^2+" + wrap(V));
    spec.W = parse(wrap(a) + "*u");
    spec.dWu = parse(wrap(a));
  } else if (name == "example_ex") {
    const auto& phi = wrap(require(params, "phi", name));
    const auto& dphi = wrap(require(params, "dphi", name));
    const auto& theta = wrap(require(params, "theta", name));
    const auto& zeta = wrap(require(params, "zeta", name));
    const std::string k = "(" + dphi + "^2-" + theta + ")";
    spec.G = parse(zeta + "*p^2");
    spec.W = parse("-" + k + "*u+" + k + "*" + phi + "-" + zeta + "*" + dphi + "^2");
    spec.dWu = parse(theta + "-" + dphi + "^2");
  } else if (name == "corollary_a") {
    const auto& a = require(params, "a", name);
    const auto& V = require(params, "V", name);
    const auto& c = require(params, "c", name);
    spec.G = parse("p^2+" + wrap(V) + "-" + wrap(c));
    spec.W = parse(wrap(a) + "*u");
    spec.dWu = parse(wrap(a));
  } else {
    throw ConfigError("unknown builtin Hamiltonian '" + std::string(name) + "'");
  }
  spec.lambda_bound = sampled_lambda(spec);
  validate(spec);
  return spec;
}

LagrangianTable::LagrangianTable(TorusGrid grid, std::vector<double> velocities, std::vector<double> values)
    : grid_(grid), velocities_(std::move(velocities)), values_(std::move(values)) {
  if (velocities_.size() % 2 == 0 || velocities_[velocities_.size() / 2] != 0.0) {
    throw ConfigError("velocity grid must be symmetric with v = 0 at its centre");
  }
  if (values_.size() != grid_.size() * velocities_.size()) throw ConfigError("Lagrangian table has wrong size");
}

LagrangianTable LagrangianTable::with_potential(const Field& potential) const {
  if (!(potential.grid() == grid_)) throw ConfigError("potential lives on a different grid than the Lagrangian");
  std::vector<double> out(values_);
  const std::size_t m = velocities_.size();
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] -= potential[i];
  }
  LagrangianTable t(grid_, velocities_, std::move(out));
  t.boundary_hits = boundary_hits;
  return t;
}

LagrangianTable LagrangianTable::shifted(double c) const {
  std::vector<double> out(values_);
  for (double& v : out) v += c;
  LagrangianTable t(grid_, velocities_, std::move(out));
  t.boundary_hits = boundary_hits;
  return t;
}

LagrangianTable LagrangianTable::tilted(double p) const {
  std::vector<double> out(values_);
  const std::size_t m = velocities_.size();
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] -= p * velocities_[j];
  }
  LagrangianTable t(grid_, velocities_, std::move(out));
  t.boundary_hits = boundary_hits;
  return t;
}

std::vector<double> velocity_grid(double vmax, std::size_t m) {
  if (m < 16) throw ConfigError("velocity count must be at least 16");
  if (!(vmax > 0.0)) throw ConfigError("vmax must be positive");
  const std::size_t count = m % 2 == 1 ? m : m + 1;
  const std::size_t half = count / 2;
  std::vector<double> v(count);
  for (std::size_t j = 0; j < count; ++j) {
    const double s = (static_cast<double>(j) - static_cast<double>(half)) / static_cast<double>(half);
    v[j] = vmax * s;
  }
  v[half] = 0.0;
  return v;
}

LagrangianTable legendre(const std::function<double(std::size_t, double)>& g_at_node, const TorusGrid& grid,
                         double vmax, double pmax, std::size_t m, std::size_t k) {
  if (k < 16) throw ConfigError("momentum count must be at least 16");
  if (!(pmax > 0.0)) throw ConfigError("pmax must be positive");
  std::vector<double> v = velocity_grid(vmax, m);
  const std::size_t mv = v.size();
  const std::size_t n = grid.size();
  std::vector<double> p(k);
  for (std::size_t q = 0; q < k; ++q) p[q] = -pmax + 2.0 * pmax * static_cast<double>(q) / static_cast<double>(k - 1);

  std::vector<double> values(n * mv);
  std::size_t hits = 0;
  std::vector<double> g(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < k; ++q) {
      g[q] = g_at_node(i, p[q]);
      if (!std::isfinite(g[q])) throw SolverError("nonfinite G at node " + std::to_string(i));
    }
    for (std::size_t j = 0; j < mv; ++j) {
      std::size_t best = 0;
      double best_val = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < k; ++q) {
        const double f = p[q] * v[j] - g[q];
        if (f > best_val) {
          best_val = f;
          best = q;
        }
      }
      if (best == 0 || best == k - 1) ++hits;
      // p -> p v - G(x,p) is concave, so the maximizer lies in the bracketing cell pair.
      double lo = p[best == 0 ? 0 : best - 1];
      double hi = p[best == k - 1 ? k - 1 : best + 1];
      const auto objective = [&](double pp) { return pp * v[j] - g_at_node(i, pp); };
      for (int it = 0; it < 60; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (objective(m1) < objective(m2)) {
          lo = m1;
        } else {
          hi = m2;
        }
      }
      best_val = std::max(best_val, objective(0.5 * (lo + hi)));
      values[i * mv + j] = std::min(best_val, kLagrangianClip);
    }
  }
  LagrangianTable table(grid, std::move(v), std::move(values));
  table.boundary_hits = hits;
  return table;
}

LagrangianTable legendre(const HamiltonianSpec& spec, const TorusGrid& grid, std::size_t m, std::size_t k) {
  return legendre([&](std::size_t i, double p) { return spec.g(grid.node(i), p); }, grid, spec.vmax, spec.pmax, m, k);
}

}  // namespace weakkam
