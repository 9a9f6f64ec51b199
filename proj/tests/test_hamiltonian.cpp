#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "weakkam/hamiltonian.hpp"

using namespace weakkam;

namespace {

std::size_t velocity_index(const LagrangianTable& t, double v) {
  const auto vs = t.velocities();
  for (std::size_t j = 0; j < vs.size(); ++j) {
    if (std::abs(vs[j] - v) < 1e-12) return j;
  }
  FAIL("velocity not on grid");
  return 0;
}

}  // namespace

TEST_CASE("legendre of p^2") {
  const TorusGrid g(16);
  const HamiltonianSpec spec = builtin("eikonal", {{"V", "0"}});
  const LagrangianTable t = legendre(spec, g, 65, 64);
  CHECK(t.velocity_count() == 65);
  const std::size_t j0 = velocity_index(t, 0.0);
  const std::size_t j2 = velocity_index(t, 2.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(t(i, j0)) < 1e-12);
    CHECK(t(i, j2) == doctest::Approx(1.0).epsilon(1e-10));
  }
  for (std::size_t j = 0; j < t.velocity_count(); ++j) {
    const double v = t.velocities()[j];
    CHECK(t(3, j) == doctest::Approx(v * v / 4.0).epsilon(1e-9));
  }
}

TEST_CASE("legendre matches a brute-force supremum") {
  const TorusGrid g(16);
  const HamiltonianSpec spec = builtin("eikonal", {{"V", "cos(2*pi*x)"}});
  const LagrangianTable t = legendre(spec, g, 65, 32);
  const std::size_t j2 = velocity_index(t, 2.0);
  // Independent oracle: 1e5 momenta on [-pmax, pmax].
  auto brute = [&](double x, double v) {
    double best = -1e300;
    for (int q = 0; q <= 100000; ++q) {
      const double p = -spec.pmax + 2.0 * spec.pmax * q / 100000.0;
      best = std::max(best, p * v - (p * p + std::cos(2 * std::numbers::pi * x)));
    }
    return best;
  };
  CHECK(std::abs(t(0, j2) - brute(0.0, 2.0)) < 1e-6);
  CHECK(std::abs(t(0, j2)) < 1e-9);
  for (std::size_t i : {1u, 5u, 11u}) {
    for (std::size_t j = 0; j < t.velocity_count(); j += 7) {
      CHECK(std::abs(t(i, j) - brute(g.node(i), t.velocities()[j])) < 1e-6);
    }
  }
}

TEST_CASE("table invariants") {
  const TorusGrid g(32);
  const HamiltonianSpec spec = make_spec("(p+0.7)^2 + 0.3*sin(2*pi*x) + abs(p)", "0", "0");
  const LagrangianTable t = legendre(spec, g, 49, 40);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> mom(-spec.pmax, spec.pmax);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto row = t.row(i);
    // supremum dominates every sampled momentum
    for (int s = 0; s < 50; ++s) {
      const double p = mom(rng);
      const std::size_t j = static_cast<std::size_t>(s) % row.size();
      CHECK(row[j] >= p * t.velocities()[j] - spec.g(g.node(i), p) - 1e-12);
    }
    // midpoint convexity along the velocity grid
    for (std::size_t j = 1; j + 1 < row.size(); ++j) CHECK(row[j] <= 0.5 * (row[j - 1] + row[j + 1]) + 1e-9);
    // Fenchel identity at p = 0
    const double lmin = *std::min_element(row.begin(), row.end());
    CHECK(std::abs(lmin + spec.g(g.node(i), 0.0)) < 1e-6);
  }
}

TEST_CASE("legendre is monotone in G") {
  const TorusGrid g(16);
  const LagrangianTable small = legendre(make_spec("p^2 + cos(2*pi*x)", "0", "0"), g, 33, 32);
  const LagrangianTable large = legendre(make_spec("1.5*p^2 + cos(2*pi*x) + 0.2", "0", "0"), g, 33, 32);
  for (std::size_t k = 0; k < small.values().size(); ++k) CHECK(large.values()[k] <= small.values()[k]);
}

TEST_CASE("builtins") {
  const HamiltonianSpec lc = builtin("linear_contact", {{"a", "1"}, {"V", "0"}});
  CHECK(lc.lambda_bound == 1.0);
  CHECK(lc.dw(0.3, 2.0) == 1.0);
  CHECK(lc.h(0.1, 2.0, 3.0) == 7.0);

  const HamiltonianSpec ex = builtin(
      "example_ex", {{"phi", "sin(2*pi*x)/(2*pi)"}, {"dphi", "cos(2*pi*x)"}, {"theta", "0.5"}, {"zeta", "1"}});
  CHECK(ex.lambda_bound == doctest::Approx(0.5).epsilon(1e-12));
  for (double x : {0.0, 0.1, 0.37, 0.81}) {
    const double c = std::cos(2 * std::numbers::pi * x);
    CHECK(ex.dw(x, 1.7) == doctest::Approx(0.5 - c * c).epsilon(1e-12));
    // phi solves the stationary equation: H(x, phi', phi) = 0
    const double phi = std::sin(2 * std::numbers::pi * x) / (2 * std::numbers::pi);
    CHECK(std::abs(ex.h(x, c, phi)) < 1e-12);
  }

  const HamiltonianSpec co = builtin("corollary_a", {{"a", "2+sin(2*pi*x)"}, {"V", "cos(2*pi*x)"}, {"c", "1"}});
  CHECK(co.lambda_bound == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(co.g(0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(builtin("nope", {}), ConfigError);
  CHECK_THROWS_AS(builtin("linear_contact", {{"a", "1"}}), ConfigError);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(make_spec("p^2", "2*u", "2", 1.0), ConfigError);  // Lambda too small
  CHECK_THROWS_AS(make_spec("-p^2", "0", "0"), ConfigError);        // concave
  CHECK_THROWS_AS(make_spec("p^2 + u", "0", "0"), ConfigError);     // G may not use u
  CHECK_NOTHROW(make_spec("p^2", "sin(u)", "cos(u)"));
  CHECK(make_spec("p^2", "sin(u)", "cos(u)").lambda_bound == doctest::Approx(1.0));

  HamiltonianSpec flat = make_spec("abs(p)*0 + 1", "0", "0");
  CHECK_FALSE(validate(flat).empty());
  CHECK(validate(builtin("eikonal", {{"V", "0"}})).empty());
}

TEST_CASE("velocity grid") {
  const auto v = velocity_grid(4.0, 64);
  CHECK(v.size() == 65);
  CHECK(v[32] == 0.0);
  CHECK(v.front() == -4.0);
  CHECK(v.back() == 4.0);
  CHECK_THROWS_AS(velocity_grid(4.0, 8), ConfigError);
  CHECK_THROWS_AS(legendre(builtin("eikonal", {{"V", "0"}}), TorusGrid(8), 17, 8), ConfigError);
}

TEST_CASE("table transforms") {
  const TorusGrid g(16);
  const LagrangianTable t = legendre(builtin("eikonal", {{"V", "0"}}), g, 33, 32);
  const Field pot = field_from_expr(g, parse("cos(2*pi*x)"));
  const LagrangianTable tp = t.with_potential(pot);
  const LagrangianTable ts = t.shifted(0.25);
  const LagrangianTable tt = t.tilted(0.5);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < t.velocity_count(); ++j) {
      CHECK(tp(i, j) == t(i, j) - pot[i]);
      CHECK(ts(i, j) == t(i, j) + 0.25);
      CHECK(tt(i, j) == t(i, j) - 0.5 * t.velocities()[j]);
    }
  }
}
