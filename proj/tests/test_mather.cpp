#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "weakkam/critical.hpp"
#include "weakkam/mather.hpp"

using namespace weakkam;

namespace {

// Exhaustive vertex enumeration for min c.x, A x = b, x >= 0 with A of full row rank.
double enumerate_vertices(const std::vector<std::vector<double>>& A, const std::vector<double>& b,
                          const std::vector<double>& c) {
  const std::size_t rows = A.size(), cols = c.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(rows);
  std::vector<bool> mask(cols, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(rows), true);
  std::sort(mask.begin(), mask.end());
  do {
    std::size_t k = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (mask[j]) pick[k++] = j;
    }
    std::vector<std::vector<double>> M(rows, std::vector<double>(rows + 1));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t q = 0; q < rows; ++q) M[r][q] = A[r][pick[q]];
      M[r][rows] = b[r];
    }
    bool singular = false;
    for (std::size_t q = 0; q < rows && !singular; ++q) {
      std::size_t piv = q;
      for (std::size_t r = q + 1; r < rows; ++r) {
        if (std::abs(M[r][q]) > std::abs(M[piv][q])) piv = r;
      }
      if (std::abs(M[piv][q]) < 1e-12) {
        singular = true;
        break;
      }
      std::swap(M[piv], M[q]);
      for (std::size_t r = 0; r < rows; ++r) {
        if (r == q) continue;
        const double f = M[r][q] / M[q][q];
        for (std::size_t s = q; s <= rows; ++s) M[r][s] -= f * M[q][s];
      }
    }
    if (singular) continue;
    double val = 0.0;
    bool feasible = true;
    for (std::size_t q = 0; q < rows; ++q) {
      const double x = M[q][rows] / M[q][q];
      if (x < -1e-12) feasible = false;
      val += c[pick[q]] * x;
    }
    if (feasible) best = std::min(best, val);
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

const BuiltinParams kExample = {
    {"phi", "sin(2*pi*x)/(2*pi)"}, {"dphi", "cos(2*pi*x)"}, {"theta", "0.5"}, {"zeta", "1"}};

}  // namespace

TEST_CASE("simplex on small programs") {
  {
    LinearProgram lp(1);
    lp.set_rhs(0, 1.0);
    lp.add_column(1.0, {{0, 1.0}});
    lp.add_column(0.0, {{0, 1.0}});
    const LpSolution s = lp_simplex(lp);
    CHECK(s.value == 0.0);
    CHECK(s.x[0] == 0.0);
    CHECK(s.x[1] == 1.0);
  }
  {
    LinearProgram lp(1);
    lp.set_rhs(0, 1.0);
    lp.add_column(-1.0, {{0, 1.0}});
    lp.add_column(-1.0, {{0, 1.0}});
    CHECK(lp_simplex(lp).value == doctest::Approx(-1.0));
  }
  {
    LinearProgram lp(2);
    lp.set_rhs(0, 1.0);
    lp.set_rhs(1, 3.0);
    lp.add_column(1.0, {{0, 1.0}, {1, 1.0}});
    try {
      lp_simplex(lp);
      FAIL("expected infeasible");
    } catch (const LpError& e) {
      CHECK(e.status() == LpStatus::infeasible);
    }
  }
  {
    LinearProgram lp(1);
    lp.set_rhs(0, 1.0);
    lp.add_column(0.0, {{0, 1.0}});
    lp.add_column(-1.0, {{0, 1.0}});
    lp.add_column(0.0, {{0, -1.0}});
    try {
      lp_simplex(lp);
      FAIL("expected unbounded");
    } catch (const LpError& e) {
      CHECK(e.status() == LpStatus::unbounded);
    }
  }
}

TEST_CASE("simplex matches vertex enumeration on random programs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.1, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 3, cols = 6;
    std::vector<std::vector<double>> A(rows, std::vector<double>(cols));
    for (auto& r : A) {
      for (double& a : r) a = coef(rng);
    }
    // feasible by construction: b = A x0 with x0 > 0; bounded by a positive row
    for (double& a : A[0]) a = pos(rng);
    std::vector<double> x0(cols), b(rows, 0.0), c(cols);
    for (double& x : x0) x = pos(rng);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) b[r] += A[r][j] * x0[j];
    }
    for (double& v : c) v = coef(rng);
    LinearProgram lp(rows);
    for (std::size_t r = 0; r < rows; ++r) lp.set_rhs(r, b[r]);
    for (std::size_t j = 0; j < cols; ++j) {
      lp.add_column(c[j], {{0, A[0][j]}, {1, A[1][j]}, {2, A[2][j]}});
    }
    const LpSolution s = lp_simplex(lp);
    CHECK(s.value == doctest::Approx(enumerate_vertices(A, b, c)).epsilon(1e-9));
    CHECK(s.residual <= 1e-9);
    for (double x : s.x) CHECK(x >= 0.0);
  }
}

TEST_CASE("occupational measures") {
  const TorusGrid g(64);
  {
    const LagrangianTable t = legendre(builtin("eikonal", {{"V", "0"}}), g, 33, 32);
    const OccupationalMeasure mu = solve_occupational(t);
    CHECK(std::abs(mu.value) < 1e-9);
    for (std::size_t k = 0; k < mu.weights.size(); ++k) {
      if (mu.weights[k] > 1e-9) CHECK(mu.velocities[k % mu.velocities.size()] == 0.0);
    }
  }
  {
    const LagrangianTable t = legendre(builtin("eikonal", {{"V", "cos(2*pi*x)"}}), g, 33, 32);
    const OccupationalMeasure mu = solve_occupational(t);
    // single-atom oracle: min_i L(x_i, 0)
    double atom = 1e300;
    for (std::size_t i = 0; i < g.size(); ++i) atom = std::min(atom, t(i, t.zero_velocity()));
    CHECK(mu.value == doctest::Approx(atom).epsilon(1e-9));
    CHECK(mu.value == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(mu.node_mass(0) == doctest::Approx(1.0));
    const double total = std::accumulate(mu.weights.begin(), mu.weights.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(closedness_residual(mu) <= 1e-7);
  }
  {
    const LagrangianTable t = legendre(make_spec("(p+0.7)^2", "0", "0"), g, 49, 64);
    const OccupationalMeasure mu = solve_occupational(t);
    // constant-velocity uniform measures are closed; best grid velocity oracle
    double oracle = 1e300;
    for (double v : t.velocities()) oracle = std::min(oracle, v * v / 4.0 - 0.7 * v);
    CHECK(mu.value == doctest::Approx(oracle).epsilon(1e-7));
    CHECK(std::abs(mu.value + 0.49) < 1e-2);
    CHECK(std::abs(mu.mean_velocity() - 1.4) < 0.1);
    CHECK(closedness_residual(mu) <= 1e-7);
    for (double w : mu.weights) CHECK(w >= 0.0);
  }
  {
    const TorusGrid g2(32);
    const LagrangianTable t = legendre(builtin("eikonal", {{"V", "0"}}), g2, 17, 16);
    const Field pot = field_from_expr(g2, parse("sin(2*pi*x)"));
    const OccupationalMeasure mu = solve_occupational(t, &pot);
    CHECK(mu.value == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(mu.node_mass(8) == doctest::Approx(1.0));
    std::ostringstream os;
    write_measure_csv(os, mu);
    CHECK(os.str() == "x,v,weight\n0.25,0,1\n");
  }
}

TEST_CASE("extremal integrals") {
  const TorusGrid g(64);
  {
    const LagrangianTable t = legendre(builtin("eikonal", {{"V", "cos(2*pi*x)"}}), g, 33, 32);
    const OccupationalMeasure mu = solve_occupational(t);
    const Field a = Field::constant(g, 0.3);
    CHECK(extremal_integral(mu, a, Sense::min) == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(extremal_integral(mu, a, Sense::max) == doctest::Approx(0.3).epsilon(1e-9));
    const Field f = field_from_expr(g, parse("0.5-cos(2*pi*x)^2"));
    const double lo = extremal_integral(mu, f, Sense::min);
    const double hi = extremal_integral(mu, f, Sense::max);
    CHECK(lo <= hi + 1e-12);
    CHECK(std::abs(lo + 0.5) < 1e-3);
    CHECK(std::abs(hi + 0.5) < 1e-3);
  }
  {
    const HamiltonianSpec spec = builtin("example_ex", kExample);
    const LagrangianTable base = legendre(spec, g, 33, 32);
    const Field phi = field_from_expr(g, parse("sin(2*pi*x)/(2*pi)"));
    const LagrangianTable t = frozen_table(base, spec, phi, 0.0);
    const OccupationalMeasure mu = solve_occupational(t);
    CHECK(std::abs(mu.value) < 1e-9);
    std::vector<double> dw(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dw[i] = spec.dw(g.node(i), phi[i]);
    const Field f(g, dw);
    CHECK(std::abs(extremal_integral(mu, f, Sense::min) - 0.5) < 1e-3);
    CHECK(std::abs(extremal_integral(mu, f, Sense::max) - 0.5) < 1e-3);
  }
}

TEST_CASE("barrier and Aubry set") {
  {
    const TorusGrid g(32);
    const LagrangianTable t = legendre(builtin("eikonal", {{"V", "0"}}), g, 129, 32);
    const BarrierTable bt = peierls_barrier(t, 0.0);
    // The slowest nonzero grid velocity v1 covers distance d at cost d * v1 / 4,
    // the discrete stand-in for the vanishing continuum cost.
    const double v1 = t.velocities()[t.zero_velocity() + 1];
    for (double v : bt.h) {
      CHECK(v >= -1e-12);
      CHECK(v <= 0.5 * v1 / 4.0 + 1e-5);  // plus interpolation error
    }
    CHECK(bt.aubry_indices.size() == g.size());
  }
  {
    const TorusGrid g(64);
    const LagrangianTable t = legendre(builtin("eikonal", {{"V", "cos(2*pi*x)-1"}}), g, 33, 32);
    const BarrierTable bt = peierls_barrier(t, 0.0);
    CHECK(bt.c_used == 0.0);
    CHECK(std::abs(bt(0, 0)) < 1e-15);
    for (std::size_t y = 1; y < g.size(); ++y) CHECK(bt(y, y) > 0.0);
    CHECK(bt.aubry_indices == std::vector<std::size_t>{0});
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> node(0, g.size() - 1);
    for (int s = 0; s < 500; ++s) {
      const std::size_t x = node(rng), y = node(rng), z = node(rng);
      CHECK(bt(x, z) <= bt(x, y) + bt(y, z) + 1e-6);
    }
    for (std::size_t y = 0; y < g.size(); ++y) CHECK(bt(y, y) >= -1e-6);
  }
  {
    const TorusGrid g(64);
    const HamiltonianSpec spec = builtin("example_ex", kExample);
    const Field phi = field_from_expr(g, parse("sin(2*pi*x)/(2*pi)"));
    const LagrangianTable t = frozen_table(legendre(spec, g, 33, 32), spec, phi, 0.0);
    const BarrierTable bt = peierls_barrier(t, 0.0);
    CHECK(bt.aubry_indices == std::vector<std::size_t>{16, 48});
  }
}

TEST_CASE("minimal action is a discrete semigroup") {
  const TorusGrid g(32);
  const LagrangianTable t = legendre(builtin("eikonal", {{"V", "cos(2*pi*x)-1"}}), g, 33, 32);
  const double dt = 16.0 * g.spacing() / t.vmax();
  const auto tabs = minimal_action(t, 0.0, {1.0, 2.0}, dt);
  const std::size_t n = g.size();
  double worst = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      double comp = std::numeric_limits<double>::infinity();
      for (std::size_t z = 0; z < n; ++z) comp = std::min(comp, tabs[0][x * n + z] + tabs[0][z * n + y]);
      worst = std::max(worst, std::abs(comp - tabs[1][x * n + y]));
    }
  }
  MESSAGE("semigroup defect " << worst);
  CHECK(worst <= 1e-3);
}

TEST_CASE("LP value matches the critical value") {
  const TorusGrid g(64);
  for (const char* G : {"p^2+cos(2*pi*x)", "(p+0.7)^2", "p^2-cos(2*pi*x)^2"}) {
    const LagrangianTable t = legendre(make_spec(G, "0", "0"), g, 49, 64);
    const auto t0 = std::chrono::steady_clock::now();
    const OccupationalMeasure mu = solve_occupational(t);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const CriticalValueResult c = critical_value(t);
    MESSAGE(std::string(G) << ": LP " << mu.value << " c " << c.c << " in " << secs << " s");
    CHECK(std::abs(mu.value + c.c) <= 1e-2);
  }
}
