#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "weakkam/homogenize.hpp"

using namespace weakkam;

namespace {

constexpr double kPi = 3.14159265358979323846;

// E(p) for q -> (p+q)^2 + b cos(2 pi y): b when |p| is below the rotation
// threshold, else the root of int_0^1 sqrt(E - b cos(2 pi y)) dy = |p|.
double eikonal_cell_oracle(double p, double b) {
  auto action = [&](double E) {
    const int N = 20000;  // midpoint rule on a smooth periodic integrand
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += std::sqrt(std::max(0.0, E - b * std::cos(2.0 * kPi * (i + 0.5) / N)));
    return s / N;
  };
  if (action(b) >= std::abs(p)) return b;
  double lo = b, hi = b + p * p + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (action(mid) < std::abs(p) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

const HomogProblem& fast_only() {
  static const HomogProblem hp = make_homog_problem("u + p^2 + 0.5*cos(2*pi*y)", "1");
  return hp;
}

}  // namespace

TEST_CASE("problem validation and splitting") {
  const HomogProblem& hp = fast_only();
  CHECK(hp.Lambda1 == 1.0);
  CHECK(hp.Lambda2 == 1.0);
  CHECK_FALSE(hp.x_dependent);
  CHECK(hp.G.eval(Bindings{{"x", 0.3}, {"y", 0.0}, {"p", 2.0}}) == doctest::Approx(4.5));
  CHECK(hp.W.eval(Bindings{{"x", 0.3}, {"u", -0.7}}) == doctest::Approx(-0.7));
  CHECK(make_homog_problem("2*u + p^2 + 0.3*cos(2*pi*x)", "2").x_dependent);

  CHECK_THROWS_AS(make_homog_problem("u*(1 + p^2)", "1 + p^2"), ConfigError);
  CHECK_THROWS_AS(make_homog_problem("u^2 + p^2", "2*u"), ConfigError);
  CHECK_THROWS_AS(make_homog_problem("u - p^2", "1"), ConfigError);
  CHECK_THROWS_AS(make_homog_problem("u + p^2", "1", 0.5, 0.8), ConfigError);
  CHECK_THROWS_AS(make_homog_problem("u + p^2 + eps", "1"), ConfigError);
  CHECK(make_homog_problem("u + sin(2*pi*y)", "1").warnings.size() == 1);
}

TEST_CASE("cell problems") {
  const HomogProblem flat = make_homog_problem("u + p^2", "1");
  for (double p : {-1.5, 0.0, 0.5, 2.0}) CHECK(std::abs(cell_problem(flat, 0.0, p, 0.3) - (0.3 + p * p)) < 2e-3);

  const HomogProblem& hp = fast_only();
  CHECK(std::abs(cell_problem(hp, 0.0, 0.0, -0.2) - 0.3) < 1e-4);
  for (double p : {1.0, -2.0}) {
    const double oracle = eikonal_cell_oracle(p, 0.5);
    CHECK(std::abs(cell_problem(hp, 0.0, p, 0.0) - oracle) < 2e-3);
  }
  // no fast dependence: the cell value is H itself, up to the best closed
  // measure on the velocity grid
  const HomogProblem slow = make_homog_problem("u + p^2 + 0.3*cos(2*pi*x)", "1");
  const CellOptions cell;
  double grid_best = 1e300;
  for (double v : velocity_grid(cell.vmax, cell.m)) grid_best = std::min(grid_best, v * v / 4.0 - 0.7 * v);
  CHECK(std::abs(cell_problem(slow, 0.25, 0.7, 0.1) - (0.1 - grid_best)) < 1e-4);
  CHECK(std::abs(cell_problem(slow, 0.25, 0.7, 0.1) - (0.1 + 0.49)) < 3e-3);
  CHECK_THROWS_AS(cell_problem(hp, 0.0, std::nan(""), 0.0), ConfigError);
}

TEST_CASE("effective tables") {
  {
    const EffectiveTable et = build_effective_table(make_homog_problem("u + p^2", "1"));
    CHECK(et.x_nodes().size() == 9);
    CHECK(et.p_nodes().size() == 17);
    CHECK(et.c_nodes().size() == 5);
    for (std::size_t i = 0; i < 9; ++i) {
      for (std::size_t j = 0; j < 17; ++j) {
        for (std::size_t k = 0; k < 5; ++k) {
          const double p = et.p_nodes()[j], c = et.c_nodes()[k];
          CHECK(std::abs(et.at(i, j, k) - (c + p * p)) < 2e-3);
          CHECK(et.at(i, j, k) == et.at(0, j, k));
        }
      }
    }
    CHECK(et.separability_defect() < 1e-12);
    CHECK(et(0.5, 0.0, 0.5) == doctest::Approx(et.at(0, 8, 3)));
    CHECK(std::abs(et(0.5, 0.0, 0.25) - 0.25) < 2e-3);
    CHECK(std::abs(et(0.3, 2.5, 0.0) - 5.875) < 5e-3);  // last p segment, slope 3.75, extended
    std::ostringstream os;
    write_table_csv(os, et);
    const std::string s = os.str();
    CHECK(s.rfind("x,p,c,Hbar\n0,-2,-1,", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 9 * 17 * 5);
  }
  {
    TableAxes axes;
    axes.x_count = 5;
    axes.p_count = 9;
    const EffectiveTable et = build_effective_table(fast_only(), axes);
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> pi(0, 8), ci(0, 4), xi(0, 4);
    for (int s = 0; s < 3; ++s) {
      const std::size_t i = xi(rng), j = pi(rng), k = ci(rng);
      const double oracle = et.c_nodes()[k] + eikonal_cell_oracle(et.p_nodes()[j], 0.5);
      CHECK(std::abs(et.at(i, j, k) - oracle) < 2e-2);
    }
    for (std::size_t j = 0; j + 1 < 9; ++j) CHECK(et.at(0, j, 4) - et.at(0, j, 0) == doctest::Approx(2.0));
  }
  {
    TableAxes axes;
    axes.x_count = 4;
    axes.p_count = 5;
    axes.c_count = 2;
    const EffectiveTable et = build_effective_table(make_homog_problem("u + p^2 + 0.3*cos(2*pi*x) + 0.2*cos(2*pi*y)", "1"), axes);
    // x = 0 and x = 1/2 differ by the slow potential 0.6
    CHECK(std::abs(et.at(0, 2, 0) - et.at(2, 2, 0) - 0.6) < 2e-3);
    CHECK(std::abs(et.at(1, 2, 0) - et.at(3, 2, 0)) < 2e-3);
  }
  TableAxes bad;
  bad.p_count = 1;
  CHECK_THROWS_AS(build_effective_table(fast_only(), bad), ConfigError);
}

TEST_CASE("effective solves") {
  const TorusGrid slow(64);
  {
    TableAxes axes;
    axes.x_count = 1;
    const StationaryResult r = solve_effective(build_effective_table(make_homog_problem("u + p^2", "1"), axes), slow);
    CHECK(std::abs(r.u.max()) < 1e-6);
    CHECK(std::abs(r.u.min()) < 1e-6);
  }
  {
    TableAxes axes;
    axes.x_count = 1;
    const StationaryResult r = solve_effective(build_effective_table(fast_only(), axes), slow);
    CHECK(std::abs(r.u.max() + 0.5) < 1e-4);
    CHECK(std::abs(r.u.min() + 0.5) < 1e-4);
  }
  {
    const HomogProblem hp = make_homog_problem("u + p^2 + 0.3*cos(2*pi*x)", "1");
    TableAxes axes;
    axes.x_count = 17;
    axes.p_count = 17;
    axes.c_count = 2;
    const EffectiveTable et = build_effective_table(hp, axes);
    SolveOptions so;
    so.tol = 1e-6;
    const StationaryResult r = solve_effective(et, slow, so);
    CHECK(r.residual <= 1e-6);
    CHECK(r.u.min() >= -0.35);
    CHECK(r.u.max() <= 0.35);
    // no fast variable: the two-scale solve at any k sees the same equation
    const StationaryResult direct = solve_multiscale(hp, 1, 64, so);
    MESSAGE("effective vs direct " << sup_diff(r.u, direct.u));
    CHECK(sup_diff(r.u, direct.u) < 2e-2);
  }
}

TEST_CASE("multiscale solves") {
  {
    const HomogProblem flat = make_homog_problem("u + p^2", "1");
    CHECK(solve_multiscale(flat, 8, 16).u.max() == 0.0);
    CHECK(solve_multiscale(flat, 8, 16).u.min() == 0.0);
  }
  const HomogProblem& hp = fast_only();
  const Field u8 = solve_multiscale(hp, 8, 32).u;
  CHECK(u8.size() == 256);
  CHECK(u8.min() >= -1.0);
  CHECK(u8.max() <= 0.0);
  CHECK(sup_diff(u8, Field::constant(u8.grid(), -0.5)) <= 0.5);
  const Field u32 = solve_multiscale(hp, 32, 32).u;
  CHECK(sup_diff(u32, Field::constant(u32.grid(), -0.5)) < sup_diff(u8, Field::constant(u8.grid(), -0.5)));
  CHECK_THROWS_AS(solve_multiscale(hp, 0, 32), ConfigError);
}

TEST_CASE("rate experiments") {
  RateOptions opts;
  opts.ks = {4, 8, 16};
  opts.n_per_period = 16;
  opts.axes.x_count = 1;
  {
    const RateResult r = rate_experiment(make_homog_problem("u + p^2", "1"), opts);
    CHECK(r.noise_limited);
    CHECK_FALSE(r.slope.has_value());
    for (double e : r.errors) CHECK(e <= 1e-6);
  }
  {
    const RateResult r = rate_experiment(fast_only(), opts);
    MESSAGE("slope " << *r.slope << " C_fit " << r.C_fit);
    CHECK_FALSE(r.noise_limited);
    CHECK(r.monotone);
    CHECK(*r.slope >= 0.4);
    CHECK(r.interp_bound < 1e-6);
    std::ostringstream os;
    write_rate_csv(os, r);
    CHECK(os.str().rfind("eps,error,sqrt_eps_ratio\n0.25,", 0) == 0);
  }
  opts.ks = {8, 4};
  CHECK_THROWS_AS(rate_experiment(fast_only(), opts), ConfigError);
}
