#include "weakkam/critical.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "weakkam/semigroup.hpp"

namespace weakkam {

namespace {

constexpr double kDivergence = 1e6;
constexpr std::size_t kMaxPolicyIterations = 500;

double mean_of(std::span<const double> u) {
  double s = 0.0;
  for (double x : u) s += x;
  return s / static_cast<double>(u.size());
}

void check_steps(const LagrangianTable& lt, double dt) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (dt * lt.vmax() > 0.5 * lt.grid().period() + 1e-12) {
    throw ConfigError("dt*vmax exceeds period/2 (dt=" + format_double(dt) + ", vmax=" + format_double(lt.vmax()) + ")");
  }
}

}  // namespace

std::string to_string(CriticalMethod m) {
  switch (m) {
    case CriticalMethod::discount: return "discount";
    case CriticalMethod::longtime: return "longtime";
    case CriticalMethod::agree: return "agree";
  }
  return "?";
}

DiscountResult discounted_solve(const LagrangianTable& lt, double lambda, double dt, double tol) {
  if (!(lambda > 0.0)) throw ConfigError("discount rate must be positive");
  if (!(dt * lambda < 1.0)) throw ConfigError("dt*lambda must be below 1");
  if (!(tol > 0.0)) throw ConfigError("discount tolerance must be positive");
  check_steps(lt, dt);

  const std::size_t n = lt.grid().size();
  const FootPoints feet = foot_points(lt.grid(), lt.velocities(), -dt);
  const double damp = 1.0 / (1.0 + lambda * dt);

  std::vector<double> u(n, 0.0), next(n);
  std::vector<std::uint32_t> policy(n), candidate(n);
  transport_min(u, feet, lt, dt, 0.0, next, candidate);
  policy = candidate;

  auto policy_value = [&](std::size_t i, std::uint32_t j) {
    std::size_t a = i + feet.offset[j];
    if (a >= n) a -= n;
    const std::size_t b = a + 1 == n ? 0 : a + 1;
    const double w = feet.weight[j];
    return (1.0 - w) * u[a] + w * u[b] + dt * lt(i, j);
  };

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  std::size_t iterations = 0;
  for (;;) {
    ++iterations;
    triplets.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t j = policy[i];
      std::size_t a = i + feet.offset[j];
      if (a >= n) a -= n;
      const std::size_t b = a + 1 == n ? 0 : a + 1;
      const double w = feet.weight[j];
      const auto row = static_cast<Eigen::Index>(i);
      triplets.emplace_back(row, row, 1.0 + lambda * dt);
      triplets.emplace_back(row, static_cast<Eigen::Index>(a), -(1.0 - w));
      if (w != 0.0) triplets.emplace_back(row, static_cast<Eigen::Index>(b), -w);
      rhs[row] = dt * lt(i, j);
    }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(triplets.begin(), triplets.end());
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw SolverError("policy evaluation matrix is singular");
    const Eigen::VectorXd sol = lu.solve(rhs);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = sol[static_cast<Eigen::Index>(i)];
      if (!std::isfinite(x) || std::abs(x) > kDivergence) {
        throw SolverError("discounted solve diverged at node " + std::to_string(i) + " (lambda=" +
                          format_double(lambda) + ")");
      }
      u[i] = x;
    }

    transport_min(u, feet, lt, dt, 0.0, next, candidate);
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (candidate[i] == policy[i]) continue;
      const double current = policy_value(i, policy[i]);
      if (next[i] < current - 1e-13 * (1.0 + std::abs(current))) {
        policy[i] = candidate[i];
        changed = true;
      }
    }
    if (!changed) break;
    if (iterations >= kMaxPolicyIterations) {
      throw ConvergenceError("policy iteration did not settle after " + std::to_string(iterations) + " rounds", 0.0);
    }
  }

  // Polish with the plain contraction until the residual contract holds.
  double residual = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < 1000; ++sweep) {
    transport_min(u, feet, lt, dt, 0.0, next);
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] *= damp;
      residual = std::max(residual, std::abs(next[i] - u[i]));
    }
    residual /= dt;
    if (residual <= tol) break;
    u.swap(next);
  }
  if (residual > tol) {
    throw ConvergenceError("discounted solve residual " + format_double(residual) + " above tol", residual);
  }
  return DiscountResult{Field(lt.grid(), std::move(u)), residual, iterations};
}

CriticalValueResult critical_value(const LagrangianTable& lt, const CriticalOptions& opts) {
  const auto& lams = opts.lambdas;
  if (lams.size() < 2) throw ConfigError("discount schedule needs at least two rates");
  for (std::size_t k = 1; k < lams.size(); ++k) {
    if (!(lams[k] < lams[k - 1])) throw ConfigError("discount schedule must be strictly decreasing");
  }
  if (!(lams.back() > 0.0)) throw ConfigError("discount rates must be positive");
  if (!(opts.longtime_T > 0.0)) throw ConfigError("long-time horizon must be positive");
  check_steps(lt, opts.dt);

  std::vector<LambdaDiagnostic> diag;
  std::vector<double> cs;
  DiscountResult last{Field::constant(lt.grid(), 0.0), 0.0, 0};
  for (double lam : lams) {
    DiscountResult r = discounted_solve(lt, lam, opts.dt, opts.tol);
    const double m = lam * r.u.mean();
    diag.push_back({lam, m, r.residual, r.policy_iterations});
    cs.push_back(-m);
    last = std::move(r);
  }
  const std::size_t k = lams.size();
  const double la = lams[k - 2], lb = lams[k - 1];
  const double ca = cs[k - 2], cb = cs[k - 1];
  const double slope = (ca - cb) / (la - lb);
  const double c_discount = cb - slope * lb;
  double nonlinearity = 0.0;
  if (k >= 3) nonlinearity = std::abs(cs[k - 3] - (c_discount + slope * lams[k - 3]));

  // Long-time slope of T_t 0 under G'.
  const std::size_t n = lt.grid().size();
  const FootPoints feet = foot_points(lt.grid(), lt.velocities(), -opts.dt);
  const auto total = static_cast<std::size_t>(std::ceil(opts.longtime_T / opts.dt - 1e-9));
  const std::size_t half = std::max<std::size_t>(1, total / 2);
  std::vector<double> u(n, 0.0), next(n);
  double mean_half = 0.0;
  for (std::size_t s = 1; s <= total; ++s) {
    transport_min(u, feet, lt, opts.dt, 0.0, next);
    u.swap(next);
    if (s == half) mean_half = mean_of(u);
  }
  const double c_longtime = -(mean_of(u) - mean_half) / (static_cast<double>(total - half) * opts.dt);

  const bool agree = std::abs(c_discount - c_longtime) <= opts.cross_tol;
  Field corrector = last.u - last.u.mean();
  return CriticalValueResult{agree ? c_longtime : c_discount,
                             agree ? CriticalMethod::agree : CriticalMethod::discount,
                             c_discount,
                             c_longtime,
                             std::move(corrector),
                             std::move(diag),
                             nonlinearity,
                             nonlinearity > 0.5 * opts.cross_tol};
}

LagrangianTable frozen_table(const LagrangianTable& base, const HamiltonianSpec& spec, const Field& u, double eps) {
  if (!(u.grid() == base.grid())) throw ConfigError("field and Lagrangian table use different grids");
  std::vector<double> pot(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) pot[i] = spec.w(u.grid().node(i), u[i] + eps);
  return base.with_potential(Field(u.grid(), std::move(pot)));
}

CEpsCurve c_eps_curve(const HamiltonianSpec& spec, const LagrangianTable& base, const Field& u_minus,
                      std::vector<double> eps_list, const CriticalOptions& opts) {
  std::sort(eps_list.begin(), eps_list.end());
  eps_list.erase(std::unique(eps_list.begin(), eps_list.end()), eps_list.end());
  const auto neg = std::count_if(eps_list.begin(), eps_list.end(), [](double e) { return e < 0.0; });
  const auto pos = std::count_if(eps_list.begin(), eps_list.end(), [](double e) { return e > 0.0; });
  if (std::find(eps_list.begin(), eps_list.end(), 0.0) == eps_list.end() || neg < 2 || pos < 2) {
    throw ConfigError("eps list needs 0 and at least two samples of each sign");
  }
  CEpsCurve curve;
  curve.eps_samples = eps_list;
  for (double e : eps_list) {
    const CriticalValueResult r = critical_value(frozen_table(base, spec, u_minus, e), opts);
    curve.c_values.push_back(r.c);
    curve.methods.push_back(r.method);
  }
  double excess = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < eps_list.size(); ++a) {
    for (std::size_t b = a + 1; b < eps_list.size(); ++b) {
      const double gap = std::abs(curve.c_values[a] - curve.c_values[b]) -
                         spec.lambda_bound * std::abs(eps_list[a] - eps_list[b]);
      excess = std::max(excess, gap);
    }
  }
  curve.lipschitz_excess = excess;
  curve.lipschitz_ok = excess <= 2.0 * opts.cross_tol;
  one_sided_derivatives(curve);
  return curve;
}

std::pair<double, double> one_sided_derivatives(CEpsCurve& curve) {
  const auto& e = curve.eps_samples;
  if (e.size() != curve.c_values.size()) throw ConfigError("curve samples and values differ in length");
  auto find = [&](double target) -> std::optional<double> {
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (std::abs(e[k] - target) <= 1e-9 * std::max(1.0, std::abs(target))) return curve.c_values[k];
    }
    return std::nullopt;
  };
  double hm = std::numeric_limits<double>::infinity(), hp = std::numeric_limits<double>::infinity();
  for (double x : e) {
    if (x < 0.0) hm = std::min(hm, -x);
    if (x > 0.0) hp = std::min(hp, x);
  }
  const auto c0 = find(0.0);
  if (!c0 || !std::isfinite(hm) || !std::isfinite(hp)) throw ConfigError("curve lacks samples around 0");
  const auto m1 = find(-hm), m2 = find(-2.0 * hm), p1 = find(hp), p2 = find(2.0 * hp);
  if (!m2 || !p2) throw ConfigError("curve needs samples at -2h and 2h for the one-sided stencils");
  curve.D_minus = (3.0 * *c0 - 4.0 * *m1 + *m2) / (2.0 * hm);
  curve.D_plus = (-3.0 * *c0 + 4.0 * *p1 - *p2) / (2.0 * hp);
  return {curve.D_minus, curve.D_plus};
}

void write_curve_csv(std::ostream& os, const CEpsCurve& curve) {
  os << "eps,c\n";
  for (std::size_t k = 0; k < curve.eps_samples.size(); ++k) {
    os << format_double(curve.eps_samples[k]) << ',' << format_double(curve.c_values[k]) << '\n';
  }
}

void write_discount_csv(std::ostream& os, const CriticalValueResult& result) {
  os << "lambda,mean_lambda_u\n";
  for (const auto& d : result.per_lambda) os << format_double(d.lambda) << ',' << format_double(d.mean_lambda_u) << '\n';
}

}  // namespace weakkam
