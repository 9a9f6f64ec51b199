#pragma once

// Critical values c(G') of u-independent Hamiltonians G'(x,p) = G(x,p) + P(x),
// estimated by vanishing discount and by long-time averaging, and the curve
// eps -> c(G(x,p) + W(x, u_-(x) + eps)).

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "weakkam/grid.hpp"
#include "weakkam/hamiltonian.hpp"

namespace weakkam {

struct CriticalOptions {
  std::vector<double> lambdas{4e-2, 2e-2, 1e-2};  // strictly decreasing
  double dt = 0.05;
  double tol = 1e-6;          // discounted residual per unit time
  double longtime_T = 20.0;   // horizon of the long-time estimator
  double cross_tol = 2e-2;    // discount/long-time agreement
};

struct DiscountResult {
  Field u;
  double residual;  // sup|Phi(u) - u| / dt for the discounted update Phi
  std::size_t policy_iterations;
};

/// Fixed point of u_i = (1/(1+lambda dt)) min_j [ I(u)(x_i - v_j dt) + dt L'_ij ].
/// Solved by policy iteration; each policy is evaluated with a sparse LU.
DiscountResult discounted_solve(const LagrangianTable& lt, double lambda, double dt, double tol);

struct LambdaDiagnostic {
  double lambda;
  double mean_lambda_u;
  double residual;
  std::size_t policy_iterations;
};

enum class CriticalMethod { discount, longtime, agree };
std::string to_string(CriticalMethod m);

struct CriticalValueResult {
  double c;
  CriticalMethod method;
  double c_discount;
  double c_longtime;
  Field u_corrector;  // discounted solution at the smallest lambda, mean zero
  std::vector<LambdaDiagnostic> per_lambda;
  // Distance of the largest-lambda estimate from the line through the two
  // smallest; large values mean the first-order lambda model is off.
  double nonlinearity;
  bool nonlinear_flag;
};

CriticalValueResult critical_value(const LagrangianTable& lt, const CriticalOptions& opts = {});

/// Table of G(x,p) + W(x, u(x) + eps), with `base` the transform of G.
LagrangianTable frozen_table(const LagrangianTable& base, const HamiltonianSpec& spec, const Field& u, double eps);

struct CEpsCurve {
  std::vector<double> eps_samples;  // sorted, contains 0
  std::vector<double> c_values;
  double D_minus = 0.0;
  double D_plus = 0.0;
  // max over sample pairs of |c1 - c2| - Lambda |e1 - e2|; at most 2 c_tol when Lipschitz holds
  double lipschitz_excess = 0.0;
  bool lipschitz_ok = true;
  std::vector<CriticalMethod> methods;
};

/// Requires 0 and at least two samples of each sign in `eps_list`.
CEpsCurve c_eps_curve(const HamiltonianSpec& spec, const LagrangianTable& base, const Field& u_minus,
                      std::vector<double> eps_list, const CriticalOptions& opts = {});

/// D- from {-2h, -h, 0}, D+ from {0, h, 2h}, h the smallest |eps| of each
/// sign. Stores the values into the curve. ConfigError when samples are missing.
std::pair<double, double> one_sided_derivatives(CEpsCurve& curve);

void write_curve_csv(std::ostream& os, const CEpsCurve& curve);
void write_discount_csv(std::ostream& os, const CriticalValueResult& result);

}  // namespace weakkam
