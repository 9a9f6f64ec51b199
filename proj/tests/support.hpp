#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "weakkam/grid.hpp"
#include "weakkam/hamiltonian.hpp"
#include "weakkam/semigroup.hpp"

namespace test_support {

/// Random trigonometric polynomial sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x),
/// k = 1..modes, with coefficients uniform in [-amp/k^2, amp/k^2].
struct TrigField {
  std::vector<double> a, b;

  double value(double x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k + 1);
      s += a[k] * std::cos(w * x) + b[k] * std::sin(w * x);
    }
    return s;
  }
  double slope(double x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k + 1);
      s += w * (-a[k] * std::sin(w * x) + b[k] * std::cos(w * x));
    }
    return s;
  }
  weakkam::Field sample(const weakkam::TorusGrid& g, double shift = 0.0) const {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = value(g.node(i)) + shift;
    return weakkam::Field(g, std::move(v));
  }
};

inline TrigField random_trig(std::mt19937_64& rng, std::size_t modes = 3, double amp = 0.1) {
  TrigField f;
  for (std::size_t k = 1; k <= modes; ++k) {
    std::uniform_real_distribution<double> d(-amp / double(k * k), amp / double(k * k));
    f.a.push_back(d(rng));
    f.b.push_back(d(rng));
  }
  return f;
}

/// Largest one-step truncation error per unit time,
/// |(T(phi) - phi)/dt -/+ H(x, phi', phi)|, over the given smooth fields.
inline double consistency_constant(const std::vector<TrigField>& fields, const weakkam::HamiltonianSpec& spec,
                                   const weakkam::LagrangianTable& table, double dt) {
  const auto& g = table.grid();
  const weakkam::Stepper back(spec, table, dt, weakkam::ContactMode::explicit_euler, weakkam::Direction::backward);
  const weakkam::Stepper fwd(spec, table, dt, weakkam::ContactMode::explicit_euler, weakkam::Direction::forward);
  double c = 0.0;
  for (const auto& f : fields) {
    const weakkam::Field phi = f.sample(g);
    const weakkam::Field b = back(phi);
    const weakkam::Field a = fwd(phi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = g.node(i);
      const double h = spec.h(x, f.slope(x), phi[i]);
      c = std::max(c, std::abs((b[i] - phi[i]) / dt + h));
      c = std::max(c, std::abs((a[i] - phi[i]) / dt - h));
    }
  }
  return c;
}

}  // namespace test_support
