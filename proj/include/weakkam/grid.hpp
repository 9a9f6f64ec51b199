#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "weakkam/expr.hpp"

namespace weakkam {

/// Uniform periodic grid on the circle of length `period`; nodes x_i = i*h.
class TorusGrid {
 public:
  TorusGrid(std::size_t n, double period = 1.0);

  std::size_t size() const noexcept { return n_; }
  double period() const noexcept { return period_; }
  double spacing() const noexcept { return period_ / static_cast<double>(n_); }
  double node(std::size_t i) const noexcept { return static_cast<double>(i) * spacing(); }

  std::size_t wrap(std::ptrdiff_t i) const noexcept {
    const auto n = static_cast<std::ptrdiff_t>(n_);
    return static_cast<std::size_t>(((i % n) + n) % n);
  }

  /// Shortest periodic index distance between two nodes.
  std::size_t index_distance(std::size_t a, std::size_t b) const noexcept;

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;

 private:
  std::size_t n_;
  double period_;
};

/// Real-valued, finite samples on a TorusGrid.
class Field {
 public:
  Field(TorusGrid grid, std::vector<double> values);
  static Field constant(TorusGrid grid, double value);

  const TorusGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  double min() const;
  double max() const;
  double mean() const;
  /// Largest node-to-node slope |f_{i+1} - f_i| / h.
  double lipschitz() const;

  Field operator+(double c) const;
  Field operator-(double c) const { return *this + (-c); }
  Field operator*(double c) const;
  Field operator+(const Field& other) const;
  Field operator-(const Field& other) const;

 private:
  TorusGrid grid_;
  std::vector<double> values_;
};

/// Samples a formula in x at every node.
Field field_from_expr(const TorusGrid& grid, const Expr& e);

/// Periodic piecewise-linear interpolation; exact at nodes.
double interp(const Field& f, double x);
double interp(std::span<const double> values, const TorusGrid& grid, double x);

/// max_i |f_i - g_i|; throws ConfigError on grid mismatch.
double sup_diff(const Field& f, const Field& g);

/// Resamples onto another grid by interpolation.
Field resample(const Field& f, const TorusGrid& target);

/// Writes "x,value" rows with 17 significant digits.
void write_csv(std::ostream& os, const Field& f);

/// Decimal rendering with 17 significant digits, shared by every CSV writer.
std::string format_double(double value);

}  // namespace weakkam
