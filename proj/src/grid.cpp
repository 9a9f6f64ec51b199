#include "weakkam/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace weakkam {

TorusGrid::TorusGrid(std::size_t n, double period) : n_(n), period_(period) {
  if (n < 8) throw ConfigError("grid needs at least 8 nodes, got " + std::to_string(n));
  if (!(period > 0.0) || !std::isfinite(period)) throw ConfigError("grid period must be positive");
}

std::size_t TorusGrid::index_distance(std::size_t a, std::size_t b) const noexcept {
  const std::size_t d = a > b ? a - b : b - a;
  return std::min(d, n_ - d);
}

Field::Field(TorusGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw ConfigError("field has " + std::to_string(values_.size()) + " values for a grid of " +
                      std::to_string(grid_.size()) + " nodes");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw SolverError("nonfinite field value at node " + std::to_string(i));
  }
}

Field Field::constant(TorusGrid grid, double value) { return Field(grid, std::vector<double>(grid.size(), value)); }

double Field::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Field::max() const { return *std::max_element(values_.begin(), values_.end()); }
double Field::mean() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

double Field::lipschitz() const {
  double slope = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double next = values_[(i + 1) % values_.size()];
    slope = std::max(slope, std::abs(next - values_[i]));
  }
  return slope / grid_.spacing();
}

Field Field::operator+(double c) const {
  std::vector<double> out(values_);
  for (double& v : out) v += c;
  return Field(grid_, std::move(out));
}

Field Field::operator*(double c) const {
  std::vector<double> out(values_);
  for (double& v : out) v *= c;
  return Field(grid_, std::move(out));
}

namespace {
void require_same_grid(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw ConfigError("fields live on different grids");
}
}  // namespace

Field Field::operator+(const Field& other) const {
  require_same_grid(*this, other);
  std::vector<double> out(values_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += other.values_[i];
  return Field(grid_, std::move(out));
}

Field Field::operator-(const Field& other) const {
  require_same_grid(*this, other);
  std::vector<double> out(values_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= other.values_[i];
  return Field(grid_, std::move(out));
}

Field field_from_expr(const TorusGrid& grid, const Expr& e) {
  for (Var v : {Var::y, Var::p, Var::u, Var::v, Var::eps}) {
    if (e.uses(v)) {
      throw ConfigError("formula '" + e.source() + "' may only use x, found '" + std::string(var_name(v)) + "'");
    }
  }
  std::vector<double> values(grid.size());
  VarSlots slots{};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    slots[static_cast<std::size_t>(Var::x)] = grid.node(i);
    values[i] = e.eval(slots);
  }
  return Field(grid, std::move(values));
}

double interp(std::span<const double> values, const TorusGrid& grid, double x) {
  const double s = x / grid.spacing();
  const double r = std::round(s);
  if (std::abs(s - r) <= 1e-12 * std::max(1.0, std::abs(s))) {
    return values[grid.wrap(static_cast<std::ptrdiff_t>(r))];
  }
  const double fl = std::floor(s);
  const double w = s - fl;
  const std::size_t a = grid.wrap(static_cast<std::ptrdiff_t>(fl));
  const std::size_t b = a + 1 == grid.size() ? 0 : a + 1;
  return (1.0 - w) * values[a] + w * values[b];
}

double interp(const Field& f, double x) { return interp(f.values(), f.grid(), x); }

double sup_diff(const Field& f, const Field& g) {
  require_same_grid(f, g);
  double d = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) d = std::max(d, std::abs(f[i] - g[i]));
  return d;
}

Field resample(const Field& f, const TorusGrid& target) {
  if (std::abs(target.period() - f.grid().period()) > 1e-12 * f.grid().period()) {
    throw ConfigError("cannot resample between tori of different period");
  }
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = interp(f, target.node(i));
  return Field(target, std::move(out));
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(std::ostream& os, const Field& f) {
  os << "x,value\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    os << format_double(f.grid().node(i)) << ',' << format_double(f[i]) << '\n';
  }
}

}  // namespace weakkam
