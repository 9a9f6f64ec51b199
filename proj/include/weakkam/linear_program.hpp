#pragma once

// Equality-form linear programs  min c.x  s.t.  A x = b,  x >= 0
// solved by a two-phase revised simplex method.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "weakkam/error.hpp"

namespace weakkam {

class LinearProgram {
 public:
  using Entry = std::pair<std::uint32_t, double>;  // (row, coefficient)

  explicit LinearProgram(std::size_t rows) : rhs_(rows, 0.0) {}

  /// Appends a variable; returns its index.
  std::size_t add_column(double cost, std::vector<Entry> entries);
  void set_rhs(std::size_t row, double value) { rhs_.at(row) = value; }

  std::size_t rows() const noexcept { return rhs_.size(); }
  std::size_t cols() const noexcept { return cost_.size(); }
  const std::vector<double>& cost() const noexcept { return cost_; }
  const std::vector<double>& rhs() const noexcept { return rhs_; }
  const std::vector<Entry>& column(std::size_t j) const { return cols_.at(j); }

  /// max_r |(A x - b)_r|
  double residual(const std::vector<double>& x) const;

 private:
  std::vector<double> cost_;
  std::vector<std::vector<Entry>> cols_;
  std::vector<double> rhs_;
};

enum class LpStatus { infeasible, unbounded, iteration_limit };

class LpError : public SolverError {
 public:
  LpError(LpStatus status, const std::string& what) : SolverError(what), status_(status) {}
  LpStatus status() const noexcept { return status_; }

 private:
  LpStatus status_;
};

struct LpOptions {
  std::size_t max_iterations = 2'000'000;
  std::size_t refactor_every = 64;
  double feasibility_tol = 1e-9;
  double pricing_tol = 1e-10;
  // Consecutive degenerate pivots after which pricing switches from the most
  // negative reduced cost to Bland's smallest-index rule.
  std::size_t degenerate_switch = 50;
};

struct LpSolution {
  std::vector<double> x;
  double value;
  std::size_t iterations;
  double residual;
};

LpSolution lp_simplex(const LinearProgram& lp, const LpOptions& opts = {});

}  // namespace weakkam
