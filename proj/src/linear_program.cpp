#include "weakkam/linear_program.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace weakkam {

std::size_t LinearProgram::add_column(double cost, std::vector<Entry> entries) {
  if (!std::isfinite(cost)) throw ConfigError("LP cost must be finite");
  for (const auto& [row, value] : entries) {
    if (row >= rows()) throw ConfigError("LP column refers to a missing row");
    if (!std::isfinite(value)) throw ConfigError("LP coefficient must be finite");
  }
  cost_.push_back(cost);
  cols_.push_back(std::move(entries));
  return cost_.size() - 1;
}

double LinearProgram::residual(const std::vector<double>& x) const {
  std::vector<double> r(rhs_.size(), 0.0);
  for (std::size_t j = 0; j < cols_.size(); ++j) {
    if (x[j] == 0.0) continue;
    for (const auto& [row, value] : cols_[j]) r[row] += value * x[j];
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) worst = std::max(worst, std::abs(r[k] - rhs_[k]));
  return worst;
}

namespace {

constexpr double kPivotTol = 1e-9;

class RevisedSimplex {
 public:
  RevisedSimplex(const LinearProgram& lp, const LpOptions& opts)
      : lp_(lp), opts_(opts), m_(lp.rows()), n_(lp.cols()), sign_(m_, 1.0), b_(lp.rhs()) {
    for (std::size_t r = 0; r < m_; ++r) {
      if (!std::isfinite(b_[r])) throw ConfigError("LP right-hand side must be finite");
      if (b_[r] < 0.0) {
        sign_[r] = -1.0;
        b_[r] = -b_[r];
      }
    }
    basis_.resize(m_);
    basic_pos_.assign(n_ + m_, kNone);
    for (std::size_t r = 0; r < m_; ++r) {
      basis_[r] = n_ + r;
      basic_pos_[n_ + r] = r;
    }
    binv_.assign(m_ * m_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) binv_[r * m_ + r] = 1.0;
    xb_ = b_;
  }

  LpSolution solve() {
    run(true);
    double infeas = 0.0;
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] >= n_) infeas += xb_[r];
    }
    double scale = 1.0;
    for (double v : b_) scale = std::max(scale, std::abs(v));
    if (infeas > opts_.feasibility_tol * scale) {
      throw LpError(LpStatus::infeasible, "LP is infeasible (phase-one residual " + std::to_string(infeas) + ")");
    }
    drive_out_artificials();
    run(false);
    refactor();

    std::vector<double> x(n_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] < n_) x[basis_[r]] = std::max(0.0, xb_[r]);
    }
    double value = 0.0;
    for (std::size_t j = 0; j < n_; ++j) value += lp_.cost()[j] * x[j];
    const double residual = lp_.residual(x);
    return LpSolution{std::move(x), value, iterations_, residual};
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  double cost(std::size_t j, bool phase_one) const {
    if (phase_one) return j >= n_ ? 1.0 : 0.0;
    return j < n_ ? lp_.cost()[j] : 0.0;
  }

  // alpha = B^{-1} A_j
  void column(std::size_t j, std::vector<double>& alpha) const {
    alpha.assign(m_, 0.0);
    if (j >= n_) {
      const std::size_t k = j - n_;
      for (std::size_t r = 0; r < m_; ++r) alpha[r] = binv_[r * m_ + k];
      return;
    }
    for (const auto& [row, value] : lp_.column(j)) {
      const double a = sign_[row] * value;
      for (std::size_t r = 0; r < m_; ++r) alpha[r] += binv_[r * m_ + row] * a;
    }
  }

  void pivot(std::size_t p, std::size_t j, const std::vector<double>& alpha) {
    const double piv = alpha[p];
    double* prow = &binv_[p * m_];
    for (std::size_t k = 0; k < m_; ++k) prow[k] /= piv;
    const double theta = xb_[p] / piv;
    for (std::size_t r = 0; r < m_; ++r) {
      if (r == p || alpha[r] == 0.0) continue;
      double* row = &binv_[r * m_];
      const double f = alpha[r];
      for (std::size_t k = 0; k < m_; ++k) row[k] -= f * prow[k];
      xb_[r] -= f * theta;
      if (xb_[r] < 0.0 && xb_[r] > -1e-11) xb_[r] = 0.0;
    }
    xb_[p] = theta;
    basic_pos_[basis_[p]] = kNone;
    basis_[p] = j;
    basic_pos_[j] = p;
    ++iterations_;
    if (iterations_ % opts_.refactor_every == 0) refactor();
  }

  void refactor() {
    std::vector<double> B(m_ * m_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      const std::size_t j = basis_[r];
      if (j >= n_) {
        B[(j - n_) * m_ + r] = 1.0;
      } else {
        for (const auto& [row, value] : lp_.column(j)) B[row * m_ + r] = sign_[row] * value;
      }
    }
    std::vector<double> inv(m_ * m_, 0.0);
    for (std::size_t r = 0; r < m_; ++r) inv[r * m_ + r] = 1.0;
    for (std::size_t c = 0; c < m_; ++c) {
      std::size_t best = c;
      for (std::size_t r = c + 1; r < m_; ++r) {
        if (std::abs(B[r * m_ + c]) > std::abs(B[best * m_ + c])) best = r;
      }
      if (std::abs(B[best * m_ + c]) < 1e-13) throw SolverError("simplex basis became singular");
      if (best != c) {
        std::swap_ranges(B.begin() + c * m_, B.begin() + (c + 1) * m_, B.begin() + best * m_);
        std::swap_ranges(inv.begin() + c * m_, inv.begin() + (c + 1) * m_, inv.begin() + best * m_);
      }
      const double d = B[c * m_ + c];
      for (std::size_t k = 0; k < m_; ++k) {
        B[c * m_ + k] /= d;
        inv[c * m_ + k] /= d;
      }
      for (std::size_t r = 0; r < m_; ++r) {
        if (r == c) continue;
        const double f = B[r * m_ + c];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) {
          B[r * m_ + k] -= f * B[c * m_ + k];
          inv[r * m_ + k] -= f * inv[c * m_ + k];
        }
      }
    }
    binv_.swap(inv);
    for (std::size_t r = 0; r < m_; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < m_; ++k) s += binv_[r * m_ + k] * b_[k];
      xb_[r] = std::abs(s) < 1e-13 ? 0.0 : s;
    }
  }

  void run(bool phase_one) {
    std::vector<double> y(m_), alpha(m_);
    std::size_t degenerate = 0;
    for (;;) {
      if (iterations_ >= opts_.max_iterations) {
        throw LpError(LpStatus::iteration_limit, "simplex iteration limit reached");
      }
      std::fill(y.begin(), y.end(), 0.0);
      for (std::size_t r = 0; r < m_; ++r) {
        const double cb = cost(basis_[r], phase_one);
        if (cb == 0.0) continue;
        const double* row = &binv_[r * m_];
        for (std::size_t k = 0; k < m_; ++k) y[k] += cb * row[k];
      }
      const bool bland = degenerate >= opts_.degenerate_switch;
      std::size_t entering = kNone;
      double best = -opts_.pricing_tol;
      for (std::size_t j = 0; j < n_; ++j) {
        if (basic_pos_[j] != kNone) continue;
        double d = cost(j, phase_one);
        for (const auto& [row, value] : lp_.column(j)) d -= y[row] * sign_[row] * value;
        if (d < best) {
          entering = j;
          if (bland) break;
          best = d;
        }
      }
      if (entering == kNone) return;

      column(entering, alpha);
      std::size_t leave = kNone;
      double ratio = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < m_; ++r) {
        if (alpha[r] <= kPivotTol) continue;
        const double t = xb_[r] / alpha[r];
        if (t < ratio - 1e-12) {
          ratio = t;
          leave = r;
        } else if (t <= ratio + 1e-12 && basis_[r] < basis_[leave]) {
          ratio = std::min(ratio, t);
          leave = r;
        }
      }
      if (leave == kNone) {
        if (phase_one) throw SolverError("phase-one simplex found an unbounded ray");
        throw LpError(LpStatus::unbounded, "LP is unbounded");
      }
      degenerate = ratio <= 1e-12 ? degenerate + 1 : 0;
      pivot(leave, entering, alpha);
    }
  }

  // Replace artificials left at level zero by structural columns where possible;
  // rows where none qualifies are redundant and keep their artificial.
  void drive_out_artificials() {
    std::vector<double> alpha(m_);
    for (std::size_t p = 0; p < m_; ++p) {
      if (basis_[p] < n_) continue;
      const double* row = &binv_[p * m_];
      std::size_t pick = kNone;
      double mag = 1e-7;
      for (std::size_t j = 0; j < n_; ++j) {
        if (basic_pos_[j] != kNone) continue;
        double rho = 0.0;
        for (const auto& [r, value] : lp_.column(j)) rho += row[r] * sign_[r] * value;
        if (std::abs(rho) > mag) {
          mag = std::abs(rho);
          pick = j;
        }
      }
      if (pick == kNone) continue;
      column(pick, alpha);
      xb_[p] = 0.0;
      pivot(p, pick, alpha);
    }
  }

  const LinearProgram& lp_;
  const LpOptions& opts_;
  std::size_t m_, n_;
  std::vector<double> sign_;
  std::vector<double> b_;
  std::vector<std::size_t> basis_;
  std::vector<std::size_t> basic_pos_;
  std::vector<double> binv_;
  std::vector<double> xb_;
  std::size_t iterations_ = 0;
};

}  // namespace

LpSolution lp_simplex(const LinearProgram& lp, const LpOptions& opts) {
  if (lp.rows() == 0) throw ConfigError("LP has no constraints");
  return RevisedSimplex(lp, opts).solve();
}

}  // namespace weakkam
