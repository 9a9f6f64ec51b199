#pragma once

// Scalar formulas used to declare Hamiltonians, potentials and initial data.
//
// Grammar (lowest to highest precedence):
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' unary)?            right associative
//   atom    := number | variable | 'pi' | func '(' args ')' | '(' sum ')'
//
// Variables are drawn from {x, y, p, u, v, eps}. Functions are the fixed
// whitelist sin cos exp log abs sqrt (one argument) and min max (two).

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "weakkam/error.hpp"

namespace weakkam {

enum class Var : std::uint8_t { x = 0, y, p, u, v, eps };
inline constexpr std::size_t kVarCount = 6;

/// Values for every variable slot, indexed by Var.
using VarSlots = std::array<double, kVarCount>;
using Bindings = std::map<std::string, double>;

std::string_view var_name(Var var);

class ParseError : public ConfigError {
 public:
  ParseError(const std::string& message, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Raised on log of a nonpositive number, division by zero, sqrt of a
/// negative number, a missing binding, or any nonfinite result.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Immutable parsed formula. Copies share the tree; evaluation is reentrant.
class Expr {
 public:
  struct Node;

  Expr();  // the constant 0

  double eval(const Bindings& bindings) const;
  double eval(const VarSlots& slots) const;

  bool uses(Var var) const noexcept { return (var_mask_ >> static_cast<unsigned>(var)) & 1U; }
  std::vector<std::string> variables() const;

  /// Fully parenthesized rendering that reparses to an equivalent tree.
  std::string to_string() const;
  /// Copy with every occurrence of `var` replaced by the constant `value`.
  Expr bind(Var var, double value) const;
  const std::string& source() const noexcept { return source_; }

 private:
  friend Expr parse(std::string_view source);

  enum class Op : std::uint8_t { push_const, push_var, add, sub, mul, div, pow, neg, sin, cos, exp, log, abs, sqrt, min, max };
  struct Instr {
    Op op;
    std::uint8_t slot = 0;
    double value = 0.0;
  };

  Expr(std::shared_ptr<const Node> root, std::string source);
  void compile(const Node& node);

  std::shared_ptr<const Node> root_;
  std::string source_;
  std::vector<Instr> program_;
  unsigned var_mask_ = 0;
  std::size_t max_depth_ = 0;
};

Expr parse(std::string_view source);

}  // namespace weakkam
