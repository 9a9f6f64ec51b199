#include "weakkam/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

namespace weakkam {

namespace {

constexpr std::array<std::string_view, kVarCount> kVarNames = {"x", "y", "p", "u", "v", "eps"};

std::optional<Var> lookup_var(std::string_view name) {
  for (std::size_t i = 0; i < kVarNames.size(); ++i) {
    if (kVarNames[i] == name) return static_cast<Var>(i);
  }
  return std::nullopt;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

}  // namespace

std::string_view var_name(Var var) { return kVarNames[static_cast<std::size_t>(var)]; }

ParseError::ParseError(const std::string& message, std::size_t offset)
    : ConfigError("syntax error at byte " + std::to_string(offset) + ": " + message), offset_(offset) {}

struct Expr::Node {
  enum class Kind { number, variable, unary, binary, call };
  Kind kind;
  double value = 0.0;
  Var var = Var::x;
  char op = 0;           // '+', '-', '*', '/', '^' for binary; '-' for unary
  std::string function;  // for calls
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

struct FunctionInfo {
  std::string_view name;
  std::size_t arity;
};

constexpr std::array<FunctionInfo, 8> kFunctions = {{
    {"sin", 1}, {"cos", 1}, {"exp", 1}, {"log", 1}, {"abs", 1}, {"sqrt", 1}, {"min", 2}, {"max", 2},
}};

const FunctionInfo* lookup_function(std::string_view name) {
  for (const auto& f : kFunctions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, comma, end };

struct Token {
  Tok kind;
  std::size_t offset;
  std::string_view text;
  double number = 0.0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return current_; }
  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= src_.size()) {
      current_ = {Tok::end, start, {}};
      return;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t end = pos_;
      while (end < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.')) ++end;
      if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
        std::size_t e = end + 1;
        if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) ++e;
        if (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) {
          while (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) ++e;
          end = e;
        }
      }
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + end, value);
      if (ec != std::errc() || ptr != src_.data() + end) throw ParseError("malformed number", start);
      pos_ = end;
      current_ = {Tok::number, start, src_.substr(start, end - start), value};
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[end])) || src_[end] == '_')) ++end;
      pos_ = end;
      current_ = {Tok::ident, start, src_.substr(start, end - start)};
      return;
    }
    Tok kind;
    switch (c) {
      case '+': kind = Tok::plus; break;
      case '-': kind = Tok::minus; break;
      case '*': kind = Tok::star; break;
      case '/': kind = Tok::slash; break;
      case '^': kind = Tok::caret; break;
      case '(': kind = Tok::lparen; break;
      case ')': kind = Tok::rparen; break;
      case ',': kind = Tok::comma; break;
      default: throw ParseError(std::string("unexpected character '") + c + "'", start);
    }
    ++pos_;
    current_ = {kind, start, src_.substr(start, 1)};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Token current_{Tok::end, 0, {}};
};

// Binding powers. Unary minus sits between '*' and '^'.
constexpr int kPrefixMinusBp = 30;

struct InfixBp {
  int left;
  int right;
  char op;
};

std::optional<InfixBp> infix_bp(Tok kind) {
  switch (kind) {
    case Tok::plus: return InfixBp{10, 11, '+'};
    case Tok::minus: return InfixBp{10, 11, '-'};
    case Tok::star: return InfixBp{20, 21, '*'};
    case Tok::slash: return InfixBp{20, 21, '/'};
    case Tok::caret: return InfixBp{41, 40, '^'};
    default: return std::nullopt;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  NodePtr parse_all() {
    NodePtr root = parse_expr(0);
    const Token& t = lex_.peek();
    if (t.kind != Tok::end) throw ParseError("unexpected '" + std::string(t.text) + "'", t.offset);
    return root;
  }

 private:
  NodePtr parse_expr(int min_bp) {
    NodePtr lhs = parse_prefix();
    for (;;) {
      const Token& t = lex_.peek();
      const auto bp = infix_bp(t.kind);
      if (!bp || bp->left < min_bp) break;
      lex_.take();
      NodePtr rhs = parse_expr(bp->right);
      auto node = std::make_shared<Expr::Node>();
      node->kind = Expr::Node::Kind::binary;
      node->op = bp->op;
      node->args = {lhs, rhs};
      lhs = node;
    }
    return lhs;
  }

  NodePtr parse_prefix() {
    Token t = lex_.take();
    switch (t.kind) {
      case Tok::number: {
        auto node = std::make_shared<Expr::Node>();
        node->kind = Expr::Node::Kind::number;
        node->value = t.number;
        return node;
      }
      case Tok::minus: {
        auto node = std::make_shared<Expr::Node>();
        node->kind = Expr::Node::Kind::unary;
        node->op = '-';
        node->args = {parse_expr(kPrefixMinusBp)};
        return node;
      }
      case Tok::lparen: {
        NodePtr inner = parse_expr(0);
        expect(Tok::rparen, "')'");
        return inner;
      }
      case Tok::ident: return parse_identifier(t);
      case Tok::end: throw ParseError("unexpected end of input", t.offset);
      default: throw ParseError("unexpected '" + std::string(t.text) + "'", t.offset);
    }
  }

  NodePtr parse_identifier(const Token& t) {
    if (lex_.peek().kind == Tok::lparen) {
      const FunctionInfo* info = lookup_function(t.text);
      if (info == nullptr) throw ParseError("unknown function '" + std::string(t.text) + "'", t.offset);
      lex_.take();
      auto node = std::make_shared<Expr::Node>();
      node->kind = Expr::Node::Kind::call;
      node->function = std::string(info->name);
      if (lex_.peek().kind != Tok::rparen) {
        node->args.push_back(parse_expr(0));
        while (lex_.peek().kind == Tok::comma) {
          lex_.take();
          node->args.push_back(parse_expr(0));
        }
      }
      expect(Tok::rparen, "')'");
      if (node->args.size() != info->arity) {
        throw ParseError("function '" + node->function + "' expects " + std::to_string(info->arity) +
                             " argument(s), got " + std::to_string(node->args.size()),
                         t.offset);
      }
      return node;
    }
    if (t.text == "pi") {
      auto node = std::make_shared<Expr::Node>();
      node->kind = Expr::Node::Kind::number;
      node->value = std::numbers::pi;
      node->function = "pi";
      return node;
    }
    if (auto var = lookup_var(t.text)) {
      auto node = std::make_shared<Expr::Node>();
      node->kind = Expr::Node::Kind::variable;
      node->var = *var;
      return node;
    }
    throw ParseError("unknown identifier '" + std::string(t.text) + "'", t.offset);
  }

  void expect(Tok kind, const char* what) {
    const Token& t = lex_.peek();
    if (t.kind != kind) {
      throw ParseError(std::string("expected ") + what + (t.kind == Tok::end ? " before end of input" : ""), t.offset);
    }
    lex_.take();
  }

  Lexer lex_;
};

void render(const Expr::Node& node, std::string& out) {
  using Kind = Expr::Node::Kind;
  switch (node.kind) {
    case Kind::number:
      if (node.function == "pi") {
        out += "pi";
      } else if (node.value < 0) {
        out += "(" + format_number(node.value) + ")";
      } else {
        out += format_number(node.value);
      }
      return;
    case Kind::variable: out += var_name(node.var); return;
    case Kind::unary:
      out += "(-";
      render(*node.args[0], out);
      out += ")";
      return;
    case Kind::binary:
      out += "(";
      render(*node.args[0], out);
      out += ' ';
      out += node.op;
      out += ' ';
      render(*node.args[1], out);
      out += ")";
      return;
    case Kind::call:
      out += node.function;
      out += "(";
      for (std::size_t i = 0; i < node.args.size(); ++i) {
        if (i != 0) out += ", ";
        render(*node.args[i], out);
      }
      out += ")";
      return;
  }
}

[[noreturn]] void domain_error(const char* what, double arg) {
  throw EvalError(std::string("domain error: ") + what + " (argument " + format_number(arg) + ")");
}

}  // namespace

Expr::Expr() : Expr(parse("0")) {}

Expr::Expr(std::shared_ptr<const Node> root, std::string source) : root_(std::move(root)), source_(std::move(source)) {
  compile(*root_);
  std::size_t depth = 0;
  for (const auto& ins : program_) {
    switch (ins.op) {
      case Op::push_const:
      case Op::push_var: ++depth; break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
      case Op::pow:
      case Op::min:
      case Op::max: --depth; break;
      default: break;
    }
    max_depth_ = std::max(max_depth_, depth);
  }
}

void Expr::compile(const Node& node) {
  using Kind = Node::Kind;
  switch (node.kind) {
    case Kind::number: program_.push_back({Op::push_const, 0, node.value}); return;
    case Kind::variable:
      program_.push_back({Op::push_var, static_cast<std::uint8_t>(node.var), 0.0});
      var_mask_ |= 1U << static_cast<unsigned>(node.var);
      return;
    case Kind::unary:
      compile(*node.args[0]);
      program_.push_back({Op::neg});
      return;
    case Kind::binary: {
      compile(*node.args[0]);
      compile(*node.args[1]);
      Op op = Op::add;
      switch (node.op) {
        case '+': op = Op::add; break;
        case '-': op = Op::sub; break;
        case '*': op = Op::mul; break;
        case '/': op = Op::div; break;
        case '^': op = Op::pow; break;
      }
      program_.push_back({op});
      return;
    }
    case Kind::call: {
      for (const auto& a : node.args) compile(*a);
      static const std::map<std::string, Op, std::less<>> kOps = {
          {"sin", Op::sin}, {"cos", Op::cos}, {"exp", Op::exp}, {"log", Op::log},
          {"abs", Op::abs}, {"sqrt", Op::sqrt}, {"min", Op::min}, {"max", Op::max},
      };
      program_.push_back({kOps.find(node.function)->second});
      return;
    }
  }
}

double Expr::eval(const VarSlots& slots) const {
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> inline_stack{};
  std::vector<double> heap_stack;
  double* stack = inline_stack.data();
  if (max_depth_ > kInline) {
    heap_stack.resize(max_depth_);
    stack = heap_stack.data();
  }
  std::size_t top = 0;
  for (const auto& ins : program_) {
    switch (ins.op) {
      case Op::push_const: stack[top++] = ins.value; break;
      case Op::push_var: stack[top++] = slots[ins.slot]; break;
      case Op::add: --top; stack[top - 1] += stack[top]; break;
      case Op::sub: --top; stack[top - 1] -= stack[top]; break;
      case Op::mul: --top; stack[top - 1] *= stack[top]; break;
      case Op::div:
        --top;
        if (stack[top] == 0.0) domain_error("division by zero", stack[top]);
        stack[top - 1] /= stack[top];
        break;
      case Op::pow: {
        --top;
        const double base = stack[top - 1];
        const double e = stack[top];
        if (e == 2.0) {
          stack[top - 1] = base * base;
        } else {
          stack[top - 1] = std::pow(base, e);
          if (std::isnan(stack[top - 1])) domain_error("pow of negative base with non-integer exponent", base);
        }
        break;
      }
      case Op::neg: stack[top - 1] = -stack[top - 1]; break;
      case Op::sin: stack[top - 1] = std::sin(stack[top - 1]); break;
      case Op::cos: stack[top - 1] = std::cos(stack[top - 1]); break;
      case Op::exp: stack[top - 1] = std::exp(stack[top - 1]); break;
      case Op::log:
        if (!(stack[top - 1] > 0.0)) domain_error("log of nonpositive value", stack[top - 1]);
        stack[top - 1] = std::log(stack[top - 1]);
        break;
      case Op::abs: stack[top - 1] = std::abs(stack[top - 1]); break;
      case Op::sqrt:
        if (stack[top - 1] < 0.0) domain_error("sqrt of negative value", stack[top - 1]);
        stack[top - 1] = std::sqrt(stack[top - 1]);
        break;
      case Op::min: --top; stack[top - 1] = std::min(stack[top - 1], stack[top]); break;
      case Op::max: --top; stack[top - 1] = std::max(stack[top - 1], stack[top]); break;
    }
  }
  const double result = stack[0];
  if (!std::isfinite(result)) throw EvalError("nonfinite result evaluating '" + source_ + "'");
  return result;
}

double Expr::eval(const std::map<std::string, double>& bindings) const {
  VarSlots slots{};
  for (std::size_t i = 0; i < kVarCount; ++i) {
    if (!uses(static_cast<Var>(i))) continue;
    const auto it = bindings.find(std::string(kVarNames[i]));
    if (it == bindings.end()) {
      throw EvalError("missing binding for variable '" + std::string(kVarNames[i]) + "' in '" + source_ + "'");
    }
    slots[i] = it->second;
  }
  return eval(slots);
}

std::vector<std::string> Expr::variables() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kVarCount; ++i) {
    if (uses(static_cast<Var>(i))) out.emplace_back(kVarNames[i]);
  }
  return out;
}

std::string Expr::to_string() const {
  std::string out;
  render(*root_, out);
  return out;
}

namespace {

NodePtr substitute(const NodePtr& node, Var var, double value) {
  if (node->kind == Expr::Node::Kind::variable && node->var == var) {
    auto out = std::make_shared<Expr::Node>();
    out->kind = Expr::Node::Kind::number;
    out->value = value;
    return out;
  }
  if (node->args.empty()) return node;
  auto out = std::make_shared<Expr::Node>(*node);
  for (auto& arg : out->args) arg = substitute(arg, var, value);
  return out;
}

}  // namespace

Expr Expr::bind(Var var, double value) const {
  if (!uses(var)) return *this;
  NodePtr root = substitute(root_, var, value);
  std::string text;
  render(*root, text);
  return Expr(std::move(root), std::move(text));
}

Expr parse(std::string_view source) {
  Parser parser(source);
  return Expr(parser.parse_all(), std::string(source));
}

}  // namespace weakkam
