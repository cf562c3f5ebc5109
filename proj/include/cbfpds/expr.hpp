#pragma once

// Scalar expression language used by scenario files.
//
// Grammar (lowest to highest precedence):
//   expr    := term  (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          (right-associative)
//   primary := number | x<k> | param | func '(' expr (',' expr)* ')' | '(' expr ')'
// Variables are x1..xn. Functions: sin cos exp log sqrt abs (unary), min max (binary).
// Multiplication is never implicit.

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "cbfpds/error.hpp"
#include "cbfpds/geometry.hpp"

namespace cbfpds {

using Params = std::map<std::string, double, std::less<>>;

enum class ExprOp { Const, Var, Param, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class ExprFn { Sin, Cos, Exp, Log, Sqrt, Abs, Min, Max };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op = ExprOp::Const;
  double value = 0.0;        // Const
  int index = 0;             // Var, zero-based
  std::string name;          // Param
  ExprFn fn = ExprFn::Sin;   // Call
  std::vector<ExprPtr> args;
};

namespace detail {

struct FnInfo {
  std::string_view name;
  ExprFn fn;
  int arity;
};

inline constexpr std::array<FnInfo, 8> kFunctions{{
    {"sin", ExprFn::Sin, 1},
    {"cos", ExprFn::Cos, 1},
    {"exp", ExprFn::Exp, 1},
    {"log", ExprFn::Log, 1},
    {"sqrt", ExprFn::Sqrt, 1},
    {"abs", ExprFn::Abs, 1},
    {"min", ExprFn::Min, 2},
    {"max", ExprFn::Max, 2},
}};

inline const FnInfo* find_function(std::string_view name) {
  for (const auto& f : kFunctions)
    if (f.name == name) return &f;
  return nullptr;
}

inline const FnInfo& function_info(ExprFn fn) {
  for (const auto& f : kFunctions)
    if (f.fn == fn) return f;
  return kFunctions[0];
}

inline ExprPtr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->op = ExprOp::Const;
  n->value = v;
  return n;
}

inline ExprPtr make_var(int index) {
  auto n = std::make_shared<ExprNode>();
  n->op = ExprOp::Var;
  n->index = index;
  return n;
}

inline ExprPtr make_param(std::string name) {
  auto n = std::make_shared<ExprNode>();
  n->op = ExprOp::Param;
  n->name = std::move(name);
  return n;
}

inline ExprPtr make_unary(ExprOp op, ExprPtr a) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->args = {std::move(a)};
  return n;
}

inline ExprPtr make_binary(ExprOp op, ExprPtr a, ExprPtr b) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->args = {std::move(a), std::move(b)};
  return n;
}

inline ExprPtr make_call(ExprFn fn, std::vector<ExprPtr> args) {
  auto n = std::make_shared<ExprNode>();
  n->op = ExprOp::Call;
  n->fn = fn;
  n->args = std::move(args);
  return n;
}

inline bool is_const(const ExprPtr& e, double v) { return e->op == ExprOp::Const && e->value == v; }
inline bool is_const(const ExprPtr& e) { return e->op == ExprOp::Const; }

// Builders with light constant folding, used by the differentiator only. The parser keeps
// the literal structure so that printing and reparsing is structurally exact.
inline ExprPtr s_neg(const ExprPtr& a) {
  if (is_const(a)) return make_const(-a->value);
  if (a->op == ExprOp::Neg) return a->args[0];
  return make_unary(ExprOp::Neg, a);
}

inline ExprPtr s_add(const ExprPtr& a, const ExprPtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_binary(ExprOp::Add, a, b);
}

inline ExprPtr s_sub(const ExprPtr& a, const ExprPtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return s_neg(b);
  return make_binary(ExprOp::Sub, a, b);
}

inline ExprPtr s_mul(const ExprPtr& a, const ExprPtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return s_neg(b);
  if (is_const(b, -1.0)) return s_neg(a);
  return make_binary(ExprOp::Mul, a, b);
}

inline ExprPtr s_div(const ExprPtr& a, const ExprPtr& b) {
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  if (is_const(a) && is_const(b) && b->value != 0.0) return make_const(a->value / b->value);
  return make_binary(ExprOp::Div, a, b);
}

inline ExprPtr s_pow(const ExprPtr& a, const ExprPtr& b) {
  if (is_const(b, 1.0)) return a;
  if (is_const(b, 0.0)) return make_const(1.0);
  return make_binary(ExprOp::Pow, a, b);
}

inline bool depends_on(const ExprPtr& e, int var) {
  if (e->op == ExprOp::Var) return e->index == var;
  for (const auto& a : e->args)
    if (depends_on(a, var)) return true;
  return false;
}

inline bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (a->op != b->op) return false;
  switch (a->op) {
    case ExprOp::Const:
      return a->value == b->value;
    case ExprOp::Var:
      return a->index == b->index;
    case ExprOp::Param:
      return a->name == b->name;
    case ExprOp::Call:
      if (a->fn != b->fn) return false;
      break;
    default:
      break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (std::size_t i = 0; i < a->args.size(); ++i)
    if (!structurally_equal(a->args[i], b->args[i])) return false;
  return true;
}

inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf.data(), ptr);
}

// Binding strength used by the printer; larger binds tighter.
inline int precedence(const ExprPtr& e) {
  switch (e->op) {
    case ExprOp::Add:
    case ExprOp::Sub:
      return 1;
    case ExprOp::Mul:
    case ExprOp::Div:
      return 2;
    case ExprOp::Neg:
      return 3;
    case ExprOp::Pow:
      return 4;
    case ExprOp::Const:
      return e->value < 0.0 || std::signbit(e->value) ? 3 : 5;
    default:
      return 5;
  }
}

inline void print_to(const ExprPtr& e, std::string& out);

inline void print_wrapped(const ExprPtr& e, bool parens, std::string& out) {
  if (parens) out += '(';
  print_to(e, out);
  if (parens) out += ')';
}

inline void print_to(const ExprPtr& e, std::string& out) {
  switch (e->op) {
    case ExprOp::Const:
      if (std::signbit(e->value)) {
        out += '-';
        out += format_number(-e->value);
      } else {
        out += format_number(e->value);
      }
      return;
    case ExprOp::Var:
      out += 'x';
      out += std::to_string(e->index + 1);
      return;
    case ExprOp::Param:
      out += e->name;
      return;
    case ExprOp::Neg:
      out += '-';
      print_wrapped(e->args[0], precedence(e->args[0]) < 3, out);
      return;
    case ExprOp::Call: {
      out += function_info(e->fn).name;
      out += '(';
      for (std::size_t i = 0; i < e->args.size(); ++i) {
        if (i) out += ", ";
        print_to(e->args[i], out);
      }
      out += ')';
      return;
    }
    case ExprOp::Pow:
      // Left operand of '^' is a primary; right operand is a unary.
      print_wrapped(e->args[0], precedence(e->args[0]) < 5, out);
      out += '^';
      print_wrapped(e->args[1], precedence(e->args[1]) < 3, out);
      return;
    default: {
      const int p = precedence(e);
      const char* sym = e->op == ExprOp::Add ? " + " : e->op == ExprOp::Sub ? " - " : e->op == ExprOp::Mul ? "*" : "/";
      print_wrapped(e->args[0], precedence(e->args[0]) < p, out);
      out += sym;
      print_wrapped(e->args[1], precedence(e->args[1]) <= p, out);
      return;
    }
  }
}

class Parser {
 public:
  Parser(std::string_view text, int dim, const std::set<std::string, std::less<>>& params)
      : text_(text), dim_(dim), params_(params) {}

  ExprPtr parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    auto e = parse_expr();
    skip_ws();
    if (pos_ < text_.size()) throw ParseError("unexpected '" + std::string(1, text_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size()) throw ParseError(std::string("expected '") + c + "' before end of input", pos_);
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  ExprPtr parse_expr() {
    auto lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = make_binary(ExprOp::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = make_binary(ExprOp::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_term() {
    auto lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_binary(ExprOp::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = make_binary(ExprOp::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_unary() {
    if (accept('-')) {
      auto operand = parse_unary();
      // A negated literal is stored as a negative constant, which is also how the printer
      // writes negative constants produced by differentiation.
      if (operand->op == ExprOp::Const) return make_const(-operand->value);
      return make_unary(ExprOp::Neg, std::move(operand));
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    auto base = parse_primary();
    if (accept('^')) return make_binary(ExprOp::Pow, base, parse_unary());
    return base;
  }

  ExprPtr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = parse_expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  ExprPtr parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t q = pos_ + 1;
      if (q < text_.size() && (text_[q] == '+' || text_[q] == '-')) ++q;
      if (q < text_.size() && std::isdigit(static_cast<unsigned char>(text_[q]))) {
        pos_ = q;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc{} || ptr != text_.data() + pos_) throw ParseError("malformed number", start);
    return make_const(v);
  }

  ExprPtr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view id = text_.substr(start, pos_ - start);

    if (const FnInfo* f = find_function(id)) {
      if (!accept('(')) throw ParseError("expected '(' after function " + std::string(id), pos_);
      std::vector<ExprPtr> args{parse_expr()};
      while (accept(',')) args.push_back(parse_expr());
      expect(')');
      if (static_cast<int>(args.size()) != f->arity) {
        throw ParseError(std::string(id) + " expects " + std::to_string(f->arity) + " argument(s)", start);
      }
      return make_call(f->fn, std::move(args));
    }
    if (id.size() >= 2 && id[0] == 'x' &&
        id.substr(1).find_first_not_of("0123456789") == std::string_view::npos) {
      int k = 0;
      auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), k);
      if (ec != std::errc{} || k < 1 || k > dim_) {
        throw ParseError("variable " + std::string(id) + " out of range for dimension " + std::to_string(dim_), start);
      }
      return make_var(k - 1);
    }
    if (params_.count(id)) return make_param(std::string(id));
    throw ParseError("unknown identifier '" + std::string(id) + "'", start);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int dim_;
  const std::set<std::string, std::less<>>& params_;
};

inline double apply_fn(ExprFn fn, double a, double b) {
  switch (fn) {
    case ExprFn::Sin: return std::sin(a);
    case ExprFn::Cos: return std::cos(a);
    case ExprFn::Exp: return std::exp(a);
    case ExprFn::Log: return std::log(a);
    case ExprFn::Sqrt: return std::sqrt(a);
    case ExprFn::Abs: return std::abs(a);
    case ExprFn::Min: return std::min(a, b);
    case ExprFn::Max: return std::max(a, b);
  }
  return std::nan("");
}

inline double eval_node(const ExprNode& e, const Vec& x, const Params& params) {
  double r = 0.0;
  switch (e.op) {
    case ExprOp::Const:
      return e.value;
    case ExprOp::Var:
      if (e.index >= x.size()) throw EvalError("variable x" + std::to_string(e.index + 1) + " is unbound");
      r = x[e.index];
      break;
    case ExprOp::Param: {
      auto it = params.find(e.name);
      if (it == params.end()) throw EvalError("parameter '" + e.name + "' is unbound");
      r = it->second;
      break;
    }
    case ExprOp::Neg:
      r = -eval_node(*e.args[0], x, params);
      break;
    case ExprOp::Add:
      r = eval_node(*e.args[0], x, params) + eval_node(*e.args[1], x, params);
      break;
    case ExprOp::Sub:
      r = eval_node(*e.args[0], x, params) - eval_node(*e.args[1], x, params);
      break;
    case ExprOp::Mul:
      r = eval_node(*e.args[0], x, params) * eval_node(*e.args[1], x, params);
      break;
    case ExprOp::Div:
      r = eval_node(*e.args[0], x, params) / eval_node(*e.args[1], x, params);
      break;
    case ExprOp::Pow: {
      const double base = eval_node(*e.args[0], x, params);
      const ExprNode& ex = *e.args[1];
      // Small integer exponents are evaluated by repeated multiplication so negative bases work
      // and results stay bit-reproducible.
      if (ex.op == ExprOp::Const && ex.value == std::floor(ex.value) && std::abs(ex.value) <= 16) {
        const int k = static_cast<int>(ex.value);
        double p = 1.0;
        for (int i = 0; i < std::abs(k); ++i) p *= base;
        r = k < 0 ? 1.0 / p : p;
      } else {
        r = std::pow(base, eval_node(ex, x, params));
      }
      break;
    }
    case ExprOp::Call: {
      const double a = eval_node(*e.args[0], x, params);
      const double b = e.args.size() > 1 ? eval_node(*e.args[1], x, params) : 0.0;
      r = apply_fn(e.fn, a, b);
      if (std::isnan(r)) {
        throw EvalError(std::string(function_info(e.fn).name) + "(" + format_number(a) + ") is undefined");
      }
      break;
    }
  }
  if (!std::isfinite(r)) throw EvalError("expression evaluated to a non-finite value");
  return r;
}

inline ExprPtr diff_node(const ExprPtr& e, int var) {
  if (!depends_on(e, var)) return make_const(0.0);
  const auto& a = e->args;
  switch (e->op) {
    case ExprOp::Var:
      return make_const(1.0);
    case ExprOp::Neg:
      return s_neg(diff_node(a[0], var));
    case ExprOp::Add:
      return s_add(diff_node(a[0], var), diff_node(a[1], var));
    case ExprOp::Sub:
      return s_sub(diff_node(a[0], var), diff_node(a[1], var));
    case ExprOp::Mul:
      return s_add(s_mul(diff_node(a[0], var), a[1]), s_mul(a[0], diff_node(a[1], var)));
    case ExprOp::Div: {
      auto num = s_sub(s_mul(diff_node(a[0], var), a[1]), s_mul(a[0], diff_node(a[1], var)));
      return s_div(num, s_pow(a[1], make_const(2.0)));
    }
    case ExprOp::Pow: {
      const auto& u = a[0];
      const auto& v = a[1];
      if (!depends_on(v, var)) {
        auto vm1 = s_sub(v, make_const(1.0));
        return s_mul(s_mul(v, s_pow(u, vm1)), diff_node(u, var));
      }
      auto log_u = make_call(ExprFn::Log, {u});
      if (!depends_on(u, var)) return s_mul(s_mul(e, log_u), diff_node(v, var));
      auto inner = s_add(s_mul(diff_node(v, var), log_u), s_div(s_mul(v, diff_node(u, var)), u));
      return s_mul(e, inner);
    }
    case ExprOp::Call: {
      const auto du = diff_node(a[0], var);
      switch (e->fn) {
        case ExprFn::Sin:
          return s_mul(make_call(ExprFn::Cos, {a[0]}), du);
        case ExprFn::Cos:
          return s_mul(s_neg(make_call(ExprFn::Sin, {a[0]})), du);
        case ExprFn::Exp:
          return s_mul(e, du);
        case ExprFn::Log:
          return s_div(du, a[0]);
        case ExprFn::Sqrt:
          return s_div(du, s_mul(make_const(2.0), e));
        case ExprFn::Abs:
        case ExprFn::Min:
        case ExprFn::Max:
          throw DifferentiationError(std::string("cannot differentiate non-smooth function ") +
                                     std::string(function_info(e->fn).name));
      }
      break;
    }
    default:
      break;
  }
  return make_const(0.0);
}

}  // namespace detail

/// Immutable expression tree over variables x1..x_dim and named parameters.
class ExprAst {
 public:
  ExprAst() : root_(detail::make_const(0.0)) {}
  ExprAst(ExprPtr root, int dim) : root_(std::move(root)), dim_(dim) {}

  const ExprPtr& root() const { return root_; }
  int dim() const { return dim_; }

  double operator()(const Vec& x, const Params& params = {}) const { return detail::eval_node(*root_, x, params); }

  bool depends_on(int var) const { return detail::depends_on(root_, var); }
  bool is_constant() const { return root_->op == ExprOp::Const; }

  std::string to_string() const {
    std::string out;
    detail::print_to(root_, out);
    return out;
  }

  friend bool operator==(const ExprAst& a, const ExprAst& b) {
    return a.dim_ == b.dim_ && detail::structurally_equal(a.root_, b.root_);
  }

 private:
  ExprPtr root_;
  int dim_ = 0;
};

inline ExprAst parse_expression(std::string_view text, int dim, const std::set<std::string, std::less<>>& param_names = {}) {
  if (dim < 1) throw ParseError("dimension must be positive", 0);
  return ExprAst(detail::Parser(text, dim, param_names).parse(), dim);
}

inline double evaluate(const ExprAst& ast, const Vec& x, const Params& params = {}) {
  if (x.size() < ast.dim()) throw EvalError("point has fewer coordinates than the expression dimension");
  return ast(x, params);
}

/// Symbolic partial derivative with respect to x_{var+1} (var is zero-based).
inline ExprAst differentiate(const ExprAst& ast, int var) {
  if (var < 0 || var >= ast.dim()) throw DifferentiationError("variable index out of range");
  return ExprAst(detail::diff_node(ast.root(), var), ast.dim());
}

inline std::vector<ExprAst> gradient_exprs(const ExprAst& ast) {
  std::vector<ExprAst> g;
  g.reserve(ast.dim());
  for (int i = 0; i < ast.dim(); ++i) g.push_back(differentiate(ast, i));
  return g;
}

inline std::set<std::string, std::less<>> param_names(const Params& params) {
  std::set<std::string, std::less<>> names;
  for (const auto& [k, v] : params) names.insert(k);
  return names;
}

}  // namespace cbfpds
