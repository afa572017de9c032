#pragma once

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

// Expression grammar for user Hamiltonians:
//
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := ("-")? power
//   power  := atom ("^" factor)?
//   atom   := number | ident | ident "(" expr ")" | "(" expr ")"
//
// Variables are S, q1..qn, p1..pn; functions sin cos exp log sqrt abs.

enum class Func { sin, cos, exp, log, sqrt, abs };

inline const char* func_name(Func f) {
  switch (f) {
    case Func::sin: return "sin";
    case Func::cos: return "cos";
    case Func::exp: return "exp";
    case Func::log: return "log";
    case Func::sqrt: return "sqrt";
    case Func::abs: return "abs";
  }
  return "?";
}

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  enum class Kind { number, var_s, var_q, var_p, neg, add, sub, mul, div, pow, call };

  Kind kind;
  double value = 0.0;      // number
  std::size_t index = 0;   // zero-based variable index for q/p
  Func func = Func::sin;   // call
  ExprPtr lhs;             // unary operand, call argument, or left operand
  ExprPtr rhs;

  friend bool operator==(const ExprNode& a, const ExprNode& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Kind::number:
        return a.value == b.value;
      case Kind::var_s:
        return true;
      case Kind::var_q:
      case Kind::var_p:
        return a.index == b.index;
      case Kind::neg:
        return *a.lhs == *b.lhs;
      case Kind::call:
        return a.func == b.func && *a.lhs == *b.lhs;
      default:
        return *a.lhs == *b.lhs && *a.rhs == *b.rhs;
    }
  }
};

namespace detail {

inline ExprPtr make_node(ExprNode::Kind k, ExprPtr lhs = nullptr, ExprPtr rhs = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

class ExprParser {
 public:
  ExprParser(std::string_view src, std::size_t n) : src_(src), n_(n) {}

  ExprPtr parse() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("empty expression", pos_);
    ExprPtr e = expr();
    skip_ws();
    if (pos_ < src_.size()) {
      throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_);
    }
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  ExprPtr expr() {
    ExprPtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make_node(ExprNode::Kind::add, lhs, term());
      } else if (accept('-')) {
        lhs = make_node(ExprNode::Kind::sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr term() {
    ExprPtr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = make_node(ExprNode::Kind::mul, lhs, factor());
      } else if (accept('/')) {
        lhs = make_node(ExprNode::Kind::div, lhs, factor());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr factor() {
    if (accept('-')) return make_node(ExprNode::Kind::neg, power());
    return power();
  }

  ExprPtr power() {
    ExprPtr base = atom();
    if (accept('^')) return make_node(ExprNode::Kind::pow, base, factor());
    return base;
  }

  ExprPtr atom() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
    const char c = src_[pos_];
    if (accept('(')) {
      ExprPtr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  ExprPtr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t k = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++k;
      }
      return k;
    };
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw ParseError("malformed number", start);
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t mark = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError("malformed exponent", mark);
    }
    const std::string text(src_.substr(start, pos_ - start));
    errno = 0;
    const double v = std::strtod(text.c_str(), nullptr);
    if (errno == ERANGE && !std::isfinite(v)) throw ParseError("number out of range", start);
    auto node = std::make_shared<ExprNode>();
    node->kind = ExprNode::Kind::number;
    node->value = v;
    return node;
  }

  ExprPtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(src_.substr(start, pos_ - start));

    static const std::pair<const char*, Func> funcs[] = {
        {"sin", Func::sin}, {"cos", Func::cos},   {"exp", Func::exp},
        {"log", Func::log}, {"sqrt", Func::sqrt}, {"abs", Func::abs}};
    for (const auto& [fname, f] : funcs) {
      if (name == fname) return call(name, f, start);
    }

    auto node = std::make_shared<ExprNode>();
    if (name == "S") {
      node->kind = ExprNode::Kind::var_s;
    } else if ((name[0] == 'q' || name[0] == 'p') && name.size() > 1 &&
               name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const unsigned long idx = std::strtoul(name.c_str() + 1, nullptr, 10);
      if (idx < 1 || idx > n_) throw UnknownIdentifierError(name, start);
      node->kind = name[0] == 'q' ? ExprNode::Kind::var_q : ExprNode::Kind::var_p;
      node->index = idx - 1;
    } else {
      throw UnknownIdentifierError(name, start);
    }
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      throw ParseError("variable '" + name + "' cannot be called", pos_);
    }
    return node;
  }

  ExprPtr call(const std::string& name, Func f, std::size_t start) {
    if (!accept('(')) throw ArityError("function '" + name + "' expects 1 argument, got none", start);
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == ')') {
      throw ArityError("function '" + name + "' expects 1 argument, got 0", start);
    }
    std::vector<ExprPtr> args{expr()};
    while (accept(',')) args.push_back(expr());
    expect(')');
    if (args.size() != 1) {
      throw ArityError("function '" + name + "' expects 1 argument, got " +
                           std::to_string(args.size()),
                       start);
    }
    auto node = std::make_shared<ExprNode>();
    node->kind = ExprNode::Kind::call;
    node->func = f;
    node->lhs = std::move(args[0]);
    return node;
  }

  std::string_view src_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline double apply(Func f, double v) {
  switch (f) {
    case Func::sin: return std::sin(v);
    case Func::cos: return std::cos(v);
    case Func::exp: return std::exp(v);
    case Func::log: return std::log(v);
    case Func::sqrt: return std::sqrt(v);
    case Func::abs: return std::abs(v);
  }
  return std::nan("");
}

}  // namespace detail

inline ExprPtr parse_expression(std::string_view source, std::size_t n) {
  if (n == 0) throw ContractError("expression needs n >= 1");
  return detail::ExprParser(source, n).parse();
}

inline double evaluate(const ExprNode& e, const ContactState& x) {
  using K = ExprNode::Kind;
  switch (e.kind) {
    case K::number: return e.value;
    case K::var_s: return x.S();
    case K::var_q: return x.q(e.index);
    case K::var_p: return x.p(e.index);
    case K::neg: return -evaluate(*e.lhs, x);
    case K::add: return evaluate(*e.lhs, x) + evaluate(*e.rhs, x);
    case K::sub: return evaluate(*e.lhs, x) - evaluate(*e.rhs, x);
    case K::mul: return evaluate(*e.lhs, x) * evaluate(*e.rhs, x);
    case K::div: return evaluate(*e.lhs, x) / evaluate(*e.rhs, x);
    case K::pow: return std::pow(evaluate(*e.lhs, x), evaluate(*e.rhs, x));
    case K::call: return detail::apply(e.func, evaluate(*e.lhs, x));
  }
  return std::nan("");
}

// Fully parenthesized rendering that re-parses to an identical tree.
inline std::string to_source(const ExprNode& e) {
  using K = ExprNode::Kind;
  auto bin = [&](const char* op) {
    return "(" + to_source(*e.lhs) + " " + op + " " + to_source(*e.rhs) + ")";
  };
  switch (e.kind) {
    case K::number: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", e.value);
      return buf;
    }
    case K::var_s: return "S";
    case K::var_q: return "q" + std::to_string(e.index + 1);
    case K::var_p: return "p" + std::to_string(e.index + 1);
    case K::neg: return "(-" + to_source(*e.lhs) + ")";
    case K::add: return bin("+");
    case K::sub: return bin("-");
    case K::mul: return bin("*");
    case K::div: return bin("/");
    case K::pow: return "(" + to_source(*e.lhs) + "^" + to_source(*e.rhs) + ")";
    case K::call: return std::string(func_name(e.func)) + "(" + to_source(*e.lhs) + ")";
  }
  return "?";
}

// A user-defined contact Hamiltonian; partials by central differences.
class ExpressionSystem {
 public:
  ExpressionSystem(std::string source, std::size_t n)
      : n_(n), source_(std::move(source)), ast_(parse_expression(source_, n_)) {}

  std::size_t dof() const { return n_; }
  const std::string& source() const { return source_; }
  const ExprNode& ast() const { return *ast_; }

  double operator()(const ContactState& x) const { return evaluate(*ast_, x); }

  ContactSystem system() const {
    ExprPtr ast = ast_;
    return ContactSystem(
        n_, ScalarField([ast](const ContactState& x) { return evaluate(*ast, x); }),
        "expression");
  }

 private:
  std::size_t n_;
  std::string source_;
  ExprPtr ast_;
};

inline ExpressionSystem parse_hamiltonian(const std::string& source, std::size_t n) {
  return ExpressionSystem(source, n);
}

}  // namespace contact_flow
