#pragma once

#include "bhom/corrector.hpp"
#include "bhom/types.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhom {

class ExpressionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Arithmetic over coordinates x1..xn: numbers, pi, + - * / ^, unary minus,
/// parentheses, sin cos exp sqrt abs and two-argument min max.
class Expression {
 public:
  static Expression parse(const std::string& text, int dim) {
    Parser p{text, 0, dim, {}};
    Expression e;
    e.text_ = text;
    e.root_ = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected trailing input");
    e.nodes_ = std::move(p.nodes);
    e.dim_ = dim;
    return e;
  }

  double operator()(const Point& x) const { return eval(root_, x); }

  bool uses_coordinates() const {
    for (const Node& n : nodes_)
      if (n.op == Op::Var) return true;
    return false;
  }

  const std::string& text() const { return text_; }

  /// As a Field; constant expressions are flagged so callers can shortcut.
  Field field() const {
    auto self = std::make_shared<Expression>(*this);
    if (!uses_coordinates()) return Field::constant((*self)(Point::Zero(dim_)));
    return Field::from([self](const Point& x) { return (*self)(x); });
  }

 private:
  enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Sqrt, Abs, Min, Max };
  struct Node {
    Op op;
    double value = 0.0;
    int a = -1, b = -1;
  };

  struct Parser {
    const std::string& s;
    std::size_t pos;
    int dim;
    std::vector<Node> nodes;

    [[noreturn]] void fail(const std::string& what) const {
      throw ExpressionError("expression '" + s + "': " + what + " at position " + std::to_string(pos));
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    int add(Node n) {
      nodes.push_back(n);
      return static_cast<int>(nodes.size()) - 1;
    }
    int expr() {
      int l = term();
      while (true) {
        if (eat('+'))
          l = add({Op::Add, 0.0, l, term()});
        else if (eat('-'))
          l = add({Op::Sub, 0.0, l, term()});
        else
          return l;
      }
    }
    int term() {
      int l = unary();
      while (true) {
        if (eat('*'))
          l = add({Op::Mul, 0.0, l, unary()});
        else if (eat('/'))
          l = add({Op::Div, 0.0, l, unary()});
        else
          return l;
      }
    }
    int unary() {
      if (eat('-')) return add({Op::Neg, 0.0, unary(), -1});
      if (eat('+')) return unary();
      return power();
    }
    int power() {
      const int base = primary();
      if (eat('^')) return add({Op::Pow, 0.0, base, unary()});
      return base;
    }
    int primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of input");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        const int e = expr();
        if (!eat(')')) fail("missing ')'");
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        double v = 0.0;
        const auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
        if (res.ec != std::errc()) fail("malformed number");
        pos = static_cast<std::size_t>(res.ptr - s.data());
        return add({Op::Num, v});
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        const std::string id = s.substr(start, pos - start);
        if (id == "pi") return add({Op::Num, std::numbers::pi});
        if (id.size() >= 2 && id[0] == 'x' && std::isdigit(static_cast<unsigned char>(id[1]))) {
          const int k = std::stoi(id.substr(1));
          if (k < 1 || k > dim) fail("coordinate " + id + " outside 1.." + std::to_string(dim));
          return add({Op::Var, static_cast<double>(k - 1)});
        }
        Op op;
        int arity = 1;
        if (id == "sin") op = Op::Sin;
        else if (id == "cos") op = Op::Cos;
        else if (id == "exp") op = Op::Exp;
        else if (id == "sqrt") op = Op::Sqrt;
        else if (id == "abs") op = Op::Abs;
        else if (id == "min") op = Op::Min, arity = 2;
        else if (id == "max") op = Op::Max, arity = 2;
        else fail("unknown identifier '" + id + "'");
        if (!eat('(')) fail("expected '(' after " + id);
        const int a = expr();
        int b = -1;
        if (arity == 2) {
          if (!eat(',')) fail("expected ',' in " + id);
          b = expr();
        }
        if (!eat(')')) fail("missing ')'");
        return add({op, 0.0, a, b});
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  double eval(int i, const Point& x) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::Num: return n.value;
      case Op::Var: return x(static_cast<int>(n.value));
      case Op::Neg: return -eval(n.a, x);
      case Op::Add: return eval(n.a, x) + eval(n.b, x);
      case Op::Sub: return eval(n.a, x) - eval(n.b, x);
      case Op::Mul: return eval(n.a, x) * eval(n.b, x);
      case Op::Div: return eval(n.a, x) / eval(n.b, x);
      case Op::Pow: return std::pow(eval(n.a, x), eval(n.b, x));
      case Op::Sin: return std::sin(eval(n.a, x));
      case Op::Cos: return std::cos(eval(n.a, x));
      case Op::Exp: return std::exp(eval(n.a, x));
      case Op::Sqrt: return std::sqrt(eval(n.a, x));
      case Op::Abs: return std::abs(eval(n.a, x));
      case Op::Min: return std::min(eval(n.a, x), eval(n.b, x));
      case Op::Max: return std::max(eval(n.a, x), eval(n.b, x));
    }
    return 0.0;
  }

  std::string text_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int dim_ = 3;
};

}  // namespace bhom
