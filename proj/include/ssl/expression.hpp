#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>

#include "ssl/error.hpp"
#include "ssl/fields.hpp"
#include "ssl/io.hpp"

namespace ssl {

// Arithmetic over x, y: + - * / ^, parentheses, numbers, pi, and the functions
// exp, sin, cos, sqrt, log. ^ is right associative and binds tighter than
// unary minus, so -x^2 = -(x^2).
class Expression {
 public:
  static Expression parse(const std::string& text) {
    Parser p{text, 0};
    Expression e;
    e.fn_ = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    e.text_ = text;
    return e;
  }

  double operator()(double x, double y) const { return fn_(x, y); }
  const std::string& text() const { return text_; }

 private:
  using Fn = std::function<double(double, double)>;
  Fn fn_;
  std::string text_;

  struct Parser {
    const std::string& s;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& what) const {
      throw ValidationError("expression", what + " at position " + std::to_string(pos) + " in '" + s + "'");
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

    Fn expr() {
      Fn lhs = term();
      for (;;) {
        if (eat('+')) {
          Fn r = term();
          lhs = [l = lhs, r](double x, double y) { return l(x, y) + r(x, y); };
        } else if (eat('-')) {
          Fn r = term();
          lhs = [l = lhs, r](double x, double y) { return l(x, y) - r(x, y); };
        } else {
          return lhs;
        }
      }
    }

    Fn term() {
      Fn lhs = unary();
      for (;;) {
        if (eat('*')) {
          Fn r = unary();
          lhs = [l = lhs, r](double x, double y) { return l(x, y) * r(x, y); };
        } else if (eat('/')) {
          Fn r = unary();
          lhs = [l = lhs, r](double x, double y) { return l(x, y) / r(x, y); };
        } else {
          return lhs;
        }
      }
    }

    Fn unary() {
      if (eat('-')) {
        Fn a = unary();
        return [a](double x, double y) { return -a(x, y); };
      }
      if (eat('+')) return unary();
      return power();
    }

    Fn power() {
      Fn base = primary();
      if (eat('^')) {
        Fn ex = unary();
        return [base, ex](double x, double y) { return std::pow(base(x, y), ex(x, y)); };
      }
      return base;
    }

    Fn primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of expression");
      char c = s[pos];
      if (c == '(') {
        ++pos;
        Fn e = expr();
        if (!eat(')')) fail("missing ')'");
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) ++pos;
        if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
          std::size_t save = pos++;
          if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
          if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
          } else {
            pos = save;
          }
        }
        double v = parse_double(s.substr(start, pos - start), "expression");
        return [v](double, double) { return v; };
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        std::string id = s.substr(start, pos - start);
        if (id == "x") return [](double x, double) { return x; };
        if (id == "y") return [](double, double y) { return y; };
        if (id == "pi") return [](double, double) { return std::numbers::pi; };
        double (*f)(double) = nullptr;
        if (id == "exp") f = [](double a) { return std::exp(a); };
        else if (id == "sin") f = [](double a) { return std::sin(a); };
        else if (id == "cos") f = [](double a) { return std::cos(a); };
        else if (id == "sqrt") f = [](double a) { return std::sqrt(a); };
        else if (id == "log") f = [](double a) { return std::log(a); };
        else {
          pos = start;
          fail("unknown identifier '" + id + "'");
        }
        if (!eat('(')) fail("expected '(' after " + id);
        Fn a = expr();
        if (!eat(')')) fail("missing ')'");
        return [f, a](double x, double y) { return f(a(x, y)); };
      }
      fail("unexpected '" + std::string(1, c) + "'");
    }
  };
};

// Samples an expression on the grid; non-finite values at domain nodes are errors.
inline ScalarField sample_expression(const GridPtr& g, const std::string& text) {
  auto e = Expression::parse(text);
  ScalarField f = sample(g, [&](double x, double y) { return e(x, y); });
  const Grid& G = *g;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k) && !std::isfinite(f[k]))
      throw ValidationError("expression", "'" + text + "' is not finite at " + G.describe(k));
  return f;
}

}  // namespace ssl
