#pragma once

#include <cmath>
#include <map>
#include <random>
#include <utility>

#include "ssl/fields.hpp"

namespace testing_support {

using ssl::GridPtr;
using ssl::ScalarField;

// Exact integration of polynomials sum c_pq x^p y^q over a box.
struct Poly {
  std::map<std::pair<int, int>, double> c;

  Poly& add(int p, int q, double v) {
    c[{p, q}] += v;
    return *this;
  }
  Poly operator*(const Poly& o) const {
    Poly r;
    for (auto& [a, va] : c)
      for (auto& [b, vb] : o.c) r.add(a.first + b.first, a.second + b.second, va * vb);
    return r;
  }
  Poly operator+(const Poly& o) const {
    Poly r = *this;
    for (auto& [b, vb] : o.c) r.add(b.first, b.second, vb);
    return r;
  }
  double integrate(double x0, double x1, double y0, double y1) const {
    double s = 0.0;
    for (auto& [e, v] : c)
      s += v * (std::pow(x1, e.first + 1) - std::pow(x0, e.first + 1)) / (e.first + 1) *
           (std::pow(y1, e.second + 1) - std::pow(y0, e.second + 1)) / (e.second + 1);
    return s;
  }
};

// u = sign(x) x^2 exp(y^2/2)
inline double sverak(double x, double y) { return (x >= 0 ? 1.0 : -1.0) * x * x * std::exp(0.5 * y * y); }

// Radial solution of det D^2 v = 1: v = U(|x - c|), U'(r) = sqrt(r^2 + C).
struct RadialPair {
  double C = 0.25;
  ssl::Vec2 c{-0.5, -0.5};

  double value(double x, double y) const {
    double r = std::hypot(x - c.x(), y - c.y());
    double s = std::sqrt(r * r + C);
    return 0.5 * (r * s + C * std::log(r + s));
  }
};

inline ScalarField quadratic_v0(const GridPtr& g) {
  return ssl::sample(g, [](double x, double y) { return 0.5 * (x * x + y * y); });
}
inline ScalarField quadratic_v(const GridPtr& g) {
  return ssl::sample(g, [](double x, double y) { return 0.5 * (2.0 * x * x + 0.5 * y * y); });
}

// Random smooth test function: small trigonometric combination.
struct RandomSmooth {
  double a[6];
  explicit RandomSmooth(std::mt19937_64& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (double& v : a) v = amp * U(rng);
  }
  double operator()(double x, double y) const {
    return a[0] * std::sin(1.3 * x + 0.4 * y) + a[1] * std::cos(0.7 * x - 1.1 * y) + a[2] * x * x * y +
           a[3] * std::exp(0.5 * x) * y + a[4] * x * y + a[5] * std::sin(2.0 * y);
  }
};

}  // namespace testing_support
