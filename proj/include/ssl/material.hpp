#pragma once

#include <cmath>
#include <concepts>
#include <string>

#include "ssl/error.hpp"
#include "ssl/fields.hpp"

namespace ssl {

struct Lame {
  double mu = 1.0;
  double lambda = 1.0;

  void validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("lame", "mu must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lame", "lambda must be non-negative");
  }
};

// Zero-padded 3x3 embedding G*.
inline Mat3 embed(const Sym2& G) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = G.xx;
  m(0, 1) = m(1, 0) = G.xy;
  m(1, 1) = G.yy;
  return m;
}

inline Mat3 sym(const Mat3& F) { return 0.5 * (F + F.transpose()); }

// sym(d (x) e3)
inline Mat3 sym_with_e3(const Vec3& d) {
  Mat3 m = Mat3::Zero();
  m.col(2) += 0.5 * d;
  m.row(2) += 0.5 * d.transpose();
  return m;
}

template <class M>
concept ElasticMaterial = requires(const M& m, const Mat3& F, const Sym2& G) {
  { m.energy(F) } -> std::convertible_to<double>;
  { m.q3(F) } -> std::convertible_to<double>;
  { m.q2(G) } -> std::convertible_to<double>;
  { m.warping(G) } -> std::convertible_to<Vec3>;
};

// W(F) = mu |E|^2 + lambda/2 (tr E)^2 with E = (F^T F - Id)/2.
inline double energy_density(const Mat3& F, const Lame& L) {
  Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
  double tr = E.trace();
  return L.mu * E.squaredNorm() + 0.5 * L.lambda * tr * tr;
}

inline double q3(const Mat3& F, const Lame& L) {
  double tr = F.trace();
  return 2.0 * L.mu * sym(F).squaredNorm() + L.lambda * tr * tr;
}

inline double q2(const Sym2& G, const Lame& L) {
  double tr = G.trace();
  return 2.0 * L.mu * G.norm2() + 2.0 * L.mu * L.lambda / (2.0 * L.mu + L.lambda) * tr * tr;
}

inline double q2(const Mat2& G, const Lame& L) {
  double asym = std::abs(G(0, 1) - G(1, 0));
  if (asym > 1e-12 * std::max(1.0, G.norm()))
    throw ValidationError("not_symmetric", "q2 requires a symmetric 2x2 matrix");
  return q2(Sym2::from(G), L);
}

// d with Q3(G* + sym(d (x) e3)) = Q2(G).
inline Vec3 optimal_warping(const Sym2& G, const Lame& L) {
  return Vec3(0.0, 0.0, -L.lambda * G.trace() / (2.0 * L.mu + L.lambda));
}

// Isotropic St Venant-Kirchhoff material.
struct SvkMaterial {
  Lame lame;
  double energy(const Mat3& F) const { return energy_density(F, lame); }
  double q3(const Mat3& F) const { return ssl::q3(F, lame); }
  double q2(const Sym2& G) const { return ssl::q2(G, lame); }
  Vec3 warping(const Sym2& G) const { return optimal_warping(G, lame); }
};

static_assert(ElasticMaterial<SvkMaterial>);

}  // namespace ssl
