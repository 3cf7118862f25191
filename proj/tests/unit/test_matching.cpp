#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ssl/matching.hpp"
#include "support.hpp"

using namespace ssl;
using testing_support::RadialPair;

namespace {

constexpr DiffOrder kOrd = DiffOrder::fourth;

// Discrete Monge-Ampere solution with det D^2 v = det D^2 v0 = 1 and the radial
// solution as boundary data, so the constraint holds to solver tolerance.
ScalarField radial_v(const GridPtr& g) {
  RadialPair rp;
  auto exact = sample(g, [&](double x, double y) { return rp.value(x, y); });
  MAOptions o;
  o.order = kOrd;
  o.tol = 1e-12;
  return solve_ma({hessian_det(testing_support::quadratic_v0(g), kOrd), exact, std::nullopt}, exact, o).u;
}

// least-squares slope of log y against log x
double fitted_exponent(const std::vector<double>& x, const std::vector<double>& y) {
  double n = double(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double interior_max_abs(const ScalarField& f) {
  const Grid& G = f.grid();
  double m = 0;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.interior(k)) m = std::max(m, std::abs(f[k]));
  return m;
}

}  // namespace

TEST(Matching, PhiAtOriginIsDeterminantGap) {
  auto g = Grid::square(33);
  auto v0 = sample(g, [](double x, double y) { return std::exp(0.5 * x) + 0.7 * y * y + 0.1 * x * y; });
  auto v = radial_v(g);
  auto phi = phi_functional(0.0, ScalarField(g), v0, v, kOrd);
  auto H0 = hessian(v0, kOrd), H = hessian(v, kOrd);
  for (std::size_t k = 0; k < g->size(); ++k)
    if (g->inside(k)) EXPECT_NEAR(phi[k], H0[k].det() - H[k].det(), 1e-12) << g->describe(k);

  // constant determinants: Phi(0, 0) vanishes identically
  auto q0 = testing_support::quadratic_v0(g), q = testing_support::quadratic_v(g);
  EXPECT_LE(max_abs(phi_functional(0.0, ScalarField(g), q0, q, kOrd)), 1e-10);
}

TEST(Matching, LinearisationIsMinusCofactorContraction) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = radial_v(g);
  auto z = sample(g, [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y) * (1 + x * y); });
  auto p0 = phi_functional(0.0, ScalarField(g), v0, v, kOrd);
  auto dq = [&](double e) { return (1.0 / e) * (phi_functional(0.0, e * z, v0, v, kOrd) - p0); };
  // three-point extrapolation in eps
  double e = 1e-2;
  ScalarField d1 = dq(e), d2 = dq(e / 2), d4 = dq(e / 4);
  ScalarField lim = (1.0 / 3.0) * (8.0 * d4 - 6.0 * d2 + d1);
  auto Hv = hessian(v, kOrd), Hz = hessian(z, kOrd);
  double scale = 0, err = 0;
  for (std::size_t k = 0; k < g->size(); ++k) {
    if (!g->inside(k)) continue;
    Sym2 c = Hv[k].cof();
    double ref = -(c.xx * Hz[k].xx + 2 * c.xy * Hz[k].xy + c.yy * Hz[k].yy);
    scale = std::max(scale, std::abs(ref));
    err = std::max(err, std::abs(lim[k] - ref));
  }
  EXPECT_GT(scale, 1.0);
  EXPECT_LE(err, 1e-9 * scale);
}

TEST(Matching, ViolatedConstraintIsRejected) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = sample(g, [](double x, double y) { return 0.5 * (x * x + y * y) + x * x * x / 6.0; });
  // det D^2 v = 1 + x, so Phi(0, 0) = -x
  auto phi = phi_functional(0.0, ScalarField(g), v0, v, kOrd);
  for (std::size_t k = 0; k < g->size(); ++k)
    if (g->inside(k)) EXPECT_NEAR(phi[k], -g->point(k).x(), 1e-10);
  try {
    solve_matching_correction(0.1, v0, v);
    FAIL() << "expected constraint_violated";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), "constraint_violated");
  }
}

TEST(Matching, NonEllipticInputIsRejected) {
  auto g = Grid::square(17);
  auto saddle = sample(g, [](double x, double y) { return 0.5 * (x * x - y * y); });
  try {
    solve_matching_correction(0.1, saddle, saddle);
    FAIL() << "expected not_elliptic";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), "not_elliptic");
  }
  EXPECT_THROW(build_matching_displacement(0.0, saddle, saddle), ValidationError);
}

TEST(Matching, IdenticalFieldsNeedNoCorrection) {
  auto g = Grid::square(33);
  auto v = radial_v(g);
  auto r = build_matching_displacement(0.1, v, v);
  EXPECT_EQ(r.newton_iterations, 0);
  EXPECT_EQ(max_abs(r.z), 0.0);
  EXPECT_EQ(max_abs(r.w3), 0.0);
  EXPECT_LE(field_norm(r.w_tan, NormKind::C0), 1e-12);
  EXPECT_LE(r.isometry_residual, 1e-14);
  EXPECT_LE(r.phi_residual, 1e-12);
}

TEST(Matching, SeparableQuadraticPairIsAlreadyFlat) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g), v = testing_support::quadratic_v(g);
  for (double h : {0.1, 0.05}) {
    auto r = build_matching_displacement(h, v0, v);
    EXPECT_EQ(r.newton_iterations, 0);
    EXPECT_EQ(max_abs(r.z), 0.0);
    EXPECT_LE(r.phi_residual, 1e-10);
    EXPECT_LE(r.isometry_residual, 1e-6 * h * h);
    // phi - id = h^2 (-x^3/2, y^3/8) + O(h^4)
    for (std::size_t k = 0; k < g->size(); k += 37) {
      if (!g->inside(k)) continue;
      Vec2 p = g->point(k);
      EXPECT_NEAR(r.w_tan[k].x() - r.w_tan[g->index(g->nx() / 2, g->ny() / 2)].x(),
                  -0.5 * (std::pow(p.x(), 3) - 0.125), 0.2 * h * h + 1e-3);
    }
  }
}

TEST(Matching, RadialPairSweepOnTwoGrids) {
  const std::vector<double> hs{0.1, 0.05, 0.025};
  for (int n : {33, 65}) {
    auto g = Grid::square(n);
    auto v0 = testing_support::quadratic_v0(g);
    auto v = radial_v(g);
    Immerser im(g, kOrd);
    std::vector<double> zc, w22;
    for (double h : hs) {
      auto r = build_matching_displacement(h, v0, v, {}, &im);
      EXPECT_LE(r.phi_residual, 1e-8);
      EXPECT_LE(r.isometry_residual, 1e-6 * h * h) << "n=" << n << " h=" << h;
      for (std::size_t k = 0; k < g->size(); ++k) {
        if (g->boundary(k)) EXPECT_EQ(r.z[k], 0.0);
        if (g->inside(k)) EXPECT_EQ(r.w3[k], r.z[k] / h);
      }
      zc.push_back(max_abs(r.z));
      w22.push_back(r.w22);
    }
    for (std::size_t i = 1; i < hs.size(); ++i) EXPECT_LT(zc[i] / hs[i], zc[i - 1] / hs[i - 1]);
    EXPECT_GE(fitted_exponent(hs, zc), 1.8) << "n=" << n;
    EXPECT_LE(*std::max_element(w22.begin(), w22.end()) / *std::min_element(w22.begin(), w22.end()), 3.0);
    EXPECT_GT(zc.back(), 0.0);
  }
}

TEST(Matching, PhiAndCurvatureVanishTogether) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = radial_v(g);
  const double h = 0.1;
  auto check_identity = [&](const ScalarField& z) {
    ScalarField w = v + z;
    auto phi = phi_functional(h, z, v0, v, kOrd);
    auto kappa = gauss_curvature_shallow(v0, w, h, kOrd);
    auto g0 = gradient(v0, kOrd), gw = gradient(w, kOrd);
    for (std::size_t k = 0; k < g->size(); ++k) {
      if (!g->inside(k)) continue;
      Sym2 m = shallow_metric_at(g0[k], gw[k], h);
      Mat2 gi = m.matrix().inverse();
      double X = g0[k].dot(gi * g0[k]);
      double s = 1 - h * h * gw[k].squaredNorm();
      double scaled = kappa[k] * (1 - h * h * X) * m.det() * s * s / (h * h);
      EXPECT_NEAR(scaled, phi[k], 1e-9 * (1 + std::abs(phi[k])));
    }
    return std::pair{interior_max_abs(phi), interior_max_abs(kappa)};
  };
  // uncorrected: both clearly non-zero
  auto [p0, k0] = check_identity(ScalarField(g));
  EXPECT_GT(p0, 1e-4);
  EXPECT_GT(k0, 1e-4 * h * h);
  // corrected: both below tolerance
  auto c = solve_matching_correction(h, v0, v);
  auto [p1, k1] = check_identity(c.z);
  EXPECT_LE(p1, 1e-8);
  EXPECT_LE(k1, 2e-8 * h * h);
}

TEST(Matching, IsometryExpansionCancelsAtSecondOrder) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = radial_v(g);
  Immerser im(g, kOrd);
  std::vector<double> block;
  for (double h : {0.1, 0.05}) {
    auto r = build_matching_displacement(h, v0, v, {}, &im);
    auto J = jacobian(r.w_tan, kOrd);
    auto gw = gradient(v + r.z, kOrd), gv = gradient(v, kOrd), g0 = gradient(v0, kOrd);
    double exact = 0, second = 0;
    for (std::size_t k = 0; k < g->size(); ++k) {
      if (!g->inside(k)) continue;
      Mat2 s = 0.5 * (J[k] + J[k].transpose());
      Mat2 b = s + 0.5 * (gv[k] * gv[k].transpose() - g0[k] * g0[k].transpose());
      Mat2 e = s + 0.5 * (gw[k] * gw[k].transpose() - g0[k] * g0[k].transpose()) +
               0.5 * h * h * J[k].transpose() * J[k];
      second = std::max(second, b.cwiseAbs().maxCoeff());
      exact = std::max(exact, e.cwiseAbs().maxCoeff());
    }
    EXPECT_LE(exact, r.isometry_residual / (2 * h * h) + 1e-10);
    block.push_back(second);
  }
  // the h^2 block is itself O(h^2)
  EXPECT_LT(block[1], 0.35 * block[0]);
}

TEST(Matching, FrozenLinearisationReachesSameCorrection) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = radial_v(g);
  auto fresh = solve_matching_correction(0.1, v0, v);
  MatchOptions fo;
  fo.frozen = true;
  auto frozen = solve_matching_correction(0.1, v0, v, fo);
  EXPECT_GE(frozen.iterations, fresh.iterations);
  EXPECT_LE(max_abs(frozen.z - fresh.z), 1e-9);
  EXPECT_LE(frozen.history.back(), 1e-8);
  for (std::size_t i = 1; i < fresh.history.size(); ++i) EXPECT_LT(fresh.history[i], fresh.history[i - 1]);
}

TEST(Matching, IterationLimitIsReported) {
  auto g = Grid::square(33);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = radial_v(g);
  MatchOptions o;
  o.max_iter = 1;
  o.tol = 1e-14;
  try {
    solve_matching_correction(0.1, v0, v, o);
    FAIL() << "expected max_iterations";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.code(), "max_iterations");
    EXPECT_EQ(e.history().size(), 2u);
  }
}

TEST(Matching, ImmersionFailureCarriesCurvatureDiagnostic) {
  auto g = Grid::square(17);
  auto v0 = testing_support::quadratic_v0(g);
  auto v = radial_v(g);
  MatchOptions o;
  o.isometry_tol = 1e-16;
  try {
    build_matching_displacement(0.1, v0, v, o);
    FAIL() << "expected immersion failure";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("kappa"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("Phi"), std::string::npos);
  }
}
