#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ssl/convexity.hpp"
#include "ssl/monge_ampere.hpp"
#include "support.hpp"

using namespace ssl;

namespace {

std::vector<double> envelope_oracle(const ScalarField& u) {
  const Grid& G = u.grid();
  std::vector<double> x, y, z;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) {
      x.push_back(G.point(k).x());
      y.push_back(G.point(k).y());
      z.push_back(u[k]);
    }
  return oracles::envelope_by_triangles(x, y, z);
}

std::vector<double> domain_values(const ScalarField& u) {
  std::vector<double> v;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (u.grid().inside(k)) v.push_back(u[k]);
  return v;
}

// Smallest second difference of f along the four lattice directions.
double min_second_difference(const ScalarField& f) {
  const Grid& G = f.grid();
  const int dirs[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  double m = std::numeric_limits<double>::infinity();
  for (int j = 0; j < G.ny(); ++j)
    for (int i = 0; i < G.nx(); ++i)
      for (auto& d : dirs) {
        if (!G.inside(i, j) || !G.inside(i - d[0], j - d[1]) || !G.inside(i + d[0], j + d[1])) continue;
        m = std::min(m, f.at(i - d[0], j - d[1]) - 2 * f.at(i, j) + f.at(i + d[0], j + d[1]));
      }
  return m;
}

}  // namespace

TEST(Convexity, Orient3dSignsAgreeWithDeterminant) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> I(0, 40);
  std::uniform_real_distribution<double> Z(-1, 1);
  int checked = 0;
  for (int t = 0; t < 2000; ++t) {
    detail::HullPoint p[4];
    for (auto& q : p) q = {I(rng), I(rng), Z(rng)};
    double d = detail::orient3d_approx(p[0], p[1], p[2], p[3]);
    if (std::abs(d) < 1e-6) continue;
    EXPECT_EQ(detail::orient3d(p[0], p[1], p[2], p[3]), d > 0 ? 1 : -1);
    ++checked;
  }
  EXPECT_GT(checked, 1500);
  // exactly representable plane z = 0.5 x + 0.25 y + 1
  auto pl = [](int x, int y) { return detail::HullPoint{x, y, 0.5 * x + 0.25 * y + 1}; };
  EXPECT_EQ(detail::orient3d(pl(0, 0), pl(7, 1), pl(2, 9), pl(13, 5)), 0);
  // a perturbation below rounding of the naive formula is still detected
  auto q = pl(13, 5);
  q.z = std::nextafter(q.z, 100.0);
  EXPECT_NE(detail::orient3d(pl(0, 0), pl(7, 1), pl(2, 9), q), 0);
}

TEST(Convexity, SverakExampleValues) {
  EXPECT_DOUBLE_EQ(Sverak::value(0.5, 0), 0.25);
  for (double y : {-0.9, -0.3, 0.0, 0.4, 0.8}) {
    EXPECT_EQ(Sverak::grad(0.0, y).norm(), 0.0);
    EXPECT_EQ(Sverak::grad(-0.0, y).norm(), 0.0);
  }
  EXPECT_NEAR(Sverak::det_hessian(0.5, 0), 0.5, 1e-15);
  EXPECT_NEAR(Sverak::hessian(0.5, 0).det(), 0.5, 1e-15);
  // analytic derivatives against central differences of the value
  for (auto [x, y] : {std::pair{0.3, 0.2}, {-0.4, 0.5}, {0.7, -0.6}}) {
    const double e = 1e-5;
    Vec2 g = Sverak::grad(x, y);
    EXPECT_NEAR(g.x(), (Sverak::value(x + e, y) - Sverak::value(x - e, y)) / (2 * e), 1e-8);
    EXPECT_NEAR(g.y(), (Sverak::value(x, y + e) - Sverak::value(x, y - e)) / (2 * e), 1e-8);
    Sym2 H = Sverak::hessian(x, y);
    EXPECT_NEAR(H.xx, (Sverak::grad(x + e, y).x() - Sverak::grad(x - e, y).x()) / (2 * e), 1e-7);
    EXPECT_NEAR(H.xy, (Sverak::grad(x + e, y).y() - Sverak::grad(x - e, y).y()) / (2 * e), 1e-7);
    EXPECT_NEAR(H.yy, (Sverak::grad(x, y + e).y() - Sverak::grad(x, y - e).y()) / (2 * e), 1e-7);
    EXPECT_NEAR(H.det(), Sverak::det_hessian(x, y), 1e-12);
  }
  auto u = sverak_example(Grid::disk(65));
  EXPECT_NEAR(u.at(48, 32), 0.25, 1e-15);
}

TEST(Convexity, ClassifiesQuadratics) {
  auto g = Grid::square(17);
  auto r = classify_convexity(testing_support::quadratic_v0(g));
  EXPECT_EQ(r.verdict, ConvexityVerdict::convex);
  EXPECT_EQ(r.n_convex, g->domain_count());
  auto s = classify_convexity(-1.0 * testing_support::quadratic_v0(g));
  EXPECT_EQ(s.verdict, ConvexityVerdict::concave);
  EXPECT_EQ(s.n_concave, g->domain_count());
  auto flat = classify_convexity(ScalarField(g, 2.0));
  EXPECT_EQ(flat.verdict, ConvexityVerdict::indeterminate);
  EXPECT_EQ(flat.n_singular, g->domain_count());
}

TEST(Convexity, SverakIsMixed) {
  auto g = Grid::disk(65);
  auto u = sverak_example(g);
  auto r = classify_convexity(u);
  EXPECT_EQ(r.verdict, ConvexityVerdict::mixed);
  const Grid& G = *g;
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Vec2 p = G.point(k);
    if (std::abs(p.y()) > 0.8) continue;
    if (p.x() > 0.1) EXPECT_EQ(r.labels[k], ConvexityLabel::convex) << G.describe(k);
    if (p.x() < -0.1) EXPECT_EQ(r.labels[k], ConvexityLabel::concave) << G.describe(k);
    if (p.x() == 0.0) EXPECT_TRUE(r.singular[k]) << G.describe(k);
  }
}

TEST(Convexity, NegationSwapsLabels) {
  std::mt19937_64 rng(11);
  auto g = Grid::disk(33);
  for (int t = 0; t < 10; ++t) {
    testing_support::RandomSmooth f(rng);
    auto u = sample(g, [&](double x, double y) { return f(x, y) + 0.3 * (x * x - y * y); });
    auto a = classify_convexity(u);
    auto b = classify_convexity(-1.0 * u);
    EXPECT_EQ(a.eps, b.eps);
    EXPECT_EQ(a.n_convex, b.n_concave);
    for (std::size_t k = 0; k < u.size(); ++k) {
      if (!g->inside(k)) continue;
      auto la = a.labels[k], lb = b.labels[k];
      if (la == ConvexityLabel::convex) EXPECT_EQ(lb, ConvexityLabel::concave);
      else if (la == ConvexityLabel::concave) EXPECT_EQ(lb, ConvexityLabel::convex);
      else EXPECT_EQ(lb, ConvexityLabel::indeterminate);
    }
    if (a.verdict == ConvexityVerdict::convex) EXPECT_EQ(a.n_concave, 0u);
  }
}

TEST(Convexity, ConvexFieldIsFixed) {
  auto g = Grid::disk(33);
  auto u = sample(g, [](double x, double y) { return std::exp(x) + x * x + 0.5 * y * y + 0.2 * x * y; });
  auto c = convexify(u);
  for (std::size_t k = 0; k < u.size(); ++k)
    if (g->inside(k)) EXPECT_NEAR(c[k], u[k], 1e-13);
  // affine data is coplanar
  auto a = sample(g, [](double x, double y) { return 0.5 * x - 0.25 * y + 1; });
  auto ca = convexify(a);
  for (std::size_t k = 0; k < u.size(); ++k)
    if (g->inside(k)) EXPECT_EQ(ca[k], a[k]);
}

TEST(Convexity, CapIsFlattenedToBoundaryEnvelope) {
  auto g = Grid::disk(15);
  auto u = sample(g, [](double x, double y) { return 1 - x * x - y * y; });
  auto c = convexify(u);
  auto want = envelope_oracle(u);
  auto got = domain_values(c);
  ASSERT_EQ(want.size(), got.size());
  double bmax = 0;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (g->boundary(k)) bmax = std::max(bmax, u[k]);
  for (std::size_t n = 0; n < got.size(); ++n) {
    EXPECT_NEAR(got[n], want[n], 1e-12);
    EXPECT_GE(got[n], -1e-12);
    EXPECT_LE(got[n], bmax + 1e-12);
  }
}

TEST(Convexity, MatchesTriangleOracleOnRandomFields) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  std::vector<GridPtr> grids = {Grid::square(9), Grid::rectangle(10, 7, Box{0, 2, -1, 0.5}), Grid::disk(11)};
  for (auto& g : grids)
    for (int t = 0; t < 4; ++t) {
      ScalarField u(g);
      for (std::size_t k = 0; k < u.size(); ++k)
        if (g->inside(k)) u[k] = t % 2 ? U(rng) : std::round(4 * U(rng)) / 4;  // ties when quantised
      auto got = domain_values(convexify(u));
      auto want = envelope_oracle(u);
      for (std::size_t n = 0; n < got.size(); ++n) EXPECT_NEAR(got[n], want[n], 1e-12);
    }
}

TEST(Convexity, EnvelopeProperties) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1, 1);
  auto g = Grid::disk(41);
  for (int t = 0; t < 5; ++t) {
    testing_support::RandomSmooth f(rng);
    ScalarField u = sample(g, [&](double x, double y) { return f(x, y) + 0.05 * U(rng); });
    ScalarField w = sample(g, [&](double, double) { return std::abs(U(rng)); }) + u;
    auto cu = convexify(u), cw = convexify(w), ccu = convexify(cu);
    for (std::size_t k = 0; k < u.size(); ++k) {
      if (!g->inside(k)) continue;
      EXPECT_LE(cu[k], u[k]);
      EXPECT_LE(cu[k], cw[k] + 1e-14);
      EXPECT_NEAR(ccu[k], cu[k], 1e-10);
    }
    EXPECT_GE(min_second_difference(cu), -1e-12);
  }
}

TEST(Convexity, SverakSupportingPlane) {
  auto g = Grid::disk(33);
  auto u = sverak_example(g);
  const Grid& G = *g;
  std::size_t a = G.index(24, 16), b = G.index(8, 16);
  ASSERT_NEAR(G.point(a).x(), 0.5, 1e-15);
  // tangent plane at (0.5, 0) is T = x - 1/4; check it supports u at every node
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) EXPECT_LE(G.point(k).x() - 0.25, u[k] + 1e-15);
  auto c = convexify(u);
  EXPECT_NEAR(c[a], u[a], 1e-14);
  EXPECT_TRUE(has_supporting_plane(u, a));
  // in the concave half no affine minorant touches
  EXPECT_LT(c[b], u[b] - 0.1);
  EXPECT_FALSE(has_supporting_plane(u, b));
}

TEST(Convexity, IdentityOscillation) {
  auto g = Grid::rectangle(129, 129, Box{-1, 1, -1, 1});
  auto v = sample(g, [](double x, double y) { return Vec2(x, y); });
  for (double delta : {0.05, 0.1}) {
    double R = std::exp(1.0) * delta;
    auto r = oscillation_bound(v, {0.1, -0.05}, delta, R);
    EXPECT_NEAR(r.osc, 2 * delta, 1e-12);
    // |Dv|^2 = 2 over the disk
    double exact = std::sqrt(2 * std::numbers::pi) * std::sqrt(2 * std::numbers::pi * R * R);
    EXPECT_NEAR(r.bound, exact, 2e-3 * exact);
    EXPECT_FALSE(r.violated);
    EXPECT_GE(r.bound, r.osc);
  }
}

TEST(Convexity, PerturbedGradientOscillation) {
  auto g = Grid::rectangle(129, 129, Box{-1, 1, -1, 1});
  // D v = Id + 0.3 J + small: det > 0
  auto v = sample(g, [](double x, double y) {
    return Vec2(x - 0.3 * y + 0.05 * std::sin(3 * y), y + 0.3 * x + 0.05 * std::sin(2 * x));
  });
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> C(-0.3, 0.3), D(0.02, 0.1), M(1.5, 6.0);
  for (int t = 0; t < 10; ++t) {
    Vec2 x(C(rng), C(rng));
    double delta = D(rng), R = std::min(M(rng) * delta, 0.6);
    auto r = oscillation_bound(v, x, delta, R);
    EXPECT_FALSE(r.violated) << r.osc << " > " << r.bound;
    EXPECT_GT(r.osc, 0.0);
  }
}

TEST(Convexity, OscillationAttainedOnSphere) {
  auto g = Grid::rectangle(129, 129, Box{-1, 1, -1, 1});
  // gradient of the convex u = |x|^2/2 + x^4/10 + y^4/20 + xy/5
  auto v = sample(g, [](double x, double y) {
    return Vec2(x + 0.4 * x * x * x + 0.2 * y, y + 0.2 * y * y * y + 0.2 * x);
  });
  for (double rho : {0.1, 0.25}) {
    auto r = oscillation_bound(v, {0.05, 0.1}, rho, 2 * rho, 2048);
    EXPECT_GE(r.osc, r.osc_sphere);
    EXPECT_LE(r.osc - r.osc_sphere, 1e-6 * rho);
  }
}

TEST(Convexity, OscillationGeometryErrors) {
  auto g = Grid::disk(65);
  auto v = sample(g, [](double x, double y) { return Vec2(x, y); });
  EXPECT_THROW(oscillation_bound(v, {0.0, 0.0}, 0.1, 0.1), ValidationError);
  EXPECT_THROW(oscillation_bound(v, {0.0, 0.0}, 0.1, 1.0), ValidationError);
  EXPECT_THROW(oscillation_bound(v, {0.8, 0.0}, 0.05, 0.3), ValidationError);
  auto fold = sample(g, [](double x, double y) { return Vec2(x * x, y); });
  try {
    oscillation_bound(fold, {0.0, 0.0}, 0.1, 0.3);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), "geometry");
  }
}

TEST(Convexity, RandomAdmissibleMapsNeverViolate) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1, 1);
  auto g = Grid::rectangle(65, 65, Box{-1, 1, -1, 1});
  int used = 0;
  for (int t = 0; t < 20; ++t) {
    double a = 0.3 * U(rng), b = 0.3 * U(rng), c = 0.15 * U(rng), d = 0.15 * U(rng);
    auto v = sample(g, [&](double x, double y) {
      return Vec2(x + a * y + c * std::sin(2 * y + 1), y + b * x + d * std::cos(2 * x - y));
    });
    try {
      auto r = oscillation_bound(v, {0.2 * U(rng), 0.2 * U(rng)}, 0.05 + 0.05 * std::abs(U(rng)), 0.6);
      EXPECT_FALSE(r.violated);
      ++used;
    } catch (const ValidationError&) {
      // map not orientation preserving; not admissible
    }
  }
  EXPECT_GE(used, 10);
}

TEST(Convexity, MongeAmpereSolutionsAreConvex) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> U(-1, 1);
  auto g = Grid::square(33);
  for (int t = 0; t < 5; ++t) {
    double a = 0.3 * U(rng), b = 0.3 * U(rng);
    MAProblem p{sample(g, [&](double x, double y) { return 1 + 0.5 * (1 + std::sin(3 * a * x + 2 * b * y)); }),
                sample(g, [&](double x, double y) { return 0.5 * (x * x + y * y) + a * x * y; }), std::nullopt};
    auto res = solve_ma(p);
    EXPECT_EQ(classify_convexity(res.u).verdict, ConvexityVerdict::convex);
  }
}
