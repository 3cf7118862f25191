#include <gtest/gtest.h>

#include <random>

#include "ssl/shell_energy.hpp"
#include "support.hpp"

using namespace ssl;

namespace {

GridPtr unit_square(int n) { return Grid::square(n); }

Mat3 rotation(double a, double b, double c) {
  return (Eigen::AngleAxisd(a, Vec3::UnitZ()) * Eigen::AngleAxisd(b, Vec3::UnitY()) *
          Eigen::AngleAxisd(c, Vec3::UnitX()))
      .toRotationMatrix();
}

Deformation3 map_samples(const Deformation3& d, auto fn) {
  Deformation3 out = d;
  for (auto& s : out.samples)
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.grid().inside(k)) s[k] = fn(s[k], s.grid().point(k));
  return out;
}

}  // namespace

TEST(ShellEnergy, ThicknessRuleIsGaussLegendre) {
  for (int nq : {3, 5, 7}) {
    auto r = ThicknessRule::gauss(nq);
    ASSERT_EQ(int(r.t.size()), nq);
    double s0 = 0, s2 = 0, s4 = 0, s_odd = 0;
    for (int q = 0; q < nq; ++q) {
      s0 += r.w[q];
      s2 += r.w[q] * r.t[q] * r.t[q];
      s4 += r.w[q] * std::pow(r.t[q], 4);
      s_odd += r.w[q] * std::pow(r.t[q], 3);
      EXPECT_NEAR(r.t[q], -r.t[nq - 1 - q], 1e-15);
    }
    EXPECT_NEAR(s0, 1.0, 1e-14);
    EXPECT_NEAR(s2, 1.0 / 12.0, 1e-15);
    EXPECT_NEAR(s4, 1.0 / 80.0, 1e-15);
    EXPECT_NEAR(s_odd, 0.0, 1e-16);
    // D differentiates polynomials of degree < nq exactly
    for (int q = 0; q < nq; ++q) {
      double d = 0;
      for (int j = 0; j < nq; ++j) d += r.D(q, j) * (std::pow(r.t[j], nq - 1) + 2 * r.t[j]);
      EXPECT_NEAR(d, (nq - 1) * std::pow(r.t[q], nq - 2) + 2, 1e-12);
    }
  }
}

TEST(ShellEnergy, ParamsValidation) {
  ShellParams p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_DOUBLE_EQ(p.force_exponent(), 2.5);
  p.alpha_prime = 3.0;
  EXPECT_DOUBLE_EQ(p.force_exponent(), 3.0);
  for (auto bad : {ShellParams{0.0}, ShellParams{0.1, 1.0}, ShellParams{0.1, 0.5, {}, {}, 4},
                   ShellParams{0.1, 0.5, {}, Lame{-1, 1}}})
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(ShellEnergy, NormalOfLinearSurface) {
  auto g = unit_square(17);
  ShellParams p{0.01, 0.5};
  auto v0 = sample(g, [](double x, double y) { return 0.7 * x - 1.3 * y + 2; });
  auto e = shell_embedding(v0, p);
  double eps = std::pow(0.01, 0.5);
  Vec3 want = Vec3(-eps * 0.7, eps * 1.3, 1.0) / std::sqrt(1 + eps * eps * (0.49 + 1.69));
  for (std::size_t k = 0; k < e.n.size(); ++k) EXPECT_LE((e.n[k] - want).norm(), 1e-14);
}

TEST(ShellEnergy, NormalIsUnitAndBIsGradient) {
  auto g = Grid::disk(33);
  ShellParams p{0.05, 0.5};
  std::mt19937_64 rng(4);
  testing_support::RandomSmooth f(rng);
  auto v0 = sample(g, f);
  auto e = shell_embedding(v0, p);
  for (std::size_t k = 0; k < e.n.size(); ++k)
    if (g->inside(k)) EXPECT_NEAR(e.n[k].norm(), 1.0, 1e-14);
  // the third column of b is the normal, tangential columns are FD derivatives of phi_tilde
  auto J = jacobian(e.phi_tilde.samples[1], DiffOrder::fourth);
  for (std::size_t k = 0; k < e.n.size(); ++k) {
    if (!g->inside(k)) continue;
    EXPECT_EQ((e.b[1][k].col(2) - e.n[k]).norm(), 0.0);
    EXPECT_LE((e.b[1][k].leftCols<2>() - J[k]).norm(), 1e-15);
    EXPECT_GT(e.det_b[1][k], 0.0);
  }
}

TEST(ShellEnergy, DetBApproachesOne) {
  auto g = unit_square(33);
  auto v0 = testing_support::quadratic_v0(g);
  std::vector<double> hs = {1e-1, 1e-2, 1e-3}, dev;
  for (double h : hs) {
    auto e = shell_embedding(v0, ShellParams{h, 0.5});
    double m = 0;
    for (auto& d : e.det_b) m = std::max(m, max_abs(d - ScalarField(g, 1.0)));
    dev.push_back(m);
  }
  for (std::size_t i = 1; i < hs.size(); ++i) {
    double slope = std::log(dev[i - 1] / dev[i]) / std::log(hs[i - 1] / hs[i]);
    EXPECT_GE(slope, 0.5);
  }
}

TEST(ShellEnergy, ThickCurvedShellRejected) {
  auto g = unit_square(17);
  auto v0 = sample(g, [](double x, double y) { return 40 * (x * x + y * y); });
  try {
    shell_embedding(v0, ShellParams{0.9, 0.9});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), "shell_geometry");
  }
}

TEST(ShellEnergy, UndeformedAndRigidShellsCarryNoEnergy) {
  auto g = unit_square(33);
  ShellParams p{1e-2, 0.5};
  auto v0 = sample(g, [](double x, double y) { return 0.5 * (x * x + y * y) + 0.2 * std::sin(x * y); });
  auto e = shell_embedding(v0, p);
  EXPECT_LE(energy_3d(e.phi_tilde, e, p), 1e-24);
  Mat3 R = rotation(0.4, -1.1, 2.0);
  Vec3 c(1, -2, 0.5);
  auto moved = map_samples(e.phi_tilde, [&](const Vec3& y, const Vec2&) { return Vec3(R * y + c); });
  EXPECT_LE(energy_3d(moved, e, p), 1e-24);
}

TEST(ShellEnergy, FrameIndifference) {
  auto g = unit_square(33);
  ShellParams p{1e-2, 0.5};
  auto v0 = testing_support::quadratic_v0(g);
  auto e = shell_embedding(v0, p);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    testing_support::RandomSmooth a(rng, 0.05), b(rng, 0.05);
    auto v = map_samples(e.phi_tilde, [&](const Vec3& y, const Vec2& x) {
      return Vec3(y + Vec3(a(x.x(), x.y()), b(x.x(), x.y()), a(x.y(), x.x()) * y.z()));
    });
    double I = energy_3d(v, e, p);
    ASSERT_GT(I, 0.0);
    Mat3 R = rotation(trial + 0.3, 0.7 * trial, -0.2 * trial);
    auto w = map_samples(v, [&](const Vec3& y, const Vec2&) { return Vec3(R * y + Vec3(trial, 2, -1)); });
    EXPECT_LE(std::abs(energy_3d(w, e, p) - I), 1e-10 * I);
    // nondegeneracy with c = mu / 4 for St Venant-Kirchhoff
    EXPECT_GE(I, 0.25 * p.lame.mu * rigidity_defect(v, e, p));
  }
}

TEST(ShellEnergy, UniformStretchOfFlatPlate) {
  auto g = unit_square(17);
  ShellParams p{1e-2, 0.5, {}, Lame{1.3, 0.7}};
  auto e = shell_embedding(ScalarField(g), p);
  const double s = 0.01;
  auto v = map_samples(e.phi_tilde, [&](const Vec3& y, const Vec2&) { return Vec3((1 + s) * y); });
  double eps = 0.5 * ((1 + s) * (1 + s) - 1);
  double W = 1.3 * 3 * eps * eps + 0.5 * 0.7 * 9 * eps * eps;
  EXPECT_NEAR(energy_3d(v, e, p), W, 1e-13 * W);
}

TEST(ShellEnergy, LoadsAndTotalEnergy) {
  auto g = unit_square(33);
  ShellParams p{1e-2, 0.5};
  auto v0 = ScalarField(g);
  auto e = shell_embedding(v0, p);
  // unbalanced load
  auto bad = sample(g, [](double x, double) { return x - 0.5; });
  try {
    total_energy(e.phi_tilde, v0, bad, p);
    FAIL();
  } catch (const ValidationError& err) {
    EXPECT_EQ(err.code(), "load_moments");
    EXPECT_NE(std::string(err.what()).find("int x f"), std::string::npos);
  }
  auto f = normalize_load(sample(g, [](double x, double y) { return x * x - 0.5 + std::sin(3 * y); }));
  auto m = load_moments(f);
  EXPECT_TRUE(m.balanced());
  EXPECT_GT(m.l2, 0.1);
  // f = 0 gives J = I
  auto v = map_samples(e.phi_tilde, [&](const Vec3& y, const Vec2& x) { return Vec3(y + Vec3(0, 0, 0.01 * x.x() * x.x() * x.y())); });
  double I = energy_3d(v, e, p);
  EXPECT_EQ(total_energy(v, v0, ScalarField(g), p), I);
  // flat plate, det b = 1: load term is h^alpha' int f g with v3 = x3 + g
  auto parts = total_energy_parts(v, e, f, p);
  double want = std::pow(p.h, 2.5) * integrate(zip_field(f, sample(g, [](double x, double y) { return 0.01 * x * x * y; }),
                                                          [](double a, double b) { return a * b; }));
  EXPECT_NEAR(parts.load, want, 1e-14 * std::abs(want) + 1e-22);
  EXPECT_DOUBLE_EQ(parts.elastic, I);
}

TEST(ShellEnergy, KirchhoffLimitExamples) {
  auto g = unit_square(33);
  auto v0 = testing_support::quadratic_v0(g), v = testing_support::quadratic_v(g);
  Lame L;
  ScalarField zero(g);
  EXPECT_NEAR(limit_kirchhoff(v0, v0, zero, L), 0.0, 1e-14);
  // (1/24) Q2(diag(1, -1/2)) with Q2 = 2|G|^2 + 2/3 tr^2 = 8/3
  EXPECT_NEAR(limit_kirchhoff(v, v0, zero, L), 1.0 / 9.0, 1e-12);
  auto f = normalize_load(sample(g, [](double x, double y) { return std::cos(2 * x + y); }));
  EXPECT_NEAR(limit_kirchhoff(v, v0, f, L), 1.0 / 9.0 - load_work(v, f), 1e-14);
  // quadratic in v - v0
  auto dv = sample(g, [](double x, double y) { return 0.1 * std::sin(2 * x) * y * y; });
  double b1 = bending_energy(v0 + dv, v0, L), b3 = bending_energy(v0 + 3.0 * dv, v0, L);
  EXPECT_NEAR(b3, 9 * b1, 1e-12 * b3);
  EXPECT_THROW(limit_kirchhoff(v, v0, ScalarField(Grid::square(17)), L), GridMismatch);
}

TEST(ShellEnergy, VonKarmanLimitExamples) {
  auto g = unit_square(33);
  auto v0 = testing_support::quadratic_v0(g), v = testing_support::quadratic_v(g);
  Lame L;
  ScalarField zero(g);
  EXPECT_NEAR(limit_vonkarman(VectorField2(g), v0, v0, zero, L), 0.0, 1e-14);
  // sym grad w = (grad v0 (x) grad v0 - grad v (x) grad v) / 2 for w = (-x^3/2, y^3/8)
  auto w = sample(g, [](double x, double y) { return Vec2(-0.5 * x * x * x, y * y * y / 8); });
  EXPECT_NEAR(limit_vonkarman(w, v, v0, zero, L, DiffOrder::fourth), 1.0 / 9.0, 1e-12);
  EXPECT_NEAR(stretching_energy(w, v, v0, L, DiffOrder::fourth), 0.0, 1e-24);
  auto wx = sample(g, [](double x, double) { return Vec2(x, 0); });
  EXPECT_NEAR(limit_vonkarman(wx, v0, v0, zero, L), 0.5 * (8.0 / 3.0), 1e-12);
}

TEST(ShellEnergy, ConstraintCheck) {
  auto g = unit_square(33);
  auto v0 = testing_support::quadratic_v0(g);
  EXPECT_LE(check_constraint(v0, v0).c0, 1e-12);
  EXPECT_LE(check_constraint(testing_support::quadratic_v(g), v0).c0, 1e-12);
  auto v = sample(g, [](double x, double y) { return 0.5 * (x * x + y * y) + 0.1 * x * x * x; });
  auto c = check_constraint(v, v0);
  // det diag(1 + 0.6 x, 1) - 1 = 0.6 x
  for (std::size_t k = 0; k < c.residual.size(); ++k) EXPECT_NEAR(c.residual[k], 0.6 * g->point(k).x(), 1e-10);
  EXPECT_NEAR(c.l2, 0.6 / std::sqrt(3.0), 1e-3);
}

TEST(ShellEnergy, Def3dRoundTrip) {
  auto g = Grid::disk(17);
  ShellParams p{0.1, 0.5};
  auto e = shell_embedding(sample(g, [](double x, double y) { return std::exp(x) * std::cos(y) / 3; }), p);
  std::string s = def3d_string(e.phi_tilde);
  std::istringstream is(s);
  auto back = read_def3d(is);
  ASSERT_EQ(back.nq(), p.nq);
  ASSERT_TRUE(back.grid().same_as(*g));
  for (int q = 0; q < p.nq; ++q)
    for (std::size_t k = 0; k < g->size(); ++k) EXPECT_EQ(back.samples[q][k], e.phi_tilde.samples[q][k]);
  EXPECT_EQ(def3d_string(back), s);
  std::istringstream bad("DEF3D 3 3\n");
  EXPECT_THROW(read_def3d(bad), ValidationError);
}
