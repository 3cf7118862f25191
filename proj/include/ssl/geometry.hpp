#pragma once

#include <Eigen/CholmodSupport>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssl/fields.hpp"

namespace ssl {

// Symmetric positive definite 2x2 field, validated on construction.
class Metric2Field {
 public:
  explicit Metric2Field(Sym2Field g) : g_(std::move(g)) {
    const Grid& G = g_.grid();
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      const Sym2& m = g_[k];
      if (!std::isfinite(m.xx + m.xy + m.yy))
        throw MetricError("non-finite metric at " + G.describe(k));
      if (!(m.xx > 0.0) || !(m.det() > 0.0))
        throw MetricError("metric not positive definite at " + G.describe(k));
    }
  }
  const Sym2Field& field() const { return g_; }
  const Grid& grid() const { return g_.grid(); }
  const GridPtr& grid_ptr() const { return g_.grid_ptr(); }
  const Sym2& operator[](std::size_t k) const { return g_[k]; }

 private:
  Sym2Field g_;
};

// Gam[k] holds the symmetric matrix Gamma^k_ij.
struct Christoffel {
  Sym2 Gam[2];
};
using ChristoffelField = NodeField<Christoffel>;

namespace detail {
inline double sym_at(const Sym2& m, int i, int j) {
  if (i != j) return m.xy;
  return i == 0 ? m.xx : m.yy;
}
}  // namespace detail

// Largest h keeping Id + h^2 A positive definite at every node, for A built
// from the two gradients; infinity when no bound exists.
inline double shallow_metric_h_bound(const VectorField2& g0, const VectorField2& g1) {
  const Grid& G = g0.grid();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Sym2 A = Sym2::outer(g0[k]) - Sym2::outer(g1[k]);
    double m = A.min_eig();
    if (m < 0.0) best = std::min(best, 1.0 / std::sqrt(-m));
  }
  return best;
}

inline Sym2 shallow_metric_at(const Vec2& g0, const Vec2& g1, double h) {
  return Sym2::identity() + (h * h) * (Sym2::outer(g0) - Sym2::outer(g1));
}

// 1 - h^4 |grad v0^perp . grad v1|^2 + h^2 (|grad v0|^2 - |grad v1|^2)
inline double shallow_metric_det_formula(const Vec2& g0, const Vec2& g1, double h) {
  double perp = -g0.y() * g1.x() + g0.x() * g1.y();
  double h2 = h * h;
  return 1.0 - h2 * h2 * perp * perp + h2 * (g0.squaredNorm() - g1.squaredNorm());
}

inline Metric2Field shallow_metric_from_gradients(const VectorField2& g0, const VectorField2& g1, double h) {
  require_same_grid(g0.grid(), g1.grid(), "shallow_metric");
  const Grid& G = g0.grid();
  Sym2Field g(g0.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    g[k] = shallow_metric_at(g0[k], g1[k], h);
    if (!(g[k].xx > 0.0) || !(g[k].det() > 0.0)) {
      double hb = shallow_metric_h_bound(g0, g1);
      std::ostringstream os;
      os.precision(6);
      os << "shallow metric loses positive definiteness at " << G.describe(k) << " for h = " << h
         << "; need h < " << hb;
      throw MetricError(os.str(), hb);
    }
  }
  return Metric2Field(std::move(g));
}

// g = Id + h^2 (grad v0 (x) grad v0 - grad v1 (x) grad v1)
inline Metric2Field shallow_metric(const ScalarField& v0, const ScalarField& v1, double h,
                                   DiffOrder order = DiffOrder::second) {
  require_same_grid(v0.grid(), v1.grid(), "shallow_metric");
  return shallow_metric_from_gradients(gradient(v0, order), gradient(v1, order), h);
}

// Gamma^k_ij = 1/2 g^kl (d_j g_il + d_i g_jl - d_l g_ij)
inline Christoffel christoffel_at(const Sym2& g, const Sym2 dg[2]) {
  Sym2 gi = g.inverse();
  Christoffel c;
  double low[2][2][2];  // low[l][i][j]
  for (int l = 0; l < 2; ++l)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        low[l][i][j] = 0.5 * (detail::sym_at(dg[j], i, l) + detail::sym_at(dg[i], j, l) - detail::sym_at(dg[l], i, j));
  for (int k = 0; k < 2; ++k) {
    double v[2][2];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) v[i][j] = detail::sym_at(gi, k, 0) * low[0][i][j] + detail::sym_at(gi, k, 1) * low[1][i][j];
    c.Gam[k] = Sym2{v[0][0], 0.5 * (v[0][1] + v[1][0]), v[1][1]};
  }
  return c;
}

inline ChristoffelField christoffel(const Metric2Field& g, DiffOrder order = DiffOrder::second) {
  const Grid& G = g.grid();
  auto ops = diff_operators(g.grid_ptr(), order);
  ops->require_support();
  ScalarField c[3] = {map_field(g.field(), [](const Sym2& m) { return m.xx; }),
                      map_field(g.field(), [](const Sym2& m) { return m.xy; }),
                      map_field(g.field(), [](const Sym2& m) { return m.yy; })};
  ScalarField d[2][3];
  for (int e = 0; e < 3; ++e) {
    d[0][e] = apply(ops->d1, c[e]);
    d[1][e] = apply(ops->d2, c[e]);
  }
  ChristoffelField out(g.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Sym2 dg[2] = {Sym2{d[0][0][k], d[0][1][k], d[0][2][k]}, Sym2{d[1][0][k], d[1][1][k], d[1][2][k]}};
    out[k] = christoffel_at(g[k], dg);
  }
  return out;
}

// For the shallow metric the lowered symbols reduce to
// Gamma_{l,ij} = h^2 (v0_ij v0_l - v1_ij v1_l).
template <class S>
void shallow_christoffel_at(double h, const S g0[2], const S H0[3], const S g1[2], const S H1[3], const S gi[3],
                            S out[2][3]) {
  const double h2 = h * h;
  S low[2][3];
  for (int l = 0; l < 2; ++l)
    for (int e = 0; e < 3; ++e) low[l][e] = h2 * (H0[e] * g0[l] - H1[e] * g1[l]);
  for (int e = 0; e < 3; ++e) {
    out[0][e] = gi[0] * low[0][e] + gi[1] * low[1][e];
    out[1][e] = gi[1] * low[0][e] + gi[2] * low[1][e];
  }
}

inline ChristoffelField christoffel_shallow(const ScalarField& v0, const ScalarField& v1, double h,
                                            DiffOrder order = DiffOrder::second) {
  require_same_grid(v0.grid(), v1.grid(), "christoffel_shallow");
  auto J0 = jets(v0, order), J1 = jets(v1, order);
  const Grid& G = v0.grid();
  ChristoffelField out(v0.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Sym2 g = shallow_metric_at(J0[k].g, J1[k].g, h);
    if (!(g.det() > 0.0)) throw MetricError("singular metric at " + G.describe(k));
    Sym2 gi = g.inverse();
    double a0[2] = {J0[k].g.x(), J0[k].g.y()}, a1[2] = {J1[k].g.x(), J1[k].g.y()};
    double H0[3] = {J0[k].H.xx, J0[k].H.xy, J0[k].H.yy}, H1[3] = {J1[k].H.xx, J1[k].H.xy, J1[k].H.yy};
    double gis[3] = {gi.xx, gi.xy, gi.yy};
    double o[2][3];
    shallow_christoffel_at(h, a0, H0, a1, H1, gis, o);
    out[k].Gam[0] = Sym2{o[0][0], o[0][1], o[0][2]};
    out[k].Gam[1] = Sym2{o[1][0], o[1][1], o[1][2]};
  }
  return out;
}

// kappa = g_1l R^l_212 / det g with
// R^l_ijk = d_j Gam^l_ik - d_k Gam^l_ij + Gam^l_jm Gam^m_ik - Gam^l_km Gam^m_ij.
inline ScalarField gauss_curvature(const Metric2Field& g, DiffOrder order = DiffOrder::second) {
  const Grid& G = g.grid();
  auto Gam = christoffel(g, order);
  auto ops = diff_operators(g.grid_ptr(), order);
  ScalarField d1G22[2], d2G12[2];
  for (int l = 0; l < 2; ++l) {
    d1G22[l] = apply(ops->d1, map_field(Gam, [l](const Christoffel& c) { return c.Gam[l].yy; }));
    d2G12[l] = apply(ops->d2, map_field(Gam, [l](const Christoffel& c) { return c.Gam[l].xy; }));
  }
  ScalarField kappa(g.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    const Christoffel& c = Gam[k];
    double R[2];
    for (int l = 0; l < 2; ++l) {
      double quad = 0.0;
      for (int m = 0; m < 2; ++m)
        quad += detail::sym_at(c.Gam[l], 0, m) * detail::sym_at(c.Gam[m], 1, 1) -
                detail::sym_at(c.Gam[l], 1, m) * detail::sym_at(c.Gam[m], 0, 1);
      R[l] = d1G22[l][k] - d2G12[l][k] + quad;
    }
    kappa[k] = (g[k].xx * R[0] + g[k].xy * R[1]) / g[k].det();
  }
  return kappa;
}

// Pointwise pieces of the closed-form curvature of the shallow metric
// g = Id + h^2 (grad v0 (x) grad v0 - grad w (x) grad w):
//   kappa = h^2 Phi / ((1 - h^2 X) det g (1 - h^2 N)^2),
//   Phi = (1 - h^2 N)^2 det(D^2 v0 - Gam^k d_k v0) - (1 - h^2 X)^2 det g det D^2 w,
// with X = g^ij d_i v0 d_j v0 and N = |grad w|^2. Templated for automatic
// differentiation in the matching solver.
template <class S>
struct ShallowCurvatureTerms {
  S phi, X, N, detg;

  ShallowCurvatureTerms(double h, const Vec2& a0, const Sym2& H0v, const S& wx, const S& wy, const S& wxx,
                        const S& wxy, const S& wyy) {
    const double h2 = h * h;
    S gxx = 1.0 + h2 * (a0.x() * a0.x() - wx * wx);
    S gxy = h2 * (a0.x() * a0.y() - wx * wy);
    S gyy = 1.0 + h2 * (a0.y() * a0.y() - wy * wy);
    detg = gxx * gyy - gxy * gxy;
    S gi[3] = {gyy / detg, -gxy / detg, gxx / detg};
    S g0[2] = {S(a0.x()), S(a0.y())}, g1[2] = {wx, wy};
    S H0[3] = {S(H0v.xx), S(H0v.xy), S(H0v.yy)}, H1[3] = {wxx, wxy, wyy};
    S Gm[2][3];
    shallow_christoffel_at(h, g0, H0, g1, H1, gi, Gm);
    S M[3];
    for (int e = 0; e < 3; ++e) M[e] = H0[e] - (Gm[0][e] * a0.x() + Gm[1][e] * a0.y());
    X = gi[0] * (a0.x() * a0.x()) + 2.0 * gi[1] * (a0.x() * a0.y()) + gi[2] * (a0.y() * a0.y());
    N = wx * wx + wy * wy;
    S oneN = 1.0 - h2 * N, oneX = 1.0 - h2 * X;
    S detM = M[0] * M[2] - M[1] * M[1];
    S detH = wxx * wyy - wxy * wxy;
    phi = oneN * oneN * detM - oneX * oneX * detg * detH;
  }
};

inline double shallow_curvature_at(double h, const Jet& j0, const Jet& j1) {
  ShallowCurvatureTerms<double> t(h, j0.g, j0.H, j1.g.x(), j1.g.y(), j1.H.xx, j1.H.xy, j1.H.yy);
  double oneN = 1.0 - h * h * t.N, oneX = 1.0 - h * h * t.X;
  return h * h * t.phi / (oneX * t.detg * oneN * oneN);
}

// Closed-form curvature of shallow_metric(v0, v1, h).
inline ScalarField gauss_curvature_shallow(const ScalarField& v0, const ScalarField& v1, double h,
                                           DiffOrder order = DiffOrder::second) {
  require_same_grid(v0.grid(), v1.grid(), "gauss_curvature");
  auto J0 = jets(v0, order), J1 = jets(v1, order);
  const Grid& G = v0.grid();
  ScalarField kappa(v0.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Sym2 g = shallow_metric_at(J0[k].g, J1[k].g, h);
    if (!(g.det() > 0.0) || !(g.xx > 0.0)) throw MetricError("singular metric at " + G.describe(k));
    kappa[k] = shallow_curvature_at(h, J0[k], J1[k]);
  }
  return kappa;
}

struct ShallowMode {
  const ScalarField& v0;
  const ScalarField& v1;
  double h;
};

// Shallow mode: g must be the shallow metric of (v0, v1, h).
inline ScalarField gauss_curvature(const Metric2Field& g, const ShallowMode& mode,
                                   DiffOrder order = DiffOrder::second) {
  auto expect = shallow_metric(mode.v0, mode.v1, mode.h, order);
  require_same_grid(g.grid(), expect.grid(), "gauss_curvature");
  const Grid& G = g.grid();
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Sym2 d = g[k] - expect[k];
    double scale = 1e-10 * std::max(1.0, std::sqrt(g[k].norm2()));
    if (std::abs(d.xx) > scale || std::abs(d.xy) > scale || std::abs(d.yy) > scale)
      throw MetricError("metric does not match shallow_metric(v0, v1, h) at " + G.describe(k));
  }
  return gauss_curvature_shallow(mode.v0, mode.v1, mode.h, order);
}

// Pullback metric grad(psi)^T grad(psi) of a planar map.
inline Sym2Field pullback_metric(const VectorField2& psi, DiffOrder order = DiffOrder::second) {
  auto J = jacobian(psi, order);
  return map_field(J, [](const Mat2& F) { return Sym2::from(F.transpose() * F); });
}

inline double max_metric_difference(const Sym2Field& a, const Sym2Field& b) {
  require_same_grid(a.grid(), b.grid(), "metric difference");
  double m = 0.0;
  const Grid& G = a.grid();
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Sym2 d = a[k] - b[k];
    m = std::max({m, std::abs(d.xx), std::abs(d.xy), std::abs(d.yy)});
  }
  return m;
}

struct ImmersionOptions {
  double tol = 1e-6;            // bound on |grad phi^T grad phi - g| in C0
  double curvature_tol = 1e-6;  // relative to max(1, |g|)
  bool check_curvature = true;
  int max_iter = 60;
  DiffOrder order = DiffOrder::fourth;
};

struct ImmersionResult {
  VectorField2 phi;
  double residual = 0.0;  // C0 metric residual
  double curvature = 0.0;  // C0 curvature of g from the precheck (0 when skipped)
  int iterations = 0;
};

// Least-squares immersion of a flat metric: minimise sum |grad phi^T grad phi - g|^2
// over nodal phi by Gauss-Newton started at the identity. The normal matrix at
// the identity is factored once and reused (chord steps); a full Gauss-Newton
// step is tried whenever a chord step reduces the objective by less than 4x. Rigid
// motions are fixed by pinning phi at the centre node and the second component
// at its horizontal neighbour.
class Immerser {
 public:
  Immerser(GridPtr grid, DiffOrder order) : grid_(std::move(grid)), order_(order) {
    ops_ = diff_operators(grid_, order_);
    ops_->require_support();
    const Grid& G = *grid_;
    center_ = G.center_node();
    int ic = G.i_of(center_), jc = G.j_of(center_);
    if (G.inside(ic + 1, jc)) neighbour_ = G.index(ic + 1, jc);
    else if (G.inside(ic - 1, jc)) neighbour_ = G.index(ic - 1, jc);
    else throw ValidationError("immersion", "centre node has no horizontal neighbour");
    std::vector<Eigen::Triplet<double>> sel;
    free_ = 0;
    for (int a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < G.size(); ++k) {
        if (!G.inside(k)) continue;
        if (k == center_ || (a == 1 && k == neighbour_)) continue;
        sel.emplace_back(int(a * G.size() + k), int(free_++), 1.0);
      }
    S_.resize(int(2 * G.size()), int(free_));
    S_.setFromTriplets(sel.begin(), sel.end());
    VectorField2 id = sample(grid_, [](double x, double y) { return Vec2(x, y); });
    chord_.compute(reduced_normal(id));
    if (chord_.info() != Eigen::Success) throw SolverError("immersion", "normal matrix factorisation failed");
  }

  const GridPtr& grid() const { return grid_; }
  DiffOrder order() const { return order_; }

  ImmersionResult immerse(const Metric2Field& g, const ImmersionOptions& opt = {}) const {
    require_same_grid(*grid_, g.grid(), "flat_immersion");
    const Grid& G = *grid_;
    ImmersionResult res;
    if (opt.check_curvature) {
      double gmax = 0.0;
      for (std::size_t k = 0; k < G.size(); ++k)
        if (G.inside(k)) gmax = std::max(gmax, std::sqrt(g[k].norm2()));
      res.curvature = max_abs(gauss_curvature(g, opt.order));
      if (res.curvature > opt.curvature_tol * std::max(1.0, gmax)) {
        std::ostringstream os;
        os << "metric is not flat: |kappa|_C0 = " << res.curvature << " exceeds "
           << opt.curvature_tol * std::max(1.0, gmax);
        throw SolverError("curvature", os.str());
      }
    }
    VectorField2 phi = sample(grid_, [](double x, double y) { return Vec2(x, y); });
    Eigen::VectorXd R;
    double obj = objective(phi, g, R);
    double target = 1e-2 * opt.tol;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
      if (residual_c0(phi, g) <= target) break;
      Eigen::VectorXd grad = gradient_of(phi, R);
      Eigen::VectorXd rhs = S_.transpose() * grad;
      Eigen::VectorXd step = chord_.solve(rhs);
      VectorField2 trial = update(phi, step);
      Eigen::VectorXd Rt;
      double ot = objective(trial, g, Rt);
      if (!(ot < 0.25 * obj)) {
        // slow or failed chord step: take the full Gauss-Newton step if it does better
        Eigen::CholmodSupernodalLLT<SpCol> full;
        full.compute(reduced_normal(phi));
        if (full.info() == Eigen::Success) {
          VectorField2 t2 = update(phi, full.solve(rhs));
          Eigen::VectorXd R2;
          double o2 = objective(t2, g, R2);
          if (o2 < ot) {
            trial = std::move(t2);
            Rt = std::move(R2);
            ot = o2;
          }
        }
        if (!(ot < obj)) break;
      }
      bool stalled = obj - ot <= 1e-15 * obj;
      phi = std::move(trial);
      obj = ot;
      R = std::move(Rt);
      if (stalled) { ++it; break; }
    }
    res.iterations = it;
    normalize(phi);
    auto J = jacobian(phi, order_);
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k) && !(J[k].determinant() > 0.0))
        throw SolverError("orientation", "immersion loses orientation at " + G.describe(k));
    res.residual = residual_c0(phi, g);
    if (!(res.residual <= opt.tol)) {
      std::ostringstream os;
      os << "immersion residual " << res.residual << " exceeds tolerance " << opt.tol << " (|kappa|_C0 = "
         << res.curvature << ")";
      throw SolverError("immersion_residual", os.str());
    }
    res.phi = std::move(phi);
    return res;
  }

 private:
  using SpCol = Eigen::SparseMatrix<double>;

  struct Derivs {
    Eigen::VectorXd d1[2], d2[2];
  };

  Derivs derivs(const VectorField2& phi) const {
    Derivs d;
    for (int a = 0; a < 2; ++a) {
      ScalarField c = component(phi, a);
      Eigen::Map<const Eigen::VectorXd> x(c.values().data(), Eigen::Index(c.size()));
      d.d1[a] = ops_->d1 * x;
      d.d2[a] = ops_->d2 * x;
    }
    return d;
  }

  double objective(const VectorField2& phi, const Metric2Field& g, Eigen::VectorXd& R) const {
    const Grid& G = *grid_;
    Derivs d = derivs(phi);
    std::size_t n = G.size();
    R.setZero(Eigen::Index(3 * n));
    std::vector<double> terms;
    terms.reserve(G.domain_count());
    const double r2 = std::sqrt(2.0);
    for (std::size_t k = 0; k < n; ++k) {
      if (!G.inside(k)) continue;
      double a11 = d.d1[0][k] * d.d1[0][k] + d.d1[1][k] * d.d1[1][k];
      double a12 = d.d1[0][k] * d.d2[0][k] + d.d1[1][k] * d.d2[1][k];
      double a22 = d.d2[0][k] * d.d2[0][k] + d.d2[1][k] * d.d2[1][k];
      R[k] = a11 - g[k].xx;
      R[n + k] = r2 * (a12 - g[k].xy);
      R[2 * n + k] = a22 - g[k].yy;
      terms.push_back(R[k] * R[k] + R[n + k] * R[n + k] + R[2 * n + k] * R[2 * n + k]);
    }
    return pairwise_sum(terms);
  }

  double residual_c0(const VectorField2& phi, const Metric2Field& g) const {
    return max_metric_difference(pullback_metric(phi, order_), g.field());
  }

  // J^T R for the residual ordering used in objective().
  Eigen::VectorXd gradient_of(const VectorField2& phi, const Eigen::VectorXd& R) const {
    const Grid& G = *grid_;
    std::size_t n = G.size();
    Derivs d = derivs(phi);
    const double r2 = std::sqrt(2.0);
    auto R1 = R.segment(0, Eigen::Index(n)), R2 = R.segment(Eigen::Index(n), Eigen::Index(n)),
         R3 = R.segment(Eigen::Index(2 * n), Eigen::Index(n));
    Eigen::VectorXd out(Eigen::Index(2 * n));
    for (int a = 0; a < 2; ++a) {
      Eigen::VectorXd t1 = 2.0 * d.d1[a].cwiseProduct(R1);
      Eigen::VectorXd t2 = r2 * d.d2[a].cwiseProduct(R2);
      Eigen::VectorXd t3 = r2 * d.d1[a].cwiseProduct(R2);
      Eigen::VectorXd t4 = 2.0 * d.d2[a].cwiseProduct(R3);
      out.segment(Eigen::Index(a * n), Eigen::Index(n)) =
          ops_->d1.transpose() * (t1 + t2) + ops_->d2.transpose() * (t3 + t4);
    }
    return out;
  }

  SpCol reduced_normal(const VectorField2& phi) const {
    const Grid& G = *grid_;
    std::size_t n = G.size();
    Derivs d = derivs(phi);
    const double r2 = std::sqrt(2.0);
    SpCol D1 = ops_->d1, D2 = ops_->d2;
    std::vector<Eigen::Triplet<double>> trip;
    auto add = [&](int row_block, int a, const Eigen::VectorXd& s, const SpCol& D) {
      for (int c = 0; c < D.outerSize(); ++c)
        for (SpCol::InnerIterator it(D, c); it; ++it) {
          double v = s[it.row()] * it.value();
          if (v != 0.0) trip.emplace_back(int(row_block * n + it.row()), int(a * n + it.col()), v);
        }
    };
    for (int a = 0; a < 2; ++a) {
      add(0, a, 2.0 * d.d1[a], D1);
      add(1, a, r2 * d.d2[a], D1);
      add(1, a, r2 * d.d1[a], D2);
      add(2, a, 2.0 * d.d2[a], D2);
    }
    SpCol J(int(3 * n), int(2 * n));
    J.setFromTriplets(trip.begin(), trip.end());
    SpCol JS = J * S_;
    return SpCol(JS.transpose() * JS);
  }

  VectorField2 update(const VectorField2& phi, const Eigen::VectorXd& reduced_step) const {
    Eigen::VectorXd full = S_ * reduced_step;
    std::size_t n = grid_->size();
    VectorField2 out = phi;
    for (std::size_t k = 0; k < n; ++k) {
      if (!grid_->inside(k)) continue;
      out[k].x() -= full[k];
      out[k].y() -= full[n + k];
    }
    return out;
  }

  // Best-fit affine map A x + b; rotate by the polar factor of A and translate
  // so phi(centre) is the centre node's position.
  void normalize(VectorField2& phi) const {
    const Grid& G = *grid_;
    Eigen::Matrix3d NtN = Eigen::Matrix3d::Zero();
    Eigen::Matrix<double, 3, 2> NtY = Eigen::Matrix<double, 3, 2>::Zero();
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      Vec2 p = G.point(k);
      Eigen::Vector3d r(p.x(), p.y(), 1.0);
      NtN += r * r.transpose();
      NtY += r * phi[k].transpose();
    }
    Eigen::Matrix<double, 3, 2> coef = NtN.ldlt().solve(NtY);
    Mat2 A = coef.topRows<2>().transpose();
    if (!(A.determinant() > 0.0)) throw SolverError("orientation", "immersion is orientation reversing");
    Eigen::JacobiSVD<Mat2> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat2 Rot = svd.matrixU() * svd.matrixV().transpose();
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k)) phi[k] = Rot.transpose() * phi[k];
    Vec2 shift = G.point(center_) - phi[center_];
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k)) phi[k] += shift;
  }

  GridPtr grid_;
  DiffOrder order_;
  std::shared_ptr<const DiffOperators> ops_;
  std::size_t center_ = 0, neighbour_ = 0;
  std::size_t free_ = 0;
  SpCol S_;
  Eigen::CholmodSupernodalLLT<SpCol> chord_;
};

inline ImmersionResult flat_immersion(const Metric2Field& g, const ImmersionOptions& opt = {}) {
  Immerser im(g.grid_ptr(), opt.order);
  return im.immerse(g, opt);
}

}  // namespace ssl
