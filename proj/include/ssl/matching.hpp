#pragma once

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "ssl/fields.hpp"
#include "ssl/geometry.hpp"
#include "ssl/monge_ampere.hpp"
#include "ssl/shell_energy.hpp"

namespace ssl {

// Phi(h, z) = (1 - h^2 |grad w|^2)^2 det(D^2 v0 - Gam^k d_k v0) - (1 - h^2 X)^2 det g det D^2 w
// with w = v + z and g the shallow metric of (v0, w, h). Phi = 0 exactly where
// the metric is flat; Phi(0, 0) = det D^2 v0 - det D^2 v.
inline ScalarField phi_functional(double h, const ScalarField& z, const ScalarField& v0, const ScalarField& v,
                                  DiffOrder order = DiffOrder::fourth) {
  require_same_grid(z.grid(), v.grid(), "phi_functional");
  require_same_grid(v0.grid(), v.grid(), "phi_functional");
  ScalarField w = v + z;
  auto J0 = jets(v0, order), J1 = jets(w, order);
  const Grid& G = v.grid();
  ScalarField out(v.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    const Jet &a = J0[k], &b = J1[k];
    ShallowCurvatureTerms<double> t(h, a.g, a.H, b.g.x(), b.g.y(), b.H.xx, b.H.xy, b.H.yy);
    if (!(t.detg > 0.0)) throw MetricError("shallow metric degenerates at " + G.describe(k));
    out[k] = t.phi;
  }
  return out;
}

struct MatchOptions {
  double tol = 1e-8;              // on ||Phi||_C0 over interior nodes
  int max_iter = 30;
  bool frozen = false;            // reuse the linearisation at (0, 0)
  double constraint_tol = 1e-6;   // on ||det D^2 v - det D^2 v0||_C0, relative to max det D^2 v0
  double isometry_tol = 1e-6;     // immersion residual bound is isometry_tol * h^2
  DiffOrder order = DiffOrder::fourth;
};

struct CorrectionResult {
  ScalarField z;
  std::vector<double> history;  // ||Phi||_C0 before each step and at exit
  int iterations = 0;
};

namespace detail {

inline double interior_max(const ScalarField& f) {
  const Grid& G = f.grid();
  double m = 0.0;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.interior(k)) m = std::max(m, std::abs(f[k]));
  return m;
}

inline void require_matching_input(const ScalarField& v0, const ScalarField& v, const MatchOptions& opt) {
  require_same_grid(v0.grid(), v.grid(), "matching");
  const Grid& G = v.grid();
  auto H0 = hessian(v0, opt.order), H = hessian(v, opt.order);
  double dmax = 0.0;
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    if (!(H0[k].det() > 0.0))
      throw ValidationError("not_elliptic", "det D^2 v0 is not positive at " + G.describe(k));
    if (!(H[k].min_eig() > 0.0))
      throw ValidationError("not_elliptic", "D^2 v is not positive definite at " + G.describe(k));
    dmax = std::max(dmax, H0[k].det());
  }
  // Phi is imposed at interior nodes only, so that is where the constraint must hold
  auto c = check_constraint(v, v0, opt.order);
  double c0 = interior_max(c.residual);
  if (c0 > opt.constraint_tol * std::max(1.0, dmax)) {
    std::ostringstream os;
    os << "det D^2 v - det D^2 v0 has interior C0 norm " << c0 << " (L2 " << c.l2 << "), above "
       << opt.constraint_tol * std::max(1.0, dmax);
    throw ValidationError("constraint_violated", os.str());
  }
}

using AD5 = Eigen::AutoDiffScalar<Eigen::Matrix<double, 5, 1>>;

// Phi and its partials with respect to (w_x, w_y, w_xx, w_xy, w_yy) at every node.
inline ScalarField phi_with_partials(double h, const NodeField<Jet>& J0, const ScalarField& w, DiffOrder order,
                                     std::vector<double> part[5]) {
  const Grid& G = w.grid();
  auto J1 = jets(w, order);
  ScalarField phi(w.grid_ptr());
  for (int c = 0; c < 5; ++c) part[c].assign(G.size(), 0.0);
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    const Jet& b = J1[k];
    double vals[5] = {b.g.x(), b.g.y(), b.H.xx, b.H.xy, b.H.yy};
    AD5 x[5];
    for (int c = 0; c < 5; ++c) x[c] = AD5(vals[c], 5, c);
    ShallowCurvatureTerms<AD5> t(h, J0[k].g, J0[k].H, x[0], x[1], x[2], x[3], x[4]);
    if (!(t.detg.value() > 0.0)) throw MetricError("shallow metric degenerates at " + G.describe(k));
    phi[k] = t.phi.value();
    for (int c = 0; c < 5; ++c) part[c][k] = t.phi.derivatives()[c];
  }
  return phi;
}

}  // namespace detail

// Newton for Phi(h, z) = 0 with z = 0 on boundary nodes. The Jacobian is the
// exact derivative of the discrete Phi (refreshed each step unless frozen).
inline CorrectionResult solve_matching_correction(double h, const ScalarField& v0, const ScalarField& v,
                                                  const MatchOptions& opt = {}) {
  detail::require_matching_input(v0, v, opt);
  const Grid& G = v.grid();
  auto ops = diff_operators(v.grid_ptr(), opt.order);
  ops->require_support();
  auto J0 = jets(v0, opt.order);
  const SpMat* D[5] = {&ops->d1, &ops->d2, &ops->d11, &ops->d12, &ops->d22};

  double guard = std::numeric_limits<double>::infinity();
  {
    auto H = hessian(v, opt.order);
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k)) guard = std::min(guard, H[k].cof().min_eig());
    guard *= 0.5;
  }

  auto assemble = [&](std::vector<double> part[5]) {
    std::vector<std::pair<const SpMat*, std::vector<double>>> terms;
    for (int c = 0; c < 5; ++c) terms.emplace_back(D[c], part[c]);
    return detail::interior_operator(G, terms);
  };

  CorrectionResult res;
  res.z = ScalarField(v.grid_ptr());
  std::vector<double> part[5];
  ScalarField phi = detail::phi_with_partials(h, J0, v, opt.order, part);
  std::optional<Eigen::SparseMatrix<double>> frozen;
  if (opt.frozen) {
    std::vector<double> p0[5];
    detail::phi_with_partials(0.0, J0, v, opt.order, p0);
    frozen = assemble(p0);
  }
  auto interior_l2 = [&](const ScalarField& f) { return detail::interior_l2(f); };
  double r = detail::interior_max(phi), rl2 = interior_l2(phi);
  res.history.push_back(r);
  while (r > opt.tol) {
    if (res.iterations >= opt.max_iter) {
      std::ostringstream os;
      os << "matching Newton did not converge in " << opt.max_iter << " steps; ||Phi||_C0 = " << r;
      throw SolverError("max_iterations", os.str(), res.history);
    }
    auto Hw = hessian(v + res.z, opt.order);
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k) && !(Hw[k].cof().min_eig() >= guard))
        throw SolverError("not_elliptic",
                          "cof D^2 (v + z) loses ellipticity at " + G.describe(k), res.history);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(Eigen::Index(G.size()));
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.interior(k)) b[Eigen::Index(k)] = -phi[k];
    Eigen::VectorXd step = detail::solve_sparse(frozen ? *frozen : assemble(part), b);

    double tau = 1.0;
    ScalarField trial(v.grid_ptr()), tphi;
    std::vector<double> tpart[5];
    double tl2 = 0.0;
    bool ok = false;
    for (int bt = 0; bt < 30; ++bt) {
      for (std::size_t k = 0; k < G.size(); ++k)
        if (G.interior(k)) trial[k] = res.z[k] + tau * step[Eigen::Index(k)];
      tphi = detail::phi_with_partials(h, J0, v + trial, opt.order, tpart);
      tl2 = interior_l2(tphi);
      if (tl2 <= (1.0 - 1e-4 * tau) * rl2) {
        ok = true;
        break;
      }
      tau *= 0.5;
    }
    if (!ok) {
      std::ostringstream os;
      os << "matching Newton stagnated at ||Phi||_C0 = " << r;
      throw SolverError("stagnation", os.str(), res.history);
    }
    res.z = trial;
    phi = std::move(tphi);
    for (int c = 0; c < 5; ++c) part[c] = std::move(tpart[c]);
    rl2 = tl2;
    r = detail::interior_max(phi);
    ++res.iterations;
    res.history.push_back(r);
  }
  return res;
}

struct MatchResult {
  double h = 0.0;
  ScalarField z;           // curvature-killing correction, zero on the boundary
  VectorField2 w_tan;      // (phi - id) / h^2
  ScalarField w3;          // z / h
  VectorField2 phi;        // planar immersion of the corrected metric
  double phi_residual = 0.0;        // ||Phi(h, z)||_C0 on interior nodes
  double curvature_residual = 0.0;  // ||kappa(g_h(z))||_C0 on interior nodes, closed form
  double immersion_residual = 0.0;  // |grad phi^T grad phi - g|_C0
  double isometry_residual = 0.0;   // pullback of id + h v e3 + h^2 w against id + h v0 e3
  double w22 = 0.0;                 // grid W22 norm of (w_tan, w3)
  int newton_iterations = 0;
  int immersion_iterations = 0;
};

// C0 difference between the pullback metrics of xi = (phi, h w) and of
// id + h v0 e3.
inline double isometry_defect(const VectorField2& phi, const ScalarField& w, const ScalarField& v0, double h,
                              DiffOrder order) {
  auto Jp = jacobian(phi, order);
  auto gw = gradient(w, order), g0 = gradient(v0, order);
  const Grid& G = w.grid();
  double m = 0.0;
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Mat2 a = Jp[k].transpose() * Jp[k] + h * h * gw[k] * gw[k].transpose();
    Mat2 b = Mat2::Identity() + h * h * g0[k] * g0[k].transpose();
    m = std::max(m, (a - b).cwiseAbs().maxCoeff());
  }
  return m;
}

// Solves for z_h, immerses g_h(z_h) and assembles w_h = w_tan + w3 e3 with
// id + h v e3 + h^2 w_h isometric to id + h v0 e3. Pass an Immerser to reuse its
// factorisation across calls on one grid.
inline MatchResult build_matching_displacement(double h, const ScalarField& v0, const ScalarField& v,
                                               const MatchOptions& opt = {}, const Immerser* immerser = nullptr) {
  if (!(h > 0.0)) throw ValidationError("matching", "h must be positive");
  MatchResult out;
  out.h = h;
  auto corr = solve_matching_correction(h, v0, v, opt);
  out.z = corr.z;
  out.newton_iterations = corr.iterations;
  out.phi_residual = corr.history.back();
  ScalarField w = v + out.z;
  {
    auto kappa = gauss_curvature_shallow(v0, w, h, opt.order);
    out.curvature_residual = detail::interior_max(kappa);
  }
  auto g = shallow_metric(v0, w, h, opt.order);
  std::optional<Immerser> own;
  if (!immerser || !immerser->grid()->same_as(v.grid()) || immerser->order() != opt.order) {
    own.emplace(v.grid_ptr(), opt.order);
    immerser = &*own;
  }
  ImmersionOptions io;
  io.tol = opt.isometry_tol * h * h;
  io.order = opt.order;
  io.check_curvature = false;  // flatness is certified by Phi on interior nodes
  ImmersionResult im;
  try {
    im = immerser->immerse(g, io);
  } catch (const SolverError& e) {
    std::ostringstream os;
    os << e.detail() << "; ||Phi(h, z_h)||_C0 = " << out.phi_residual
       << ", closed-form |kappa|_C0 = " << out.curvature_residual;
    throw SolverError(e.code(), os.str(), e.history());
  }
  out.phi = im.phi;
  out.immersion_residual = im.residual;
  out.immersion_iterations = im.iterations;
  const Grid& G = v.grid();
  out.w_tan = VectorField2(v.grid_ptr());
  out.w3 = ScalarField(v.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    out.w_tan[k] = (im.phi[k] - G.point(k)) / (h * h);
    out.w3[k] = out.z[k] / h;
  }
  out.isometry_residual = isometry_defect(im.phi, w, v0, h, opt.order);
  VectorField3 wh(v.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) wh[k] = Vec3(out.w_tan[k].x(), out.w_tan[k].y(), out.w3[k]);
  out.w22 = field_norm(wh, NormKind::W22, opt.order);
  return out;
}

}  // namespace ssl
