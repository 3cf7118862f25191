#pragma once

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "ssl/fields.hpp"

namespace ssl {

struct MAProblem {
  ScalarField f;         // right-hand side, positive on the domain
  ScalarField boundary;  // Dirichlet data, read at boundary nodes
  std::optional<double> c0;

  void validate() const {
    require_same_grid(f.grid(), boundary.grid(), "MAProblem");
    const Grid& G = f.grid();
    double lower = c0 ? *c0 : 0.0;
    if (c0 && !(*c0 > 0.0)) throw ValidationError("ma_problem", "c0 must be positive");
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      if (!std::isfinite(f[k]) || !std::isfinite(boundary[k]))
        throw ValidationError("ma_problem", "non-finite data at " + G.describe(k));
      if (!(f[k] > 0.0) || f[k] < lower)
        throw ValidationError("ma_problem", "right-hand side not bounded below by a positive constant at " +
                                                G.describe(k));
    }
  }
};

struct MAOptions {
  double tol = 1e-10;  // C0 residual at interior nodes, floored at the rounding level
  int max_iter = 30;
  double full_step_below = 1e-3;  // L2 residual below which Armijo damping is off
  DiffOrder order = DiffOrder::second;
};

struct MAResult {
  ScalarField u;
  std::vector<double> history;  // C0 interior residual before each step and at exit
  int iterations = 0;
};

inline ScalarField hessian_det(const ScalarField& u, DiffOrder order = DiffOrder::second) {
  return map_field(hessian(u, order), [](const Sym2& H) { return H.det(); });
}

// det D^2 u - f at every domain node
inline ScalarField ma_residual(const ScalarField& u, const ScalarField& f, DiffOrder order = DiffOrder::second) {
  require_same_grid(u.grid(), f.grid(), "ma_residual");
  return hessian_det(u, order) - f;
}

namespace detail {

inline double interior_c0(const ScalarField& r) {
  const Grid& G = r.grid();
  double m = 0.0;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.interior(k)) m = std::max(m, std::abs(r[k]));
  return m;
}

inline double interior_l2(const ScalarField& r) {
  const Grid& G = r.grid();
  std::vector<double> sq;
  sq.reserve(G.domain_count());
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.interior(k)) sq.push_back(r[k] * r[k]);
  return std::sqrt(pairwise_sum(sq) * G.hx() * G.hy());
}

// Size of det D^2 u perturbations caused by rounding u itself; residuals
// below this are not resolvable by further Newton steps.
inline double roundoff_floor(const ScalarField& u, DiffOrder order) {
  const Grid& G = u.grid();
  auto H = hessian(u, order);
  double umax = 0.0, hmax = 0.0;
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    umax = std::max(umax, std::abs(u[k]));
    hmax = std::max(hmax, std::abs(H[k].xx) + std::abs(H[k].xy) + std::abs(H[k].yy));
  }
  double hmin = std::min(G.hx(), G.hy());
  return 8.0 * std::numeric_limits<double>::epsilon() * umax * hmax / (hmin * hmin);
}

// Rows of interior nodes take the given diagonal-weighted operators; boundary
// rows are the identity.
inline Eigen::SparseMatrix<double> interior_operator(const Grid& G, const std::vector<std::pair<const SpMat*, std::vector<double>>>& terms) {
  std::vector<Eigen::Triplet<double>> trip;
  for (auto& [D, w] : terms)
    for (int r = 0; r < D->outerSize(); ++r) {
      if (!G.interior(std::size_t(r))) continue;
      for (SpMat::InnerIterator it(*D, r); it; ++it) trip.emplace_back(r, int(it.col()), w[std::size_t(r)] * it.value());
    }
  for (std::size_t k = 0; k < G.size(); ++k)
    if (!G.interior(k)) trip.emplace_back(int(k), int(k), 1.0);
  Eigen::SparseMatrix<double> A(int(G.size()), int(G.size()));
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

inline Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b) {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw SolverError("linear_solve", "sparse LU factorisation failed");
  Eigen::VectorXd x = lu.solve(b);
  if (lu.info() != Eigen::Success) throw SolverError("linear_solve", "sparse LU solve failed");
  return x;
}

}  // namespace detail

// Delta u = rhs in the interior, u = boundary on boundary nodes.
inline ScalarField solve_poisson(const ScalarField& rhs, const ScalarField& boundary,
                                 DiffOrder order = DiffOrder::second) {
  require_same_grid(rhs.grid(), boundary.grid(), "solve_poisson");
  const Grid& G = rhs.grid();
  auto ops = diff_operators(rhs.grid_ptr(), order);
  ops->require_support();
  std::vector<double> ones(G.size(), 1.0);
  auto A = detail::interior_operator(G, {{&ops->d11, ones}, {&ops->d22, ones}});
  Eigen::VectorXd b = Eigen::VectorXd::Zero(Eigen::Index(G.size()));
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (G.interior(k)) b[k] = rhs[k];
    else if (G.boundary(k)) b[k] = boundary[k];
  }
  Eigen::VectorXd x = detail::solve_sparse(A, b);
  ScalarField u(rhs.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) u[k] = x[k];
  return u;
}

// Convex-branch initial guess: Delta u = 2 sqrt(f).
inline ScalarField poisson_initial_guess(const MAProblem& p, DiffOrder order = DiffOrder::second) {
  return solve_poisson(map_field(p.f, [](double v) { return 2.0 * std::sqrt(v); }), p.boundary, order);
}

// Damped Newton for det D^2 u = f: solve cof D^2 u : D^2 p = f - det D^2 u with
// p = 0 on the boundary, then u += tau p with Armijo backtracking on the L2
// residual.
inline MAResult solve_ma(const MAProblem& p, const std::optional<ScalarField>& init = std::nullopt,
                         const MAOptions& opt = {}) {
  p.validate();
  const Grid& G = p.f.grid();
  auto ops = diff_operators(p.f.grid_ptr(), opt.order);
  ops->require_support();
  MAResult res;
  res.u = init ? *init : poisson_initial_guess(p, opt.order);
  require_same_grid(res.u.grid(), G, "solve_ma");
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.boundary(k)) res.u[k] = p.boundary[k];

  auto residual = [&](const ScalarField& u) {
    ScalarField r = p.f - hessian_det(u, opt.order);
    for (std::size_t k = 0; k < G.size(); ++k)
      if (!G.interior(k)) r[k] = 0.0;
    return r;
  };

  ScalarField r = residual(res.u);
  double rc0 = detail::interior_c0(r), rl2 = detail::interior_l2(r);
  res.history.push_back(rc0);
  while (rc0 > std::max(opt.tol, detail::roundoff_floor(res.u, opt.order))) {
    if (res.iterations >= opt.max_iter) {
      std::ostringstream os;
      os << "no convergence after " << opt.max_iter << " Newton steps; residual " << rc0;
      throw SolverError("max_iterations", os.str(), res.history);
    }
    auto H = hessian(res.u, opt.order);
    std::vector<double> wxx(G.size()), wxy(G.size()), wyy(G.size());
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.interior(k)) continue;
      if (!(H[k].xx > 0.0) || !(H[k].det() > 0.0))
        throw SolverError("not_elliptic", "linearised operator loses ellipticity at " + G.describe(k), res.history);
      Sym2 c = H[k].cof();
      wxx[k] = c.xx;
      wxy[k] = 2.0 * c.xy;
      wyy[k] = c.yy;
    }
    auto A = detail::interior_operator(G, {{&ops->d11, wxx}, {&ops->d12, wxy}, {&ops->d22, wyy}});
    Eigen::Map<const Eigen::VectorXd> b(r.values().data(), Eigen::Index(r.size()));
    Eigen::VectorXd step = detail::solve_sparse(A, b);

    double tau = 1.0;
    ScalarField trial(res.u.grid_ptr());
    ScalarField rt;
    double tl2 = 0.0;
    for (int bt = 0; bt < 30; ++bt) {
      for (std::size_t k = 0; k < G.size(); ++k)
        if (G.inside(k)) trial[k] = res.u[k] + tau * step[k];
      rt = residual(trial);
      tl2 = detail::interior_l2(rt);
      if (rl2 <= opt.full_step_below || tl2 <= (1.0 - 1e-4 * tau) * rl2) break;
      tau *= 0.5;
    }
    res.u = trial;
    r = std::move(rt);
    rl2 = tl2;
    rc0 = detail::interior_c0(r);
    ++res.iterations;
    res.history.push_back(rc0);
  }
  return res;
}

// u_lambda(x) = lambda^-2 u(c + lambda (x - c)); c defaults to the box centre.
inline ScalarField dilate(const ScalarField& u, double lambda, std::optional<Vec2> center = std::nullopt) {
  if (!(lambda > 0.0) || lambda > 1.0) throw ValidationError("dilate", "lambda must lie in (0, 1]");
  if (lambda == 1.0) return u;
  const Grid& G = u.grid();
  Vec2 c = center ? *center : Vec2(0.5 * (G.box().x0 + G.box().x1), 0.5 * (G.box().y0 + G.box().y1));
  ScalarField out(u.grid_ptr());
  const double s = 1.0 / (lambda * lambda);
  parallel_for(G.size(), [&](std::size_t k) {
    if (!G.inside(k)) return;
    Vec2 q = c + lambda * (G.point(k) - c);
    out[k] = s * interpolate(u, q.x(), q.y());
  });
  return out;
}

}  // namespace ssl
