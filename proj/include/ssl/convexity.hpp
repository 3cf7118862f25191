#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ssl/detail/lower_hull.hpp"
#include "ssl/fields.hpp"

namespace ssl {

// u = sign(x) x^2 exp(y^2 / 2): C^1, strictly convex for x > 0, strictly
// concave for x < 0, det D^2 u = 2 x^2 e^{y^2} (1 - y^2) on either side.
struct Sverak {
  static double value(double x, double y) { return (x >= 0 ? 1.0 : -1.0) * x * x * std::exp(0.5 * y * y); }
  static Vec2 grad(double x, double y) {
    double s = (x >= 0 ? 1.0 : -1.0), e = std::exp(0.5 * y * y);
    return {s * 2.0 * x * e, s * x * x * y * e};
  }
  static Sym2 hessian(double x, double y) {
    double s = (x >= 0 ? 1.0 : -1.0), e = std::exp(0.5 * y * y);
    return {s * 2.0 * e, s * 2.0 * x * y * e, s * x * x * (1.0 + y * y) * e};
  }
  static double det_hessian(double x, double y) { return 2.0 * x * x * std::exp(y * y) * (1.0 - y * y); }
};

inline ScalarField sverak_example(const GridPtr& g) {
  return sample(g, [](double x, double y) { return Sverak::value(x, y); });
}

enum class ConvexityLabel : std::uint8_t { indeterminate = 0, convex = 1, concave = 2 };
// indeterminate: every node sits in the singular set
enum class ConvexityVerdict { convex, concave, mixed, indeterminate };

inline const char* to_string(ConvexityLabel l) {
  switch (l) {
    case ConvexityLabel::convex: return "convex";
    case ConvexityLabel::concave: return "concave";
    default: return "indeterminate";
  }
}

inline const char* to_string(ConvexityVerdict v) {
  switch (v) {
    case ConvexityVerdict::convex: return "convex";
    case ConvexityVerdict::concave: return "concave";
    case ConvexityVerdict::mixed: return "mixed";
    default: return "indeterminate";
  }
}

struct ConvexityReport {
  NodeField<ConvexityLabel> labels;
  NodeField<std::uint8_t> singular;  // det D^2 u <= eps
  ScalarField det;
  double eps = 0.0;
  std::size_t n_convex = 0, n_concave = 0, n_singular = 0;
  ConvexityVerdict verdict = ConvexityVerdict::indeterminate;
};

inline double median_abs(const ScalarField& f) {
  std::vector<double> a;
  const Grid& G = f.grid();
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) a.push_back(std::abs(f[k]));
  if (a.empty()) return 0.0;
  auto mid = a.begin() + std::ptrdiff_t(a.size() / 2);
  std::nth_element(a.begin(), mid, a.end());
  return *mid;
}

// Labels nodes by the signs of det and trace of D^2 u. eps defaults to
// 1e-3 median |det D^2 u|.
inline ConvexityReport classify_convexity(const ScalarField& u, std::optional<double> eps = std::nullopt,
                                          DiffOrder order = DiffOrder::second) {
  const Grid& G = u.grid();
  auto H = hessian(u, order);
  ConvexityReport r;
  r.det = map_field(H, [](const Sym2& h) { return h.det(); });
  r.eps = eps ? *eps : 1e-3 * median_abs(r.det);
  if (!(r.eps >= 0.0)) throw ValidationError("classify_convexity", "eps must be non-negative");
  r.labels = NodeField<ConvexityLabel>(u.grid_ptr());
  r.singular = NodeField<std::uint8_t>(u.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    if (r.det[k] <= r.eps) {
      r.singular[k] = 1;
      ++r.n_singular;
      continue;
    }
    double tr = H[k].trace();
    if (tr > 0) {
      r.labels[k] = ConvexityLabel::convex;
      ++r.n_convex;
    } else if (tr < 0) {
      r.labels[k] = ConvexityLabel::concave;
      ++r.n_concave;
    }
  }
  if (r.n_convex && r.n_concave) r.verdict = ConvexityVerdict::mixed;
  else if (r.n_convex) r.verdict = ConvexityVerdict::convex;
  else if (r.n_concave) r.verdict = ConvexityVerdict::concave;
  return r;
}

// Lower convex envelope over the in-domain nodes: Cu(a) = sup of affine T with
// T <= u at every node.
inline ScalarField convexify(const ScalarField& u) {
  const Grid& G = u.grid();
  std::vector<detail::HullPoint> pts;
  std::vector<std::size_t> ids;
  pts.reserve(G.domain_count());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    if (!std::isfinite(u[k])) throw ValidationError("convexify", "non-finite value at " + G.describe(k));
    pts.push_back({G.i_of(k), G.j_of(k), u[k]});
    ids.push_back(k);
  }
  auto env = detail::lower_envelope(pts);
  ScalarField out(u.grid_ptr());
  for (std::size_t n = 0; n < ids.size(); ++n) out[ids[n]] = std::min(env[n], u[ids[n]]);
  return out;
}

// True when some affine T with T(a) = u(a) stays below u at every node up to
// tol, i.e. u has a supporting hyperplane at node a on the grid.
inline bool has_supporting_plane(const ScalarField& u, std::size_t a, double tol = 1e-12) {
  auto cu = convexify(u);
  return cu[a] >= u[a] - tol * std::max(1.0, std::abs(u[a]));
}

struct OscillationResult {
  double osc = 0.0;          // oscillation of v over B(x, delta)
  double bound = 0.0;        // sqrt(2 pi) (ln R/delta)^{-1/2} ||Dv||_{L2(B(x,R))}
  double grad_l2 = 0.0;
  double osc_sphere = 0.0;   // oscillation over the circle of radius delta
  bool violated = false;
};

namespace detail {

inline double diameter(const std::vector<Vec2>& pts) {
  double d = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) d = std::max(d, (pts[a] - pts[b]).squaredNorm());
  return std::sqrt(d);
}

// Cells whose four corners are in the domain.
inline bool full_cell(const Grid& G, int i, int j) {
  return G.inside(i, j) && G.inside(i + 1, j) && G.inside(i, j + 1) && G.inside(i + 1, j + 1);
}

inline double bilinear(const ScalarField& f, int i, int j, double s, double t) {
  return (1 - s) * (1 - t) * f.at(i, j) + s * (1 - t) * f.at(i + 1, j) + (1 - s) * t * f.at(i, j + 1) +
         s * t * f.at(i + 1, j + 1);
}

}  // namespace detail

// Oscillation estimate for a planar map with positive Jacobian. The oscillation
// over the ball is taken on its nodes together with circle samples; the L2 norm
// of Dv uses sub-cell midpoint quadrature of the interpolated |Dv|^2.
inline OscillationResult oscillation_bound(const VectorField2& v, Vec2 x, double delta, double R,
                                           int circle_samples = 256, int sub = 8,
                                           DiffOrder order = DiffOrder::second) {
  const Grid& G = v.grid();
  if (!(delta > 0.0) || !(R > delta))
    throw ValidationError("geometry", "need 0 < delta < R");
  // every cell meeting B(x,R) must lie in the domain
  int i0 = int(std::floor((x.x() - R - G.box().x0) / G.hx())), i1 = int(std::floor((x.x() + R - G.box().x0) / G.hx()));
  int j0 = int(std::floor((x.y() - R - G.box().y0) / G.hy())), j1 = int(std::floor((x.y() + R - G.box().y0) / G.hy()));
  auto cell_meets_ball = [&](int i, int j, double r) {
    double cx = std::clamp(x.x(), G.x(0) + i * G.hx(), G.x(0) + (i + 1) * G.hx());
    double cy = std::clamp(x.y(), G.y(0) + j * G.hy(), G.y(0) + (j + 1) * G.hy());
    return std::hypot(cx - x.x(), cy - x.y()) < r;
  };
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      if (!cell_meets_ball(i, j, R)) continue;
      if (i < 0 || j < 0 || i >= G.nx() - 1 || j >= G.ny() - 1 || !detail::full_cell(G, i, j))
        throw ValidationError("geometry", "ball B(x,R) leaves the domain");
    }
  auto J = jacobian(v, order);
  ScalarField frob(v.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    frob[k] = J[k].squaredNorm();
    if (std::hypot(G.point(k).x() - x.x(), G.point(k).y() - x.y()) <= R && !(J[k].determinant() > 0.0))
      throw ValidationError("geometry", "det Dv is not positive at " + G.describe(k));
  }

  // |Dv|^2 over B(x,R)
  double acc = 0.0;
  const double ds = 1.0 / sub;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      if (!cell_meets_ball(i, j, R)) continue;
      for (int b = 0; b < sub; ++b)
        for (int a = 0; a < sub; ++a) {
          double s = (a + 0.5) * ds, t = (b + 0.5) * ds;
          double px = G.x(0) + (i + s) * G.hx(), py = G.y(0) + (j + t) * G.hy();
          if (std::hypot(px - x.x(), py - x.y()) > R) continue;
          acc += detail::bilinear(frob, i, j, s, t);
        }
    }
  OscillationResult r;
  r.grad_l2 = std::sqrt(acc * G.hx() * G.hy() * ds * ds);
  r.bound = std::sqrt(2.0 * std::numbers::pi) / std::sqrt(std::log(R / delta)) * r.grad_l2;

  ScalarField v1 = component(v, 0), v2 = component(v, 1);
  std::vector<Vec2> ring, ball;
  for (int s = 0; s < circle_samples; ++s) {
    double th = 2.0 * std::numbers::pi * s / circle_samples;
    double px = x.x() + delta * std::cos(th), py = x.y() + delta * std::sin(th);
    ring.emplace_back(interpolate(v1, px, py), interpolate(v2, px, py));
  }
  ball = ring;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k) && (G.point(k) - x).norm() <= delta) ball.push_back(v[k]);
  r.osc = detail::diameter(ball);
  r.osc_sphere = detail::diameter(ring);
  r.violated = r.osc > r.bound;
  return r;
}

}  // namespace ssl
