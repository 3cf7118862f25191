#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssl/fields.hpp"
#include "ssl/io.hpp"
#include "ssl/material.hpp"
#include "ssl/monge_ampere.hpp"

namespace ssl {

struct ShellParams {
  double h = 1e-2;
  double alpha = 0.5;
  std::optional<double> alpha_prime;  // force exponent, alpha + 2 when unset
  Lame lame;
  int nq = 5;

  double force_exponent() const { return alpha_prime.value_or(alpha + 2.0); }
  double depth() const { return std::pow(h, alpha); }  // h^alpha

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("shell_params", "h must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("shell_params", "alpha must lie in (0, 1)");
    if (alpha_prime && !std::isfinite(*alpha_prime)) throw ValidationError("shell_params", "alpha_prime must be finite");
    if (nq < 3 || nq % 2 == 0) throw ValidationError("shell_params", "nq must be odd and at least 3");
    lame.validate();
  }
};

// Gauss-Legendre rule on (-1/2, 1/2) with weights summing to one, and the
// differentiation matrix of the interpolating polynomial at the nodes.
struct ThicknessRule {
  std::vector<double> t, w;
  Eigen::MatrixXd D;

  static ThicknessRule gauss(int nq) {
    if (nq < 1) throw ValidationError("thickness_rule", "need at least one node");
    ThicknessRule r;
    auto zeros = boost::math::legendre_p_zeros<double>(nq);  // non-negative zeros, ascending
    std::vector<double> x;
    for (auto it = zeros.rbegin(); it != zeros.rend(); ++it)
      if (*it != 0.0) x.push_back(-*it);
    for (double z : zeros) x.push_back(z);
    for (double xi : x) {
      double dp = boost::math::legendre_p_prime(nq, xi);
      r.t.push_back(0.5 * xi);
      r.w.push_back(1.0 / ((1.0 - xi * xi) * dp * dp));
    }
    const int n = int(r.t.size());
    std::vector<double> c(n, 1.0);  // barycentric weights
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) c[i] /= (r.t[i] - r.t[j]);
    r.D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j)
        if (i != j) r.D(i, j) = c[j] / c[i] / (r.t[i] - r.t[j]);
      r.D(i, i) = -r.D.row(i).sum();
    }
    return r;
  }
};

// Samples of a map on Omega x (-1/2, 1/2) at the thickness nodes.
struct Deformation3 {
  ThicknessRule rule;
  std::vector<VectorField3> samples;

  Deformation3() = default;
  Deformation3(const GridPtr& g, int nq) : rule(ThicknessRule::gauss(nq)), samples(std::size_t(nq), VectorField3(g)) {}

  int nq() const { return int(samples.size()); }
  const Grid& grid() const { return samples.front().grid(); }
  const GridPtr& grid_ptr() const { return samples.front().grid_ptr(); }

  void validate() const {
    if (samples.empty() || int(rule.t.size()) != nq()) throw ValidationError("deformation", "sample count mismatch");
    for (int q = 0; q < nq(); ++q) {
      require_same_grid(samples[q].grid(), grid(), "deformation");
      if (std::abs(rule.t[q] + rule.t[nq() - 1 - q]) > 1e-14)
        throw ValidationError("deformation", "thickness samples not symmetric about 0");
      const Grid& G = grid();
      for (std::size_t k = 0; k < G.size(); ++k)
        if (G.inside(k) && !samples[q][k].allFinite())
          throw ValidationError("deformation", "non-finite sample at " + G.describe(k));
    }
  }
};

// (x, t) -> fn(x, y, t) at all samples.
template <class F>
Deformation3 sample_deformation(const GridPtr& g, int nq, F&& fn) {
  Deformation3 d(g, nq);
  for (int q = 0; q < nq; ++q) {
    double t = d.rule.t[q];
    d.samples[q] = sample(g, [&](double x, double y) -> Vec3 { return fn(x, y, t); });
  }
  return d;
}

struct ShellEmbedding {
  Deformation3 phi_tilde;     // phi_h + x3 n^h with x3 = h t
  std::vector<Mat3Field> b;   // grad phi_tilde per sample
  VectorField3 n;             // unit normal of the mid-surface
  std::vector<ScalarField> det_b;
};

// Jacobian [d1 v, d2 v, (1/h) dt v] of a sampled map.
inline std::vector<Mat3Field> thickness_gradient(const Deformation3& v, double h, DiffOrder order) {
  const Grid& G = v.grid();
  const int nq = v.nq();
  std::vector<Mat3Field> out;
  out.reserve(std::size_t(nq));
  for (int q = 0; q < nq; ++q) {
    auto J = jacobian(v.samples[q], order);
    Mat3Field F(v.grid_ptr());
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      Vec3 dt = Vec3::Zero();
      for (int j = 0; j < nq; ++j) dt += v.rule.D(q, j) * v.samples[j][k];
      F[k].leftCols<2>() = J[k];
      F[k].col(2) = dt / h;
    }
    out.push_back(std::move(F));
  }
  return out;
}

inline ShellEmbedding shell_embedding(const ScalarField& v0, const ShellParams& p, DiffOrder order = DiffOrder::fourth) {
  p.validate();
  const Grid& G = v0.grid();
  const double eps = p.depth();
  auto g = gradient(v0, order);
  ShellEmbedding e;
  e.n = VectorField3(v0.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Vec3 m(-eps * g[k].x(), -eps * g[k].y(), 1.0);
    e.n[k] = m / m.norm();
  }
  e.phi_tilde = Deformation3(v0.grid_ptr(), p.nq);
  for (int q = 0; q < p.nq; ++q) {
    double x3 = p.h * e.phi_tilde.rule.t[q];
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      Vec2 x = G.point(k);
      e.phi_tilde.samples[q][k] = Vec3(x.x(), x.y(), eps * v0[k]) + x3 * e.n[k];
    }
  }
  e.b = thickness_gradient(e.phi_tilde, p.h, order);
  for (int q = 0; q < p.nq; ++q) {
    ScalarField d(v0.grid_ptr());
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      e.b[q][k].col(2) = e.n[k];  // exact: d phi_tilde / d x3 = n
      d[k] = e.b[q][k].determinant();
      if (!(d[k] > 0.0)) {
        std::ostringstream os;
        os << "det b^h = " << d[k] << " at " << G.describe(k) << ", t = " << e.phi_tilde.rule.t[q]
           << "; thickness too large for the curvature";
        throw ValidationError("shell_geometry", os.str());
      }
    }
    e.det_b.push_back(std::move(d));
  }
  return e;
}

// Nodal through-thickness integral of fn(q, k, F (b)^-1, det b).
template <class Fn>
ScalarField thickness_integrand(const Deformation3& v, const ShellEmbedding& e, double h, DiffOrder order, Fn&& fn) {
  require_same_grid(v.grid(), e.n.grid(), "energy");
  if (v.nq() != e.phi_tilde.nq()) throw ValidationError("deformation", "thickness sampling differs from the shell's");
  const Grid& G = v.grid();
  auto F = thickness_gradient(v, h, order);
  ScalarField out(v.grid_ptr());
  for (int q = 0; q < v.nq(); ++q)
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      Mat3 Fb = F[q][k] * e.b[q][k].inverse();
      out[k] += v.rule.w[q] * fn(q, k, Fb, e.det_b[q][k]);
    }
  return out;
}

// I^h = (1/h) int_{Omega^h} W(grad v (b)^-1) det b, in flattened coordinates.
inline double energy_3d(const Deformation3& v, const ShellEmbedding& e, const ShellParams& p,
                        DiffOrder order = DiffOrder::fourth) {
  v.validate();
  auto dens = thickness_integrand(v, e, p.h, order, [&](int, std::size_t, const Mat3& Fb, double det) {
    return energy_density(Fb, p.lame) * det;
  });
  return integrate(dens);
}

inline double energy_3d(const Deformation3& v, const ScalarField& v0, const ShellParams& p,
                        DiffOrder order = DiffOrder::fourth) {
  return energy_3d(v, shell_embedding(v0, p, order), p, order);
}

// Distance from F to SO(3).
inline double dist_so3(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1.0;
  Mat3 R = svd.matrixU() * S * svd.matrixV().transpose();
  return (F - R).norm();
}

// (1/h) int dist^2(grad v (b)^-1, SO(3)) det b
inline double rigidity_defect(const Deformation3& v, const ShellEmbedding& e, const ShellParams& p,
                              DiffOrder order = DiffOrder::fourth) {
  auto dens = thickness_integrand(v, e, p.h, order, [&](int, std::size_t, const Mat3& Fb, double det) {
    double d = dist_so3(Fb);
    return d * d * det;
  });
  return integrate(dens);
}

// sqrt(b^T b): the prestrain form of the shell metric, for diagnostics.
inline Mat3 prestrain_tensor(const Mat3& b) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(b.transpose() * b);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// ---- loads

struct LoadMoments {
  double mean = 0.0;   // int f
  Vec2 first{0, 0};    // int x f
  double l2 = 0.0;     // ||f||_L2
  bool balanced(double rel = 1e-8) const {
    double tol = rel * std::max(l2, std::numeric_limits<double>::min());
    return std::abs(mean) <= tol && std::abs(first.x()) <= tol && std::abs(first.y()) <= tol;
  }
};

inline LoadMoments load_moments(const ScalarField& f) {
  const Grid& G = f.grid();
  LoadMoments m;
  m.mean = integrate(f);
  ScalarField xf(f.grid_ptr()), yf(f.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) {
      xf[k] = G.point(k).x() * f[k];
      yf[k] = G.point(k).y() * f[k];
    }
  m.first = {integrate(xf), integrate(yf)};
  m.l2 = field_norm(f, NormKind::L2);
  return m;
}

inline void require_balanced_load(const ScalarField& f, double rel = 1e-8) {
  auto m = load_moments(f);
  if (!m.balanced(rel)) {
    std::ostringstream os;
    os.precision(17);
    os << "load not normalised: int f = " << m.mean << ", int x f = (" << m.first.x() << ", " << m.first.y()
       << "), ||f||_L2 = " << m.l2;
    throw ValidationError("load_moments", os.str());
  }
}

// Removes the L2-best affine part of f so that int f = int x f = 0.
inline ScalarField normalize_load(const ScalarField& f) {
  const Grid& G = f.grid();
  std::vector<ScalarField> basis = {ScalarField(f.grid_ptr(), 1.0),
                                    sample(f.grid_ptr(), [](double x, double) { return x; }),
                                    sample(f.grid_ptr(), [](double, double y) { return y; })};
  auto dot = [&](const ScalarField& a, const ScalarField& b) {
    std::vector<double> v(G.size(), 0.0);
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k)) v[k] = a[k] * b[k];
    return integrate_values(G, v);
  };
  Eigen::Matrix3d M;
  Eigen::Vector3d r;
  for (int a = 0; a < 3; ++a) {
    r[a] = dot(basis[a], f);
    for (int b = 0; b < 3; ++b) M(a, b) = dot(basis[a], basis[b]);
  }
  Eigen::Vector3d c = M.ldlt().solve(r);
  ScalarField out = f;
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) out[k] -= c[0] + c[1] * basis[1][k] + c[2] * basis[2][k];
  return out;
}

struct TotalEnergy {
  double elastic = 0.0;  // I^h
  double load = 0.0;     // (1/h) int h^alpha' f v_3 det b
  double total() const { return elastic - load; }
};

inline TotalEnergy total_energy_parts(const Deformation3& v, const ShellEmbedding& e, const ScalarField& f,
                                      const ShellParams& p, DiffOrder order = DiffOrder::fourth) {
  require_same_grid(f.grid(), v.grid(), "total_energy");
  require_balanced_load(f);
  TotalEnergy out;
  out.elastic = energy_3d(v, e, p, order);
  const Grid& G = v.grid();
  ScalarField lo(v.grid_ptr());
  for (int q = 0; q < v.nq(); ++q)
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k)) lo[k] += v.rule.w[q] * f[k] * v.samples[q][k].z() * e.det_b[q][k];
  out.load = std::pow(p.h, p.force_exponent()) * integrate(lo);
  return out;
}

// J^h = I^h - (1/h) int h^alpha' f v_3 det b
inline double total_energy(const Deformation3& v, const ScalarField& v0, const ScalarField& f, const ShellParams& p,
                           DiffOrder order = DiffOrder::fourth) {
  return total_energy_parts(v, shell_embedding(v0, p, order), f, p, order).total();
}

// ---- limit functionals

// (1/24) int Q2(D^2 v - D^2 v0)
inline double bending_energy(const ScalarField& v, const ScalarField& v0, const Lame& L,
                             DiffOrder order = DiffOrder::second) {
  require_same_grid(v.grid(), v0.grid(), "bending_energy");
  L.validate();
  auto Hv = hessian(v, order), H0 = hessian(v0, order);
  ScalarField q = zip_field(Hv, H0, [&](const Sym2& a, const Sym2& b) { return q2(a - b, L); });
  return integrate(q) / 24.0;
}

inline double load_work(const ScalarField& v, const ScalarField& f) {
  require_same_grid(v.grid(), f.grid(), "load_work");
  return integrate(zip_field(f, v, [](double a, double b) { return a * b; }));
}

// (1/24) int Q2(D^2 v - D^2 v0) - int f v
inline double limit_kirchhoff(const ScalarField& v, const ScalarField& v0, const ScalarField& f, const Lame& L,
                              DiffOrder order = DiffOrder::second) {
  require_same_grid(v.grid(), f.grid(), "limit_kirchhoff");
  return bending_energy(v, v0, L, order) - load_work(v, f);
}

// 1/2 int Q2(sym grad w + 1/2 grad v (x) grad v - 1/2 grad v0 (x) grad v0)
inline double stretching_energy(const VectorField2& w, const ScalarField& v, const ScalarField& v0, const Lame& L,
                                DiffOrder order = DiffOrder::second) {
  require_same_grid(w.grid(), v.grid(), "stretching_energy");
  require_same_grid(v.grid(), v0.grid(), "stretching_energy");
  auto Jw = jacobian(w, order);
  auto gv = gradient(v, order), g0 = gradient(v0, order);
  const Grid& G = v.grid();
  ScalarField q(v.grid_ptr());
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Mat2 S = 0.5 * (Jw[k] + Jw[k].transpose()) + 0.5 * gv[k] * gv[k].transpose() - 0.5 * g0[k] * g0[k].transpose();
    q[k] = q2(Sym2::from(S), L);
  }
  return 0.5 * integrate(q);
}

inline double limit_vonkarman(const VectorField2& w, const ScalarField& v, const ScalarField& v0, const ScalarField& f,
                              const Lame& L, DiffOrder order = DiffOrder::second) {
  return stretching_energy(w, v, v0, L, order) + limit_kirchhoff(v, v0, f, L, order);
}

struct ConstraintCheck {
  ScalarField residual;  // det D^2 v - det D^2 v0
  double l2 = 0.0;
  double c0 = 0.0;
};

inline ConstraintCheck check_constraint(const ScalarField& v, const ScalarField& v0, DiffOrder order = DiffOrder::second) {
  require_same_grid(v.grid(), v0.grid(), "check_constraint");
  ConstraintCheck c;
  c.residual = ma_residual(v, hessian_det(v0, order), order);
  c.l2 = field_norm(c.residual, NormKind::L2);
  c.c0 = field_norm(c.residual, NormKind::C0);
  return c;
}

// ---- DEF3D text format: header, thickness nodes, then one row per node with
// x, y, mask code and the 3 nq sample coordinates.

inline std::string def3d_string(const Deformation3& d) {
  const Grid& G = d.grid();
  FieldTable t{d.grid_ptr(), {}};
  for (int q = 0; q < d.nq(); ++q)
    for (int c = 0; c < 3; ++c) t.components.push_back(component(d.samples[q], c).values());
  std::string body = field2d_string(t);
  body = body.substr(body.find('\n') + 1);
  const Box& b = G.box();
  std::ostringstream os;
  os << "DEF3D " << G.nx() << ' ' << G.ny() << ' ' << d.nq() << ' ' << format_double(b.x0) << ' '
     << format_double(b.x1) << ' ' << format_double(b.y0) << ' ' << format_double(b.y1) << '\n';
  os << 't';
  for (double tq : d.rule.t) os << ' ' << format_double(tq);
  os << '\n' << body;
  return os.str();
}

inline Deformation3 read_def3d(std::istream& is, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty deformation file " + source);
  std::istringstream hs(line);
  std::string magic, sx0, sx1, sy0, sy1;
  int nx = 0, ny = 0, nq = 0;
  hs >> magic >> nx >> ny >> nq >> sx0 >> sx1 >> sy0 >> sy1;
  if (magic != "DEF3D" || !hs || nq < 1) throw ValidationError("format", "bad DEF3D header in " + source);
  if (!std::getline(is, line)) throw ValidationError("format", "missing thickness line in " + source);
  std::istringstream ts(line);
  std::string tag, tok;
  ts >> tag;
  std::vector<double> t;
  while (ts >> tok) t.push_back(parse_double(tok, source));
  if (tag != "t" || int(t.size()) != nq) throw ValidationError("format", "bad thickness line in " + source);
  std::ostringstream field;
  field << "FIELD2D " << nx << ' ' << ny << ' ' << sx0 << ' ' << sx1 << ' ' << sy0 << ' ' << sy1 << ' ' << 3 * nq
        << '\n'
        << is.rdbuf();
  std::istringstream fs(field.str());
  auto table = read_field2d(fs, source);
  Deformation3 d(table.grid, nq);
  for (int q = 0; q < nq; ++q)
    if (std::abs(d.rule.t[q] - t[q]) > 1e-14)
      throw ValidationError("format", "thickness nodes are not the Gauss rule of order " + std::to_string(nq));
  const Grid& G = *table.grid;
  for (int q = 0; q < nq; ++q)
    for (std::size_t k = 0; k < G.size(); ++k)
      if (G.inside(k))
        d.samples[q][k] = Vec3(table.components[3 * q][k], table.components[3 * q + 1][k], table.components[3 * q + 2][k]);
  return d;
}

inline Deformation3 load_def3d(const std::string& path) {
  std::istringstream is(read_file(path));
  return read_def3d(is, path);
}

inline void save_def3d(const std::string& path, const Deformation3& d) { write_atomic(path, def3d_string(d)); }

}  // namespace ssl
