#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "ssl/error.hpp"
#include "ssl/parallel.hpp"

namespace ssl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Symmetric 2x2 matrix stored as three entries.
struct Sym2 {
  double xx = 0.0, xy = 0.0, yy = 0.0;

  static Sym2 identity() { return {1.0, 0.0, 1.0}; }
  static Sym2 diag(double a, double b) { return {a, 0.0, b}; }
  static Sym2 outer(const Vec2& a) { return {a.x() * a.x(), a.x() * a.y(), a.y() * a.y()}; }
  static Sym2 from(const Mat2& m) { return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)}; }

  double det() const { return xx * yy - xy * xy; }
  double trace() const { return xx + yy; }
  Sym2 cof() const { return {yy, -xy, xx}; }
  Sym2 inverse() const {
    double d = det();
    return {yy / d, -xy / d, xx / d};
  }
  Mat2 matrix() const {
    Mat2 m;
    m << xx, xy, xy, yy;
    return m;
  }
  // Frobenius inner product A:B
  double dot(const Sym2& o) const { return xx * o.xx + 2.0 * xy * o.xy + yy * o.yy; }
  double norm2() const { return dot(*this); }
  double min_eig() const {
    double m = 0.5 * (xx + yy), r = std::hypot(0.5 * (xx - yy), xy);
    return m - r;
  }
  double max_eig() const {
    double m = 0.5 * (xx + yy), r = std::hypot(0.5 * (xx - yy), xy);
    return m + r;
  }
  Vec2 operator*(const Vec2& v) const { return {xx * v.x() + xy * v.y(), xy * v.x() + yy * v.y()}; }

  Sym2& operator+=(const Sym2& o) {
    xx += o.xx; xy += o.xy; yy += o.yy;
    return *this;
  }
  Sym2& operator-=(const Sym2& o) {
    xx -= o.xx; xy -= o.xy; yy -= o.yy;
    return *this;
  }
  Sym2& operator*=(double s) {
    xx *= s; xy *= s; yy *= s;
    return *this;
  }
  friend Sym2 operator+(Sym2 a, const Sym2& b) { return a += b; }
  friend Sym2 operator-(Sym2 a, const Sym2& b) { return a -= b; }
  friend Sym2 operator*(Sym2 a, double s) { return a *= s; }
  friend Sym2 operator*(double s, Sym2 a) { return a *= s; }
  friend Sym2 operator-(Sym2 a) { return a *= -1.0; }
  friend bool operator==(const Sym2&, const Sym2&) = default;
};

struct Box {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  friend bool operator==(const Box&, const Box&) = default;
};

enum class NodeKind : std::uint8_t { outside = 0, interior = 1, boundary = 2 };

class Grid;
using GridPtr = std::shared_ptr<const Grid>;

// Tensor grid over a bounding box with an inside-domain mask. A domain node is
// a boundary node when a 4-neighbour is outside the mask or off the grid.
class Grid {
 public:
  Grid(int nx, int ny, Box box, const std::vector<std::uint8_t>& inside, std::size_t pruned = 0)
      : nx_(nx), ny_(ny), box_(box), pruned_(pruned) {
    if (nx < 3 || ny < 3)
      throw ValidationError("grid", "nx, ny must be >= 3, got " + std::to_string(nx) + "x" + std::to_string(ny));
    if (!(box.x1 > box.x0) || !(box.y1 > box.y0) || !std::isfinite(box.x0 + box.x1 + box.y0 + box.y1))
      throw ValidationError("grid", "bounding box must have positive finite extent");
    if (inside.size() != size())
      throw ValidationError("grid", "mask size " + std::to_string(inside.size()) + " != " + std::to_string(size()));
    hx_ = (box.x1 - box.x0) / (nx - 1);
    hy_ = (box.y1 - box.y0) / (ny - 1);
    kind_.assign(size(), NodeKind::outside);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        std::size_t k = index(i, j);
        if (!inside[k]) continue;
        bool edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1 || !inside[index(i - 1, j)] ||
                    !inside[index(i + 1, j)] || !inside[index(i, j - 1)] || !inside[index(i, j + 1)];
        kind_[k] = edge ? NodeKind::boundary : NodeKind::interior;
        ++count_;
      }
    if (count_ == 0) throw ValidationError("grid", "mask selects no nodes");
    build_runs();
  }

  static GridPtr rectangle(int nx, int ny, Box box = {}) {
    return std::make_shared<const Grid>(nx, ny, box, std::vector<std::uint8_t>(std::size_t(nx) * ny, 1));
  }
  static GridPtr square(int n) { return rectangle(n, n, Box{}); }

  // n x n nodes on the disk's bounding square. Nodes whose row or column run is
  // shorter than min_run cannot carry a stencil and are dropped repeatedly.
  static GridPtr disk(int n, Vec2 center = Vec2::Zero(), double radius = 1.0, int min_run = 4) {
    if (!(radius > 0.0)) throw ValidationError("grid", "disk radius must be positive");
    Box box{center.x() - radius, center.x() + radius, center.y() - radius, center.y() + radius};
    std::vector<std::uint8_t> in(std::size_t(n) * n, 0);
    double h = 2.0 * radius / (n - 1);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        double x = -radius + i * h, y = -radius + j * h;
        in[std::size_t(j) * n + i] = std::hypot(x, y) <= radius * (1.0 + 1e-12);
      }
    std::size_t pruned = prune_short_runs(n, n, in, min_run);
    return std::make_shared<const Grid>(n, n, box, in, pruned);
  }

  static std::size_t prune_short_runs(int nx, int ny, std::vector<std::uint8_t>& in, int min_run) {
    std::size_t removed_total = 0;
    for (;;) {
      std::vector<std::size_t> drop;
      auto at = [&](int i, int j) { return in[std::size_t(j) * nx + i] != 0; };
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          if (!at(i, j)) continue;
          int a = i, b = i, c = j, d = j;
          while (a > 0 && at(a - 1, j)) --a;
          while (b < nx - 1 && at(b + 1, j)) ++b;
          while (c > 0 && at(i, c - 1)) --c;
          while (d < ny - 1 && at(i, d + 1)) ++d;
          if (b - a + 1 < min_run || d - c + 1 < min_run) drop.push_back(std::size_t(j) * nx + i);
        }
      if (drop.empty()) break;
      for (auto k : drop) in[k] = 0;
      removed_total += drop.size();
    }
    return removed_total;
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  const Box& box() const { return box_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  std::size_t size() const { return std::size_t(nx_) * ny_; }
  std::size_t domain_count() const { return count_; }
  std::size_t pruned_count() const { return pruned_; }

  std::size_t index(int i, int j) const { return std::size_t(j) * nx_ + i; }
  int i_of(std::size_t k) const { return int(k % nx_); }
  int j_of(std::size_t k) const { return int(k / nx_); }
  double x(int i) const { return i == nx_ - 1 ? box_.x1 : box_.x0 + i * hx_; }
  double y(int j) const { return j == ny_ - 1 ? box_.y1 : box_.y0 + j * hy_; }
  Vec2 point(std::size_t k) const { return {x(i_of(k)), y(j_of(k))}; }

  NodeKind kind(std::size_t k) const { return kind_[k]; }
  bool inside(std::size_t k) const { return kind_[k] != NodeKind::outside; }
  bool inside(int i, int j) const {
    return i >= 0 && j >= 0 && i < nx_ && j < ny_ && inside(index(i, j));
  }
  bool interior(std::size_t k) const { return kind_[k] == NodeKind::interior; }
  bool boundary(std::size_t k) const { return kind_[k] == NodeKind::boundary; }
  const std::vector<NodeKind>& kinds() const { return kind_; }

  // Contiguous in-domain run through node k along x (i indices) and y (j indices).
  int run_lo(std::size_t k, int axis) const { return axis == 0 ? xlo_[k] : ylo_[k]; }
  int run_hi(std::size_t k, int axis) const { return axis == 0 ? xhi_[k] : yhi_[k]; }

  std::string describe(std::size_t k) const {
    std::ostringstream os;
    os.precision(6);
    os << "node (" << i_of(k) << "," << j_of(k) << ") at (" << x(i_of(k)) << "," << y(j_of(k)) << ")";
    return os.str();
  }

  // In-domain node closest to the box centre.
  std::size_t center_node() const {
    Vec2 c{0.5 * (box_.x0 + box_.x1), 0.5 * (box_.y0 + box_.y1)};
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < size(); ++k) {
      if (!inside(k)) continue;
      double d = (point(k) - c).squaredNorm();
      if (d < bd - 1e-15) {
        bd = d;
        best = k;
      }
    }
    return best;
  }

  std::vector<std::size_t> domain_nodes() const {
    std::vector<std::size_t> out;
    out.reserve(count_);
    for (std::size_t k = 0; k < size(); ++k)
      if (inside(k)) out.push_back(k);
    return out;
  }

  bool same_as(const Grid& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && box_ == o.box_ && kind_ == o.kind_;
  }

 private:
  void build_runs() {
    xlo_.assign(size(), -1); xhi_.assign(size(), -1);
    ylo_.assign(size(), -1); yhi_.assign(size(), -1);
    for (int j = 0; j < ny_; ++j) {
      int i = 0;
      while (i < nx_) {
        if (!inside(index(i, j))) { ++i; continue; }
        int a = i;
        while (i < nx_ && inside(index(i, j))) ++i;
        for (int t = a; t < i; ++t) { xlo_[index(t, j)] = a; xhi_[index(t, j)] = i - 1; }
      }
    }
    for (int i = 0; i < nx_; ++i) {
      int j = 0;
      while (j < ny_) {
        if (!inside(index(i, j))) { ++j; continue; }
        int a = j;
        while (j < ny_ && inside(index(i, j))) ++j;
        for (int t = a; t < j; ++t) { ylo_[index(i, t)] = a; yhi_[index(i, t)] = j - 1; }
      }
    }
  }

  int nx_, ny_;
  Box box_;
  double hx_ = 0.0, hy_ = 0.0;
  std::size_t count_ = 0, pruned_ = 0;
  std::vector<NodeKind> kind_;
  std::vector<int> xlo_, xhi_, ylo_, yhi_;
};

template <class T>
T zero_value() {
  if constexpr (std::is_arithmetic_v<T>) return T(0);
  else if constexpr (requires { T::Zero(); }) return T::Zero();
  else return T{};
}

// One value per grid node; nodes outside the mask hold zero.
template <class T>
class NodeField {
 public:
  using value_type = T;

  NodeField() = default;
  explicit NodeField(GridPtr g) : grid_(std::move(g)), v_(grid_->size(), zero_value<T>()) {}
  NodeField(GridPtr g, const T& fill) : grid_(std::move(g)), v_(grid_->size(), zero_value<T>()) {
    for (std::size_t k = 0; k < v_.size(); ++k)
      if (grid_->inside(k)) v_[k] = fill;
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return !grid_; }

  T& operator[](std::size_t k) { return v_[k]; }
  const T& operator[](std::size_t k) const { return v_[k]; }
  T& at(int i, int j) { return v_[grid_->index(i, j)]; }
  const T& at(int i, int j) const { return v_[grid_->index(i, j)]; }
  std::vector<T>& values() { return v_; }
  const std::vector<T>& values() const { return v_; }

 private:
  GridPtr grid_;
  std::vector<T> v_;
};

using ScalarField = NodeField<double>;
using VectorField2 = NodeField<Vec2>;
using VectorField3 = NodeField<Vec3>;
using Sym2Field = NodeField<Sym2>;
using Mat2Field = NodeField<Mat2>;
using Mat3Field = NodeField<Mat3>;

inline void require_same_grid(const Grid& a, const Grid& b, const std::string& what) {
  if (&a == &b) return;
  if (!a.same_as(b))
    throw GridMismatch(what + ": fields live on different grids (" + std::to_string(a.nx()) + "x" +
                       std::to_string(a.ny()) + " vs " + std::to_string(b.nx()) + "x" +
                       std::to_string(b.ny()) + ")");
}

// Evaluates fn(x, y) at every in-domain node.
template <class F>
auto sample(const GridPtr& g, F&& fn) {
  using T = std::decay_t<decltype(fn(0.0, 0.0))>;
  NodeField<T> out(g);
  const Grid& G = *g;
  parallel_for(G.size(), [&](std::size_t k) {
    if (!G.inside(k)) return;
    Vec2 p = G.point(k);
    out[k] = fn(p.x(), p.y());
  });
  return out;
}

// Applies fn to each in-domain value.
template <class T, class F>
auto map_field(const NodeField<T>& a, F&& fn) {
  using R = std::decay_t<decltype(fn(a[0]))>;
  NodeField<R> out(a.grid_ptr());
  const Grid& G = a.grid();
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) out[k] = fn(a[k]);
  return out;
}

template <class T, class U, class F>
auto zip_field(const NodeField<T>& a, const NodeField<U>& b, F&& fn) {
  require_same_grid(a.grid(), b.grid(), "zip");
  using R = std::decay_t<decltype(fn(a[0], b[0]))>;
  NodeField<R> out(a.grid_ptr());
  const Grid& G = a.grid();
  for (std::size_t k = 0; k < G.size(); ++k)
    if (G.inside(k)) out[k] = fn(a[k], b[k]);
  return out;
}

template <class T>
NodeField<T> operator+(const NodeField<T>& a, const NodeField<T>& b) {
  return zip_field(a, b, [](const T& p, const T& q) -> T { return p + q; });
}
template <class T>
NodeField<T> operator-(const NodeField<T>& a, const NodeField<T>& b) {
  return zip_field(a, b, [](const T& p, const T& q) -> T { return p - q; });
}
template <class T>
NodeField<T> operator*(double s, const NodeField<T>& a) {
  return map_field(a, [s](const T& p) -> T { return s * p; });
}

inline ScalarField component(const VectorField2& v, int c) {
  return map_field(v, [c](const Vec2& p) { return p[c]; });
}
inline ScalarField component(const VectorField3& v, int c) {
  return map_field(v, [c](const Vec3& p) { return p[c]; });
}

// ---------------------------------------------------------------- stencils

enum class DiffOrder { second = 2, fourth = 4 };

// Weights of the m-th derivative at z for nodes x (Fornberg's recursion).
inline std::vector<double> fornberg_weights(double z, const std::vector<double>& x, int m) {
  const int n = int(x.size()) - 1;
  std::vector<std::vector<double>> c(x.size(), std::vector<double>(m + 1, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    int mn = std::min(i, m);
    double c2 = 1.0, c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = c[i][m];
  return w;
}

struct Stencil1D {
  int first = 0;  // offset of the first point relative to the node
  std::vector<double> w;  // unit-spacing weights
};

// Centred stencil when it fits inside the run [lo, hi], otherwise the shortest
// one-sided stencil of the same order shifted into the run. Returns false when
// the run is too short.
inline bool make_stencil(int pos, int lo, int hi, int deriv, int order, Stencil1D& out) {
  int half = (deriv + 1) / 2 + order / 2 - 1;
  if (pos - half >= lo && pos + half <= hi) {
    out.first = -half;
  } else {
    int width = deriv + order;
    if (hi - lo + 1 < width) return false;
    int start = std::clamp(pos - width / 2, lo, hi - width + 1);
    out.first = start - pos;
    half = -1;
    std::vector<double> x(width);
    for (int t = 0; t < width; ++t) x[t] = out.first + t;
    out.w = fornberg_weights(0.0, x, deriv);
    return true;
  }
  std::vector<double> x(2 * half + 1);
  for (int t = 0; t < int(x.size()); ++t) x[t] = out.first + t;
  out.w = fornberg_weights(0.0, x, deriv);
  if (deriv == 1) out.w[half] = 0.0;  // exact zero for the centre weight
  return true;
}

// Sparse finite-difference operators on a grid. Rows of outside nodes are empty.
struct DiffOperators {
  GridPtr grid;
  DiffOrder order = DiffOrder::second;
  SpMat d1, d2, d11, d22, d12;
  std::vector<std::size_t> unsupported;  // in-domain nodes without stencil support

  static DiffOperators build(const GridPtr& g, DiffOrder order) {
    DiffOperators ops;
    ops.grid = g;
    ops.order = order;
    const Grid& G = *g;
    const int p = int(order);
    std::vector<std::uint8_t> bad(G.size(), 0);
    auto axis_op = [&](int axis, int deriv) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(G.domain_count() * (deriv + p + 1));
      double h = axis == 0 ? G.hx() : G.hy();
      double scale = deriv == 1 ? 1.0 / h : 1.0 / (h * h);
      for (std::size_t k = 0; k < G.size(); ++k) {
        if (!G.inside(k)) continue;
        int i = G.i_of(k), j = G.j_of(k);
        int pos = axis == 0 ? i : j;
        Stencil1D st;
        if (!make_stencil(pos, G.run_lo(k, axis), G.run_hi(k, axis), deriv, p, st)) {
          bad[k] = 1;
          continue;
        }
        for (std::size_t t = 0; t < st.w.size(); ++t) {
          if (st.w[t] == 0.0) continue;
          int q = pos + st.first + int(t);
          std::size_t col = axis == 0 ? G.index(q, j) : G.index(i, q);
          trip.emplace_back(int(k), int(col), st.w[t] * scale);
        }
      }
      SpMat m(int(G.size()), int(G.size()));
      m.setFromTriplets(trip.begin(), trip.end());
      m.makeCompressed();
      return m;
    };
    ops.d1 = axis_op(0, 1);
    ops.d2 = axis_op(1, 1);
    ops.d11 = axis_op(0, 2);
    ops.d22 = axis_op(1, 2);
    ops.d12 = SpMat(ops.d2 * ops.d1);
    // the cross derivative also depends on neighbours' stencils
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k) || bad[k]) continue;
      int i = G.i_of(k);
      Stencil1D st;
      if (!make_stencil(G.j_of(k), G.run_lo(k, 1), G.run_hi(k, 1), 1, p, st)) continue;
      for (std::size_t t = 0; t < st.w.size(); ++t) {
        std::size_t q = G.index(i, G.j_of(k) + st.first + int(t));
        if (bad[q] && st.w[t] != 0.0) { bad[k] = 1; break; }
      }
    }
    for (std::size_t k = 0; k < G.size(); ++k)
      if (bad[k]) ops.unsupported.push_back(k);
    return ops;
  }

  bool supported(std::size_t k) const {
    return !std::binary_search(unsupported.begin(), unsupported.end(), k);
  }

  void require_support() const {
    if (!unsupported.empty())
      throw StencilError("finite-difference stencil exits the domain at " + grid->describe(unsupported.front()) +
                         " (" + std::to_string(unsupported.size()) + " node(s) affected)");
  }
};

// Operators are immutable; they are cached per grid so repeated calls share them.
inline std::shared_ptr<const DiffOperators> diff_operators(const GridPtr& g, DiffOrder order) {
  static std::mutex m;
  static std::map<std::pair<const Grid*, int>, std::pair<std::weak_ptr<const Grid>, std::shared_ptr<const DiffOperators>>> cache;
  std::lock_guard<std::mutex> lock(m);
  for (auto it = cache.begin(); it != cache.end();) {
    if (it->second.first.expired()) it = cache.erase(it);
    else ++it;
  }
  auto key = std::make_pair(g.get(), int(order));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second.second;
  auto ops = std::make_shared<const DiffOperators>(DiffOperators::build(g, order));
  cache.emplace(key, std::make_pair(std::weak_ptr<const Grid>(g), ops));
  return ops;
}

inline ScalarField apply(const SpMat& D, const ScalarField& f) {
  ScalarField out(f.grid_ptr());
  Eigen::Map<const Eigen::VectorXd> x(f.values().data(), Eigen::Index(f.size()));
  Eigen::Map<Eigen::VectorXd> y(out.values().data(), Eigen::Index(out.size()));
  y.noalias() = D * x;
  return out;
}

inline VectorField2 gradient(const ScalarField& f, DiffOrder order = DiffOrder::second) {
  auto ops = diff_operators(f.grid_ptr(), order);
  ops->require_support();
  ScalarField a = apply(ops->d1, f), b = apply(ops->d2, f);
  VectorField2 out(f.grid_ptr());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = Vec2(a[k], b[k]);
  return out;
}

inline Sym2Field hessian(const ScalarField& f, DiffOrder order = DiffOrder::second) {
  auto ops = diff_operators(f.grid_ptr(), order);
  ops->require_support();
  ScalarField a = apply(ops->d11, f), b = apply(ops->d12, f), c = apply(ops->d22, f);
  Sym2Field out(f.grid_ptr());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = Sym2{a[k], b[k], c[k]};
  return out;
}

// Columns are the x- and y-derivatives of a 2-vector field.
inline Mat2Field jacobian(const VectorField2& v, DiffOrder order = DiffOrder::second) {
  auto ops = diff_operators(v.grid_ptr(), order);
  ops->require_support();
  Mat2Field out(v.grid_ptr());
  for (int c = 0; c < 2; ++c) {
    ScalarField vc = component(v, c);
    ScalarField a = apply(ops->d1, vc), b = apply(ops->d2, vc);
    for (std::size_t k = 0; k < v.size(); ++k) {
      out[k](c, 0) = a[k];
      out[k](c, 1) = b[k];
    }
  }
  return out;
}

inline NodeField<Mat32> jacobian(const VectorField3& v, DiffOrder order = DiffOrder::second) {
  auto ops = diff_operators(v.grid_ptr(), order);
  ops->require_support();
  NodeField<Mat32> out(v.grid_ptr());
  for (int c = 0; c < 3; ++c) {
    ScalarField vc = component(v, c);
    ScalarField a = apply(ops->d1, vc), b = apply(ops->d2, vc);
    for (std::size_t k = 0; k < v.size(); ++k) {
      out[k](c, 0) = a[k];
      out[k](c, 1) = b[k];
    }
  }
  return out;
}

// Value, gradient and Hessian at a node.
struct Jet {
  double v = 0.0;
  Vec2 g = Vec2::Zero();
  Sym2 H;
};

inline NodeField<Jet> jets(const ScalarField& f, DiffOrder order = DiffOrder::second) {
  auto g = gradient(f, order);
  auto H = hessian(f, order);
  NodeField<Jet> out(f.grid_ptr());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = Jet{f[k], g[k], H[k]};
  return out;
}

// ---------------------------------------------------------------- quadrature

// Composite trapezoid rule over cells whose four corners are in the domain
// (and flagged by keep, when given).
inline double integrate_values(const Grid& G, const std::vector<double>& v,
                               const std::vector<std::uint8_t>* keep = nullptr) {
  std::vector<double> cells;
  cells.reserve(G.size());
  auto ok = [&](int i, int j) {
    std::size_t k = G.index(i, j);
    return G.inside(k) && (!keep || (*keep)[k]);
  };
  const double w = 0.25 * G.hx() * G.hy();
  for (int j = 0; j + 1 < G.ny(); ++j)
    for (int i = 0; i + 1 < G.nx(); ++i) {
      if (!ok(i, j) || !ok(i + 1, j) || !ok(i, j + 1) || !ok(i + 1, j + 1)) continue;
      cells.push_back(w * (v[G.index(i, j)] + v[G.index(i + 1, j)] + v[G.index(i, j + 1)] +
                           v[G.index(i + 1, j + 1)]));
    }
  if (cells.empty()) throw ValidationError("empty_domain", "integration domain contains no complete cell");
  return pairwise_sum(cells);
}

inline double integrate(const ScalarField& f) { return integrate_values(f.grid(), f.values()); }

enum class NormKind { C0, L2, W22 };

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "C0" || s == "c0") return NormKind::C0;
  if (s == "L2" || s == "l2") return NormKind::L2;
  if (s == "W22" || s == "w22") return NormKind::W22;
  throw ValidationError("norm_kind", "unknown norm kind '" + s + "'");
}

struct NormDetail {
  double value = 0.0;
  std::size_t excluded = 0;  // nodes dropped for lack of stencil support
};

namespace detail {
inline NormDetail norm_components(const std::vector<const ScalarField*>& comps, NormKind kind, DiffOrder order) {
  const Grid& G = comps.front()->grid();
  NormDetail out;
  if (kind == NormKind::C0) {
    double m = 0.0;
    for (std::size_t k = 0; k < G.size(); ++k) {
      if (!G.inside(k)) continue;
      double s = 0.0;
      for (auto* c : comps) s += (*c)[k] * (*c)[k];
      m = std::max(m, std::sqrt(s));
    }
    out.value = m;
    return out;
  }
  std::vector<double> integrand(G.size(), 0.0);
  for (auto* c : comps)
    for (std::size_t k = 0; k < G.size(); ++k) integrand[k] += (*c)[k] * (*c)[k];
  if (kind == NormKind::L2) {
    out.value = std::sqrt(integrate_values(G, integrand));
    return out;
  }
  auto ops = diff_operators(comps.front()->grid_ptr(), order);
  std::vector<std::uint8_t> keep(G.size(), 1);
  for (auto k : ops->unsupported) keep[k] = 0;
  out.excluded = ops->unsupported.size();
  for (auto* c : comps) {
    ScalarField a = apply(ops->d1, *c), b = apply(ops->d2, *c);
    ScalarField xx = apply(ops->d11, *c), xy = apply(ops->d12, *c), yy = apply(ops->d22, *c);
    for (std::size_t k = 0; k < G.size(); ++k)
      integrand[k] += a[k] * a[k] + b[k] * b[k] + xx[k] * xx[k] + 2.0 * xy[k] * xy[k] + yy[k] * yy[k];
  }
  out.value = std::sqrt(integrate_values(G, integrand, &keep));
  return out;
}
}  // namespace detail

inline NormDetail field_norm_detail(const ScalarField& f, NormKind kind, DiffOrder order = DiffOrder::second) {
  return detail::norm_components({&f}, kind, order);
}

inline double field_norm(const ScalarField& f, NormKind kind, DiffOrder order = DiffOrder::second) {
  return field_norm_detail(f, kind, order).value;
}

// Vector norms combine the components' pointwise Euclidean magnitudes.
inline double field_norm(const VectorField2& v, NormKind kind, DiffOrder order = DiffOrder::second) {
  ScalarField a = component(v, 0), b = component(v, 1);
  return detail::norm_components({&a, &b}, kind, order).value;
}

inline double field_norm(const VectorField3& v, NormKind kind, DiffOrder order = DiffOrder::second) {
  ScalarField a = component(v, 0), b = component(v, 1), c = component(v, 2);
  return detail::norm_components({&a, &b, &c}, kind, order).value;
}

inline double max_abs(const ScalarField& f) { return field_norm(f, NormKind::C0); }

// ---------------------------------------------------------------- interpolation

namespace detail {
inline void cubic_weights(double t, double w[4]) {
  // nodes at -1, 0, 1, 2
  w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
  w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
  w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
}
}  // namespace detail

// Tensor cubic Lagrange interpolation from the surrounding 4x4 block; falls
// back to bilinear when the block leaves the domain.
inline double interpolate(const ScalarField& f, double x, double y) {
  const Grid& G = f.grid();
  double s = (x - G.box().x0) / G.hx(), r = (y - G.box().y0) / G.hy();
  const double eps = 1e-9;
  if (s < -eps || r < -eps || s > G.nx() - 1 + eps || r > G.ny() - 1 + eps)
    throw ValidationError("interpolate", "point outside grid");
  int i0 = std::clamp(int(std::floor(s)), 0, G.nx() - 2);
  int j0 = std::clamp(int(std::floor(r)), 0, G.ny() - 2);
  int ib = std::clamp(i0 - 1, 0, G.nx() - 4), jb = std::clamp(j0 - 1, 0, G.ny() - 4);
  bool full = true;
  for (int b = 0; b < 4 && full; ++b)
    for (int a = 0; a < 4; ++a)
      if (!G.inside(ib + a, jb + b)) { full = false; break; }
  if (full) {
    double wx[4], wy[4];
    detail::cubic_weights(s - ib - 1, wx);
    detail::cubic_weights(r - jb - 1, wy);
    double acc = 0.0;
    for (int b = 0; b < 4; ++b) {
      double row = 0.0;
      for (int a = 0; a < 4; ++a) row += wx[a] * f.at(ib + a, jb + b);
      acc += wy[b] * row;
    }
    return acc;
  }
  if (!G.inside(i0, j0) || !G.inside(i0 + 1, j0) || !G.inside(i0, j0 + 1) || !G.inside(i0 + 1, j0 + 1))
    throw ValidationError("interpolate", "point outside domain");
  double tx = s - i0, ty = r - j0;
  return (1 - tx) * (1 - ty) * f.at(i0, j0) + tx * (1 - ty) * f.at(i0 + 1, j0) +
         (1 - tx) * ty * f.at(i0, j0 + 1) + tx * ty * f.at(i0 + 1, j0 + 1);
}

}  // namespace ssl
