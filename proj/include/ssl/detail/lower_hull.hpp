#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace ssl::detail {

// Points of the hull: integer (x, y) lattice coordinates and a real height.
struct HullPoint {
  std::int64_t x, y;
  double z;
};

// ---- exact arithmetic on floating-point expansions

inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

inline void two_product(double a, double b, double& p, double& e) {
  p = a * b;
  e = std::fma(a, b, -p);
}

// Adds a double to a nonoverlapping expansion (Shewchuk's grow-expansion).
inline void grow_expansion(std::vector<double>& e, double b) {
  double q = b;
  std::vector<double> h;
  h.reserve(e.size() + 1);
  for (double ei : e) {
    double s, err;
    two_sum(q, ei, s, err);
    q = s;
    if (err != 0.0) h.push_back(err);
  }
  if (q != 0.0 || h.empty()) h.push_back(q);
  e.swap(h);
}

// Exact sign of sum_i z_i * c_i with integer-valued c_i.
inline int exact_sign_of_sum(const double* z, const double* c, int n) {
  std::vector<double> e{0.0};
  for (int i = 0; i < n; ++i) {
    if (c[i] == 0.0 || z[i] == 0.0) continue;
    double p, err;
    two_product(z[i], c[i], p, err);
    grow_expansion(e, p);
    if (err != 0.0) grow_expansion(e, err);
  }
  // components are increasing in magnitude; the last nonzero one carries the sign
  for (auto it = e.rbegin(); it != e.rend(); ++it)
    if (*it != 0.0) return *it > 0.0 ? 1 : -1;
  return 0;
}

// Sign of det[b - a; c - a; d - a]. The determinant is linear in the heights
// with integer cofactors, so it is evaluated exactly.
inline int orient3d(const HullPoint& a, const HullPoint& b, const HullPoint& c, const HullPoint& d) {
  auto cross = [](const HullPoint& p, const HullPoint& q, const HullPoint& r) {
    return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
  };
  // expansion along the z column: det = sum_p z_p * C_p
  std::int64_t cb = cross(a, c, d);
  std::int64_t cc = cross(a, d, b);
  std::int64_t cd = cross(a, b, c);
  std::int64_t ca = -(cb + cc + cd);  // translating all heights leaves det unchanged
  double z[4] = {a.z, b.z, c.z, d.z};
  double co[4] = {double(ca), double(cb), double(cc), double(cd)};
  return exact_sign_of_sum(z, co, 4);
}

inline double orient3d_approx(const HullPoint& a, const HullPoint& b, const HullPoint& c, const HullPoint& d) {
  double bx = double(b.x - a.x), by = double(b.y - a.y), bz = b.z - a.z;
  double cx = double(c.x - a.x), cy = double(c.y - a.y), cz = c.z - a.z;
  double dx = double(d.x - a.x), dy = double(d.y - a.y), dz = d.z - a.z;
  return bx * (cy * dz - cz * dy) - by * (cx * dz - cz * dx) + bz * (cx * dy - cy * dx);
}

struct HullFace {
  int v[3];
  int nb[3];  // neighbour across edge (v[e], v[e+1])
  std::vector<int> outside;
  bool alive = true;
};

// 3D convex hull by quickhull with exact visibility tests. Faces are oriented
// so that orient3d(v0, v1, v2, p) > 0 exactly when p lies strictly outside.
// Returns false when all points are coplanar.
inline bool convex_hull_3d(const std::vector<HullPoint>& P, std::vector<HullFace>& faces) {
  const int n = int(P.size());
  faces.clear();
  if (n < 4) return false;
  // initial simplex from extreme points
  int i0 = 0, i1 = 0;
  for (int i = 1; i < n; ++i) {
    if (std::make_pair(P[i].x, P[i].y) < std::make_pair(P[i0].x, P[i0].y)) i0 = i;
  }
  double best = -1;
  for (int i = 0; i < n; ++i) {
    double d = double(P[i].x - P[i0].x) * double(P[i].x - P[i0].x) + double(P[i].y - P[i0].y) * double(P[i].y - P[i0].y);
    if (d > best) { best = d; i1 = i; }
  }
  if (i1 == i0) return false;
  int i2 = -1;
  std::int64_t bc = 0;
  for (int i = 0; i < n; ++i) {
    std::int64_t c = (P[i1].x - P[i0].x) * (P[i].y - P[i0].y) - (P[i1].y - P[i0].y) * (P[i].x - P[i0].x);
    if (std::llabs(c) > bc) { bc = std::llabs(c); i2 = i; }
  }
  if (i2 < 0) return false;  // collinear in the plane
  int i3 = -1;
  double bo = 0;
  for (int i = 0; i < n; ++i) {
    if (orient3d(P[i0], P[i1], P[i2], P[i]) == 0) continue;
    double o = std::abs(orient3d_approx(P[i0], P[i1], P[i2], P[i]));
    if (i3 < 0 || o > bo) { bo = o; i3 = i; }
  }
  if (i3 < 0) return false;  // coplanar

  int s[4] = {i0, i1, i2, i3};
  // faces opposite each simplex vertex, oriented outward
  int fv[4][3] = {{s[1], s[2], s[3]}, {s[0], s[3], s[2]}, {s[0], s[1], s[3]}, {s[0], s[2], s[1]}};
  int opp[4] = {s[0], s[1], s[2], s[3]};
  for (int f = 0; f < 4; ++f) {
    HullFace F;
    std::copy(fv[f], fv[f] + 3, F.v);
    if (orient3d(P[F.v[0]], P[F.v[1]], P[F.v[2]], P[opp[f]]) > 0) std::swap(F.v[1], F.v[2]);
    faces.push_back(F);
  }
  auto key = [](int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); };
  {
    std::unordered_map<std::uint64_t, int> edge;
    for (int f = 0; f < 4; ++f)
      for (int e = 0; e < 3; ++e) edge[key(faces[f].v[e], faces[f].v[(e + 1) % 3])] = f;
    for (int f = 0; f < 4; ++f)
      for (int e = 0; e < 3; ++e) faces[f].nb[e] = edge.at(key(faces[f].v[(e + 1) % 3], faces[f].v[e]));
  }
  auto above = [&](const HullFace& F, int p) { return orient3d(P[F.v[0]], P[F.v[1]], P[F.v[2]], P[p]) > 0; };
  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    for (int f = 0; f < 4; ++f)
      if (above(faces[f], i)) {
        faces[f].outside.push_back(i);
        break;
      }
  }

  std::vector<int> stack = {0, 1, 2, 3};
  std::vector<int> visible, mark;
  std::vector<int> visit_tag;
  int tag = 0;
  while (!stack.empty()) {
    int f = stack.back();
    stack.pop_back();
    if (!faces[f].alive || faces[f].outside.empty()) continue;
    // furthest outside point (approximate distance only guides the choice)
    int apex = -1;
    double far = -std::numeric_limits<double>::infinity();
    for (int p : faces[f].outside) {
      double d = orient3d_approx(P[faces[f].v[0]], P[faces[f].v[1]], P[faces[f].v[2]], P[p]);
      if (d > far) { far = d; apex = p; }
    }
    // visible region by flood fill
    ++tag;
    visit_tag.resize(faces.size(), 0);
    visible.clear();
    std::vector<int> todo = {f};
    visit_tag[f] = tag;
    std::vector<std::pair<int, int>> horizon;  // (face, edge) on the visible side
    while (!todo.empty()) {
      int g = todo.back();
      todo.pop_back();
      visible.push_back(g);
      for (int e = 0; e < 3; ++e) {
        int h = faces[g].nb[e];
        if (visit_tag[h] == tag) continue;
        if (above(faces[h], apex)) {
          visit_tag[h] = tag;
          todo.push_back(h);
        }
      }
    }
    for (int g : visible)
      for (int e = 0; e < 3; ++e)
        if (visit_tag[faces[g].nb[e]] != tag) horizon.emplace_back(g, e);
    // new faces on the horizon
    std::unordered_map<int, int> by_start, by_end;
    std::vector<int> created;
    for (auto [g, e] : horizon) {
      int a = faces[g].v[e], b = faces[g].v[(e + 1) % 3];
      int across = faces[g].nb[e];
      HullFace F;
      F.v[0] = a;
      F.v[1] = b;
      F.v[2] = apex;
      F.nb[0] = across;
      F.nb[1] = F.nb[2] = -1;
      int id = int(faces.size());
      faces.push_back(std::move(F));
      visit_tag.push_back(0);
      for (int k = 0; k < 3; ++k)
        if (faces[across].nb[k] == g) faces[across].nb[k] = id;
      by_start[a] = id;
      by_end[b] = id;
      created.push_back(id);
    }
    for (int id : created) {
      int a = faces[id].v[0], b = faces[id].v[1];
      faces[id].nb[1] = by_start.at(b);  // edge (b, apex)
      faces[id].nb[2] = by_end.at(a);    // edge (apex, a)
    }
    // reassign outside points
    for (int g : visible) {
      faces[g].alive = false;
      for (int p : faces[g].outside) {
        if (p == apex) continue;
        for (int id : created)
          if (above(faces[id], p)) {
            faces[id].outside.push_back(p);
            break;
          }
      }
      faces[g].outside.clear();
      faces[g].outside.shrink_to_fit();
    }
    for (int id : created) stack.push_back(id);
  }
  return true;
}

// Lower convex envelope of heights z over the lattice points; result[i] is the
// envelope value at point i (never above z).
inline std::vector<double> lower_envelope(const std::vector<HullPoint>& P) {
  const int n = int(P.size());
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = P[i].z;
  std::vector<HullFace> faces;
  if (!convex_hull_3d(P, faces)) {
    // coplanar or collinear input: lower hull of the profile along the line when
    // collinear; planar data is already convex
    bool collinear = true;
    if (n >= 3) {
      for (int i = 2; i < n && collinear; ++i)
        collinear = (P[1].x - P[0].x) * (P[i].y - P[0].y) - (P[1].y - P[0].y) * (P[i].x - P[0].x) == 0;
    }
    if (!collinear || n < 3) return out;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::make_pair(P[a].x, P[a].y) < std::make_pair(P[b].x, P[b].y); });
    auto t = [&](int i) { return double((P[i].x - P[idx[0]].x) + (P[i].y - P[idx[0]].y)); };
    std::vector<int> chain;
    for (int i : idx) {
      while (chain.size() >= 2) {
        int a = chain[chain.size() - 2], b = chain.back();
        double cr = (t(b) - t(a)) * (P[i].z - P[a].z) - (P[b].z - P[a].z) * (t(i) - t(a));
        if (cr <= 0) chain.pop_back();
        else break;
      }
      chain.push_back(i);
    }
    for (std::size_t s = 0; s + 1 < chain.size(); ++s) {
      int a = chain[s], b = chain[s + 1];
      for (int i : idx) {
        if (t(i) < t(a) || t(i) > t(b)) continue;
        double w = (t(i) - t(a)) / (t(b) - t(a));
        out[i] = std::min(out[i], (1 - w) * P[a].z + w * P[b].z);
      }
    }
    return out;
  }
  std::int64_t xmin = P[0].x, xmax = P[0].x, ymin = P[0].y, ymax = P[0].y;
  for (auto& p : P) {
    xmin = std::min(xmin, p.x); xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y); ymax = std::max(ymax, p.y);
  }
  std::int64_t W = xmax - xmin + 1;
  std::vector<int> at(std::size_t(W * (ymax - ymin + 1)), -1);
  for (int i = 0; i < n; ++i) at[std::size_t((P[i].y - ymin) * W + (P[i].x - xmin))] = i;
  for (auto& F : faces) {
    if (!F.alive) continue;
    const HullPoint &A = P[F.v[0]], &B = P[F.v[1]], &C = P[F.v[2]];
    std::int64_t area = (B.x - A.x) * (C.y - A.y) - (B.y - A.y) * (C.x - A.x);
    if (area >= 0) continue;  // upper or vertical face
    std::int64_t x0 = std::min({A.x, B.x, C.x}), x1 = std::max({A.x, B.x, C.x});
    std::int64_t y0 = std::min({A.y, B.y, C.y}), y1 = std::max({A.y, B.y, C.y});
    for (std::int64_t y = y0; y <= y1; ++y)
      for (std::int64_t x = x0; x <= x1; ++x) {
        int i = at[std::size_t((y - ymin) * W + (x - xmin))];
        if (i < 0) continue;
        // barycentric weights times the (negative) doubled area
        std::int64_t wa = (B.x - x) * (C.y - y) - (B.y - y) * (C.x - x);
        std::int64_t wb = (C.x - x) * (A.y - y) - (C.y - y) * (A.x - x);
        std::int64_t wc = (A.x - x) * (B.y - y) - (A.y - y) * (B.x - x);
        if (wa > 0 || wb > 0 || wc > 0) continue;
        double v = (double(wa) * A.z + double(wb) * B.z + double(wc) * C.z) / double(area);
        out[i] = std::min(out[i], v);
      }
  }
  return out;
}

}  // namespace ssl::detail
