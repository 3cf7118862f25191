#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "ssl/fields.hpp"

namespace ssl {

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  if (b < e && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw ValidationError("parse", "cannot parse number '" + s + "' in " + what);
  return v;
}

// Writes via a sibling temporary file and renames it into place.
inline void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os << content;
    os.flush();
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into '" + path + "'");
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Multi-component node table in the FIELD2D text format.
struct FieldTable {
  GridPtr grid;
  std::vector<std::vector<double>> components;
};

inline void write_field2d(std::ostream& os, const FieldTable& t) {
  const Grid& G = *t.grid;
  const Box& b = G.box();
  os << "FIELD2D " << G.nx() << ' ' << G.ny() << ' ' << format_double(b.x0) << ' ' << format_double(b.x1)
     << ' ' << format_double(b.y0) << ' ' << format_double(b.y1) << ' ' << t.components.size() << '\n';
  for (std::size_t k = 0; k < G.size(); ++k) {
    Vec2 p = G.point(k);
    os << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << int(G.kind(k));
    for (auto& c : t.components) os << ' ' << format_double(c[k]);
    os << '\n';
  }
}

inline std::string field2d_string(const FieldTable& t) {
  std::ostringstream os;
  write_field2d(os, t);
  return os.str();
}

inline FieldTable read_field2d(std::istream& is, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty field file " + source);
  std::istringstream hs(line);
  std::string magic, sx0, sx1, sy0, sy1;
  int nx = 0, ny = 0;
  std::size_t nc = 0;
  hs >> magic >> nx >> ny >> sx0 >> sx1 >> sy0 >> sy1 >> nc;
  if (magic != "FIELD2D" || !hs) throw ValidationError("format", "bad FIELD2D header in " + source);
  Box box{parse_double(sx0, source), parse_double(sx1, source), parse_double(sy0, source), parse_double(sy1, source)};
  if (nx < 3 || ny < 3) throw ValidationError("format", "grid too small in " + source);
  std::size_t n = std::size_t(nx) * ny;
  std::vector<std::uint8_t> inside(n, 0), codes(n, 0);
  std::vector<std::vector<double>> comps(nc, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::getline(is, line)) throw ValidationError("format", "truncated FIELD2D body in " + source);
    std::istringstream rs(line);
    std::string sx, sy, tok;
    int mask = -1;
    rs >> sx >> sy >> mask;
    if (!rs || mask < 0 || mask > 2)
      throw ValidationError("format", "bad row " + std::to_string(k + 2) + " in " + source);
    inside[k] = mask != 0;
    codes[k] = std::uint8_t(mask);
    for (std::size_t c = 0; c < nc; ++c) {
      if (!(rs >> tok)) throw ValidationError("format", "missing value on row " + std::to_string(k + 2) + " in " + source);
      comps[c][k] = parse_double(tok, source);
      if (inside[k] && !std::isfinite(comps[c][k]))
        throw ValidationError("format", "non-finite value on row " + std::to_string(k + 2) + " in " + source);
    }
  }
  auto grid = std::make_shared<const Grid>(nx, ny, box, inside);
  for (std::size_t k = 0; k < n; ++k)
    if (codes[k] != std::uint8_t(grid->kind(k)))
      throw ValidationError("format", "mask code disagrees with domain shape at " + grid->describe(k) + " in " + source);
  return FieldTable{grid, std::move(comps)};
}

inline FieldTable load_field2d(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_field2d(is, path);
}

inline void save_field2d(const std::string& path, const FieldTable& t) { write_atomic(path, field2d_string(t)); }

inline FieldTable to_table(const ScalarField& f) { return {f.grid_ptr(), {f.values()}}; }

inline FieldTable to_table(const VectorField2& v) {
  return {v.grid_ptr(), {component(v, 0).values(), component(v, 1).values()}};
}

inline FieldTable to_table(const Sym2Field& m) {
  FieldTable t{m.grid_ptr(), std::vector<std::vector<double>>(3, std::vector<double>(m.size()))};
  for (std::size_t k = 0; k < m.size(); ++k) {
    t.components[0][k] = m[k].xx;
    t.components[1][k] = m[k].xy;
    t.components[2][k] = m[k].yy;
  }
  return t;
}

inline ScalarField scalar_from_table(const FieldTable& t, std::size_t c = 0) {
  if (c >= t.components.size()) throw ValidationError("format", "field has no component " + std::to_string(c));
  ScalarField f(t.grid);
  for (std::size_t k = 0; k < f.size(); ++k)
    if (t.grid->inside(k)) f[k] = t.components[c][k];
  return f;
}

inline Sym2Field sym2_from_table(const FieldTable& t) {
  if (t.components.size() != 3) throw ValidationError("format", "symmetric matrix field needs 3 components");
  Sym2Field m(t.grid);
  for (std::size_t k = 0; k < m.size(); ++k)
    if (t.grid->inside(k)) m[k] = Sym2{t.components[0][k], t.components[1][k], t.components[2][k]};
  return m;
}

}  // namespace ssl
