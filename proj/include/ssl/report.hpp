#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "ssl/convexity.hpp"
#include "ssl/io.hpp"
#include "ssl/recovery.hpp"

namespace ssl {

// Numeric CSV: one header row, shortest round-trip decimals, fixed column order.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::string csv_string(const CsvTable& t) {
  std::ostringstream os;
  for (std::size_t c = 0; c < t.header.size(); ++c) os << (c ? "," : "") << t.header[c];
  os << '\n';
  for (auto& r : t.rows) {
    if (r.size() != t.header.size()) throw ValidationError("report", "row width differs from header");
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_double(r[c]);
    os << '\n';
  }
  return os.str();
}

inline CsvTable parse_csv(const std::string& text, const std::string& source = "<csv>") {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(is, line) || line.empty()) throw ValidationError("format", "missing CSV header in " + source);
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw ValidationError("format", "ragged CSV row in " + source);
    std::vector<double> r;
    for (auto& c : cells) r.push_back(parse_double(c, source));
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline void write_csv(const std::string& path, const CsvTable& t) { write_atomic(path, csv_string(t)); }
inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path), path); }

inline CsvTable scan_table(const ScanReport& r) {
  CsvTable t{{"h", "ratio_I", "ratio_J", "target", "kh_err", "v_h_l2_gap"}, {}};
  for (auto& row : r.rows) t.rows.push_back({row.h, row.ratio_I, row.ratio_J, row.target, row.kh_err, row.v_h_l2_gap});
  return t;
}

inline std::vector<ScanRow> scan_rows(const CsvTable& t) {
  if (t.header != scan_table(ScanReport{}).header) throw ValidationError("format", "not a scan report");
  std::vector<ScanRow> out;
  for (auto& r : t.rows) out.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
  return out;
}

// One row per domain node; label is 0 indeterminate, 1 convex, 2 concave.
inline CsvTable convexity_table(const ConvexityReport& r) {
  CsvTable t{{"x", "y", "det", "label", "singular"}, {}};
  const Grid& G = r.det.grid();
  for (std::size_t k = 0; k < G.size(); ++k) {
    if (!G.inside(k)) continue;
    Vec2 p = G.point(k);
    t.rows.push_back({p.x(), p.y(), r.det[k], double(int(r.labels[k])), double(r.singular[k])});
  }
  return t;
}

struct MatchRow {
  double h = 0.0, z_c0 = 0.0, isometry_residual = 0.0, w22 = 0.0, phi_residual = 0.0;
};

inline CsvTable match_table(const std::vector<MatchRow>& rows) {
  CsvTable t{{"h", "z_c0", "z_c0_over_h", "isometry_residual", "w22", "phi_residual"}, {}};
  for (auto& r : rows) t.rows.push_back({r.h, r.z_c0, r.z_c0 / r.h, r.isometry_residual, r.w22, r.phi_residual});
  return t;
}

}  // namespace ssl
