// Command-line driver: ma, match, gamma, convexity, fixtures and energy subcommands.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssl/ssl.hpp"

using namespace ssl;

namespace {

struct GridOpts {
  int n = 65;
  std::string domain = "square";
  std::vector<double> box;  // x0,x1,y0,y1

  void add(CLI::App* app) {
    app->add_option("--grid", n, "nodes per side")->check(CLI::Range(5, 4097));
    app->add_option("--domain", domain, "square or disk")->check(CLI::IsMember({"square", "disk"}));
    app->add_option("--box", box, "x0,x1,y0,y1 for the square domain")->delimiter(',')->expected(4);
  }

  GridPtr make(Box fallback = {}) const {
    if (domain == "disk") return Grid::disk(n);
    Box b = fallback;
    if (!box.empty()) {
      b = Box{box[0], box[1], box[2], box[3]};
      if (!(b.x1 > b.x0 && b.y1 > b.y0)) throw ValidationError("config", "box must have x0 < x1 and y0 < y1");
    }
    return Grid::rectangle(n, n, b);
  }
};

bool names_file(const std::string& s) {
  return s.ends_with(".f2d") || s.ends_with(".txt") || std::filesystem::is_regular_file(s);
}

// A field argument is a FIELD2D path, "zero", or an expression in x and y.
ScalarField resolve_field(const std::string& arg, const GridPtr& g, const std::string& what) {
  if (arg == "zero") return ScalarField(g);
  if (names_file(arg)) {
    auto f = scalar_from_table(load_field2d(arg));
    if (!f.grid().same_as(*g)) throw GridMismatch(what + " field '" + arg + "' is on a different grid");
    return f;
  }
  return sample_expression(g, arg);
}

// Grid of the first file argument, otherwise the one described by the options.
GridPtr pick_grid(const GridOpts& go, const std::vector<std::string>& fields, Box fallback = {}) {
  for (auto& s : fields)
    if (s != "zero" && names_file(s)) return load_field2d(s).grid;
  return go.make(fallback);
}

DiffOrder parse_order(int o) {
  if (o == 2) return DiffOrder::second;
  if (o == 4) return DiffOrder::fourth;
  throw ValidationError("config", "order must be 2 or 4");
}

void print(const std::string& key, double v) { std::cout << key << '=' << format_double(v) << '\n'; }

// v with det D^2 v = det D^2 v0 at interior nodes and v's boundary values
ScalarField project_constraint(const ScalarField& v0, const ScalarField& v, DiffOrder order) {
  MAOptions o;
  o.order = order;
  o.tol = 1e-12;
  return solve_ma({hessian_det(v0, order), v, std::nullopt}, v, o).u;
}

// key=value lines with # comments; each key becomes --key unless already given.
std::vector<std::string> inject_config(CLI::App& app, std::vector<std::string> args) {
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;
  std::vector<std::size_t> cmd;
  for (std::size_t i = 0; i < rest.size() && cmd.size() < 2; ++i)
    if (!rest[i].starts_with("-")) cmd.push_back(i);
  if (cmd.size() < 2 || cmd[0] != 0 || cmd[1] != 1) throw CLI::ParseError("--config needs a subcommand first", 2);
  CLI::App* leaf = app.get_subcommand_no_throw(rest[0]);
  if (leaf) leaf = leaf->get_subcommand_no_throw(rest[1]);
  if (!leaf) throw CLI::ParseError("unknown command '" + rest[0] + " " + rest[1] + "'", 2);

  std::string text = read_file(path);
  std::vector<std::string> injected;
  std::size_t lineno = 0;
  std::istringstream is(text);
  std::string line;
  auto trim = [](std::string s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config", path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!leaf->get_option_no_throw("--" + key))
      throw ValidationError("config", path + ":" + std::to_string(lineno) + ": unknown key '" + key + "' for " +
                                          rest[0] + " " + rest[1]);
    bool given = false;
    for (auto& a : rest) given = given || a == "--" + key || a.starts_with("--" + key + "=");
    if (given) continue;
    injected.push_back(value.empty() ? "--" + key : "--" + key + "=" + value);
  }
  rest.insert(rest.begin() + 2, injected.begin(), injected.end());
  return rest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monge-Ampere constrained shallow-shell laboratory"};
  app.set_help_flag("--help", "print this help and exit");  // -h is taken by the thickness
  app.require_subcommand(1);
  app.add_option("--config", "key=value file; command-line options take precedence");

  // ---- ma solve
  auto* ma = app.add_subcommand("ma", "Monge-Ampere solver")->require_subcommand(1);
  auto* ma_solve = ma->add_subcommand("solve", "solve det D^2 u = f with Dirichlet data");
  GridOpts ma_grid;
  std::string ma_f = "1", ma_bd, ma_out;
  double ma_tol = 1e-10;
  int ma_order = 2, ma_iter = 30;
  ma_grid.add(ma_solve);
  ma_solve->add_option("--f", ma_f, "right-hand side");
  ma_solve->add_option("--boundary", ma_bd, "Dirichlet data")->required();
  ma_solve->add_option("--tol", ma_tol);
  ma_solve->add_option("--order", ma_order, "finite-difference order, 2 or 4");
  ma_solve->add_option("--max-iter", ma_iter);
  ma_solve->add_option("--out", ma_out, "FIELD2D output");

  // ---- match run
  auto* match = app.add_subcommand("match", "matching displacement")->require_subcommand(1);
  auto* match_run = match->add_subcommand("run", "solve Phi(h, z) = 0 and immerse the corrected metric");
  GridOpts mt_grid;
  std::string mt_v0, mt_v, mt_out;
  std::vector<double> mt_sweep;
  std::optional<double> mt_h;
  MatchOptions mt_opt;
  bool mt_project = false;
  mt_grid.add(match_run);
  match_run->add_option("--v0", mt_v0)->required();
  match_run->add_option("--v", mt_v)->required();
  match_run->add_option("--h", mt_h);
  match_run->add_option("--sweep", mt_sweep, "h1,h2,...")->delimiter(',');
  match_run->add_option("--out", mt_out, "CSV report");
  match_run->add_option("--tol", mt_opt.tol);
  match_run->add_option("--isometry-tol", mt_opt.isometry_tol);
  match_run->add_option("--constraint-tol", mt_opt.constraint_tol);
  match_run->add_option("--max-iter", mt_opt.max_iter);
  match_run->add_flag("--frozen", mt_opt.frozen, "reuse the linearisation at (0, 0)");
  match_run->add_flag("--project", mt_project, "replace v by the discrete solution of det D^2 v = det D^2 v0");

  // ---- gamma scan
  auto* gamma = app.add_subcommand("gamma", "Gamma-limit scan")->require_subcommand(1);
  auto* gamma_scan_cmd = gamma->add_subcommand("scan", "energy ratios of the recovery sequence");
  GridOpts gs_grid;
  std::string gs_v0, gs_v, gs_f = "zero", gs_out;
  std::vector<double> gs_h;
  double gs_alpha = 0.5, gs_mu = 1.0, gs_lambda = 1.0;
  int gs_nq = 5;
  bool gs_project = false, gs_normalize = false;
  gs_grid.add(gamma_scan_cmd);
  gamma_scan_cmd->add_option("--v0", gs_v0)->required();
  gamma_scan_cmd->add_option("--v", gs_v)->required();
  gamma_scan_cmd->add_option("--f", gs_f, "load field, expression or zero");
  gamma_scan_cmd->add_option("--alpha", gs_alpha);
  gamma_scan_cmd->add_option("--h", gs_h, "h1,h2,... strictly decreasing")->delimiter(',')->required();
  gamma_scan_cmd->add_option("--mu", gs_mu);
  gamma_scan_cmd->add_option("--lambda", gs_lambda);
  gamma_scan_cmd->add_option("--nq", gs_nq, "thickness quadrature nodes");
  gamma_scan_cmd->add_option("--out", gs_out, "CSV report");
  gamma_scan_cmd->add_flag("--project", gs_project, "replace v by the discrete solution of det D^2 v = det D^2 v0");
  gamma_scan_cmd->add_flag("--normalize-load", gs_normalize, "remove the affine part of f");

  // ---- convexity analyze
  auto* conv = app.add_subcommand("convexity", "convexity analysis")->require_subcommand(1);
  auto* conv_an = conv->add_subcommand("analyze", "classify nodes and build the convex envelope");
  GridOpts cv_grid;
  std::string cv_u, cv_out, cv_env;
  std::optional<double> cv_eps;
  int cv_order = 2;
  cv_grid.add(conv_an);
  conv_an->add_option("--u", cv_u)->required();
  conv_an->add_option("--eps", cv_eps, "singular-set threshold on det D^2 u");
  conv_an->add_option("--order", cv_order);
  conv_an->add_option("--out", cv_out, "CSV of node labels");
  conv_an->add_option("--envelope", cv_env, "FIELD2D output of the lower convex envelope");

  // ---- fixtures sverak
  auto* fix = app.add_subcommand("fixtures", "reference fields")->require_subcommand(1);
  auto* fix_sv = fix->add_subcommand("sverak", "u = sign(x) x^2 exp(y^2/2) on (-1, 1)^2");
  GridOpts fx_grid;
  std::string fx_out;
  fx_grid.add(fix_sv);
  fix_sv->add_option("--out", fx_out)->required();

  // ---- energy eval
  auto* energy = app.add_subcommand("energy", "elastic energies")->require_subcommand(1);
  auto* energy_eval = energy->add_subcommand("eval", "evaluate I^h and J^h of a DEF3D deformation");
  std::string en_def, en_v0, en_f = "zero";
  double en_h = 1e-2, en_alpha = 0.5, en_mu = 1.0, en_lambda = 1.0;
  std::optional<double> en_alpha_prime;
  energy_eval->add_option("--def", en_def, "DEF3D file")->required();
  energy_eval->add_option("--v0", en_v0)->required();
  energy_eval->add_option("--f", en_f);
  energy_eval->add_option("--h", en_h);
  energy_eval->add_option("--alpha", en_alpha);
  energy_eval->add_option("--alpha-prime", en_alpha_prime);
  energy_eval->add_option("--mu", en_mu);
  energy_eval->add_option("--lambda", en_lambda);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = inject_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR code=usage detail=" << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "ERROR code=" << e.code() << " detail=" << e.detail() << '\n';
    return exit_code(e.kind());
  }

  try {
    if (*ma_solve) {
      DiffOrder order = parse_order(ma_order);
      auto g = pick_grid(ma_grid, {ma_f, ma_bd});
      MAProblem p{resolve_field(ma_f, g, "f"), resolve_field(ma_bd, g, "boundary"), std::nullopt};
      MAOptions o;
      o.tol = ma_tol;
      o.order = order;
      o.max_iter = ma_iter;
      auto r = solve_ma(p, std::nullopt, o);
      print("iterations", r.iterations);
      print("residual", r.history.back());
      print("max_diff_boundary_data", max_abs(r.u - p.boundary));
      if (!ma_out.empty()) save_field2d(ma_out, to_table(r.u));
    } else if (*match_run) {
      std::vector<double> hs = mt_sweep;
      if (mt_h) hs.insert(hs.begin(), *mt_h);
      if (hs.empty()) throw ValidationError("config", "give --h or --sweep");
      for (double h : hs)
        if (!(h > 0.0)) throw ValidationError("h_list", "h values must be positive");
      auto g = pick_grid(mt_grid, {mt_v0, mt_v});
      auto v0 = resolve_field(mt_v0, g, "v0");
      auto v = resolve_field(mt_v, g, "v");
      if (mt_project) v = project_constraint(v0, v, mt_opt.order);
      Immerser im(g, mt_opt.order);
      std::vector<MatchRow> rows;
      for (double h : hs) {
        auto r = build_matching_displacement(h, v0, v, mt_opt, &im);
        rows.push_back({h, max_abs(r.z), r.isometry_residual, r.w22, r.phi_residual});
      }
      auto t = match_table(rows);
      std::cout << csv_string(t);
      if (!mt_out.empty()) write_csv(mt_out, t);
    } else if (*gamma_scan_cmd) {
      require_decreasing(gs_h);
      auto g = pick_grid(gs_grid, {gs_v0, gs_v, gs_f});
      RecoveryInputs in;
      in.v0 = resolve_field(gs_v0, g, "v0");
      in.v = resolve_field(gs_v, g, "v");
      in.f = resolve_field(gs_f, g, "f");
      if (gs_normalize) in.f = normalize_load(in.f);
      in.lame = Lame{gs_mu, gs_lambda};
      in.alpha = gs_alpha;
      in.nq = gs_nq;
      if (gs_project) in.v = project_constraint(in.v0, in.v, in.match.order);
      auto rep = gamma_scan(in, gs_h);
      std::cout << "grid=" << rep.nx << "x" << rep.ny << " alpha=" << format_double(rep.alpha)
                << " mu=" << format_double(rep.mu) << " lambda=" << format_double(rep.lambda) << '\n';
      auto t = scan_table(rep);
      std::cout << csv_string(t);
      print("bending", rep.bending);
      if (rep.h_star) print("h_star", *rep.h_star);
      else std::cout << "h_star=none\n";
      print("kh_exponent", rep.kh_exponent);
      print("gap_exponent", rep.gap_exponent);
      if (rep.load_bound_holds) std::cout << "load_bound=" << (*rep.load_bound_holds ? "holds" : "violated") << '\n';
      if (!gs_out.empty()) write_csv(gs_out, t);
    } else if (*conv_an) {
      auto g = pick_grid(cv_grid, {cv_u});
      auto u = resolve_field(cv_u, g, "u");
      auto r = classify_convexity(u, cv_eps, parse_order(cv_order));
      std::cout << "verdict=" << to_string(r.verdict) << '\n';
      print("eps", r.eps);
      print("convex", double(r.n_convex));
      print("concave", double(r.n_concave));
      print("singular", double(r.n_singular));
      if (!cv_out.empty()) write_csv(cv_out, convexity_table(r));
      if (!cv_env.empty()) save_field2d(cv_env, to_table(convexify(u)));
    } else if (*fix_sv) {
      auto g = fx_grid.make(Box{-1.0, 1.0, -1.0, 1.0});
      save_field2d(fx_out, to_table(sverak_example(g)));
      print("nodes", double(g->domain_count()));
    } else if (*energy_eval) {
      auto y = load_def3d(en_def);
      auto g = y.grid_ptr();
      auto v0 = resolve_field(en_v0, g, "v0");
      auto f = resolve_field(en_f, g, "f");
      ShellParams p;
      p.h = en_h;
      p.alpha = en_alpha;
      p.alpha_prime = en_alpha_prime;
      p.lame = Lame{en_mu, en_lambda};
      p.nq = y.nq();
      p.validate();
      auto e = shell_embedding(v0, p);
      auto parts = total_energy_parts(y, e, f, p);
      const double s = std::pow(p.h, 2.0 * p.alpha + 2.0);
      print("I", parts.elastic);
      print("load", parts.load);
      print("J", parts.total());
      print("ratio_I", parts.elastic / s);
      print("ratio_J", parts.total() / s);
      print("rigidity_defect", rigidity_defect(y, e, p));
    }
  } catch (const Error& e) {
    std::cerr << "ERROR code=" << e.code() << " detail=" << e.detail() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "ERROR code=internal detail=" << e.what() << '\n';
    return 1;
  }
  return 0;
}
