// cbfpds command-line tool.
//
// Exit codes: 0 success, 2 invalid input or scenario, 3 integration/numerical failure,
// 4 a requested check failed.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbfpds/cbfpds.hpp"

namespace {

using namespace cbfpds;

constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckFailed = 4;

struct Globals {
  std::uint64_t seed = kDefaultSeed;
};

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << content;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double d = std::strtod(item.c_str(), &end);
    if (item.empty() || end == item.c_str() || *end != '\0') {
      throw ValidationError(std::string("cannot parse ") + what + " '" + text + "'");
    }
    v.push_back(d);
  }
  if (v.empty()) throw ValidationError(std::string(what) + " is empty");
  return v;
}

Vec parse_point(const std::string& text, int dim, const char* what) {
  const auto v = parse_list(text, what);
  if (static_cast<int>(v.size()) != dim) {
    throw DimensionError(std::string(what) + " must have " + std::to_string(dim) + " entries");
  }
  return Eigen::Map<const Vec>(v.data(), dim);
}

/// The example's initial condition is the default start for planar scenarios.
Vec start_point(const std::string& text, const Scenario& s) {
  if (!text.empty()) return parse_point(text, s.dim, "--x0");
  if (s.dim != 2) throw ValidationError("--x0 is required for scenarios that are not planar");
  Vec x(2);
  x << -1.0, 2.0;
  return x;
}

Scenario load(const std::string& uri, const Globals& g) {
  Scenario s = load_scenario(uri, g.seed);
  check_consistency(s);
  return s;
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string controller = "cbf";
  std::optional<double> a;
  double dt = 1e-3;
  double t_final = 30.0;
  std::string out;
  std::string scheme = "projected-euler";
  std::string x0;
};

int run_simulate(const SimulateArgs& args, const Globals& g) {
  Scenario s = load(args.scenario, g);
  if (args.a) s = with_a(s, *args.a);
  const Vec x0 = start_point(args.x0, s);
  Trajectory tr;
  if (args.controller == "cbf") {
    tr = integrate_cbf(s, x0, args.dt, args.t_final);
  } else if (args.controller == "pds") {
    const PdsScheme scheme = args.scheme == "switched-rk4" ? PdsScheme::SwitchedRK4 : PdsScheme::ProjectedEuler;
    tr = integrate_pds(s, x0, args.dt, args.t_final, scheme);
  } else {
    tr = integrate_nominal(s, x0, args.dt, args.t_final);
  }
  write_output(args.out, trajectory_csv(tr));
  if (!tr.events.empty()) std::cerr << tr.events.size() << " boundary snap(s) during integration\n";
  return 0;
}

// bounds --------------------------------------------------------------------

struct BoundsArgs {
  std::string scenario;
  double eps_fraction = kDefaultEpsFraction;
  int samples = 10000;
  std::string out;
};

int run_bounds(const BoundsArgs& args, const Globals& g) {
  const Scenario s = load(args.scenario, g);
  const ConstantsBundle k = compute_constants(s, args.eps_fraction, g.seed, args.samples);
  Json j = to_json(k);
  j["scenario"] = s.name;
  j["eps_fraction"] = args.eps_fraction;
  j["invariants_hold"] = k.invariants_hold();
  write_output(args.out, j.dump(2) + "\n");
  return 0;
}

// check-inclusion -----------------------------------------------------------

struct InclusionArgs {
  std::string scenario;
  std::optional<double> a;
  int grid = 32;
  double eps_fraction = kDefaultEpsFraction;
  std::string out;
};

int run_check_inclusion(const InclusionArgs& args, const Globals& g) {
  if (args.grid < 1) throw ValidationError("--grid must be at least 1");
  const Scenario s = load(args.scenario, g);
  const ConstantsBundle k = compute_constants(s, args.eps_fraction, g.seed);
  const double a = args.a ? *args.a : std::max(k.a_star, s.a);
  if (!(a > 0.0)) throw ValidationError("a must be positive");

  std::vector<Vec> pts;
  for (Vec& x : grid_points(s.bounds, args.grid))
    if (s.barrier.value(x) >= 0.0) pts.push_back(std::move(x));
  const auto reports =
      parallel_map<InclusionReport>(pts.size(), [&](std::size_t i) { return check_inclusion(s, k, a, pts[i]); });

  std::string lines;
  int failures = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& r : reports) {
    lines += to_json(r).dump() + "\n";
    if (!r.pass) ++failures;
    worst = std::min(worst, r.margin);
  }
  write_output(args.out, lines);
  std::cerr << "a = " << a << " (a* = " << k.a_star << "), " << reports.size() << " points, worst margin "
            << (reports.empty() ? 0.0 : worst) << ", " << failures << " failure(s)\n";
  return failures == 0 ? 0 : kExitCheckFailed;
}

// sweep ---------------------------------------------------------------------

struct SweepArgs {
  std::string scenario;
  std::string a_list = "1,10,100,1000";
  std::string x0;
  double dt = 1e-4;
  double t_final = 10.0;
  std::string out;
};

int run_sweep(const SweepArgs& args, const Globals& g) {
  const Scenario s = load(args.scenario, g);
  const auto rows = convergence_sweep(s, start_point(args.x0, s), parse_list(args.a_list, "--a-list"), args.dt,
                                      args.t_final);
  std::string csv = "a,sup_distance,min_h\n";
  for (const auto& r : rows) {
    csv += format_g17(r.a) + "," + format_g17(r.sup_distance) + "," + format_g17(r.min_h) + "\n";
    std::cout << to_json(r).dump() << "\n";
  }
  if (!args.out.empty()) write_output(args.out, csv);
  return 0;
}

// equilibria ----------------------------------------------------------------

struct EquilibriaArgs {
  std::string scenario;
  std::string controller = "cbf";
  std::optional<double> a;
  int seeds = 64;
  std::string out;
};

int run_equilibria(const EquilibriaArgs& args, const Globals& g) {
  Scenario s = load(args.scenario, g);
  if (args.a) s = with_a(s, *args.a);
  Rng rng(g.seed);
  std::vector<Equilibrium> eqs;
  if (args.controller == "cbf") {
    eqs = find_cbf_equilibria(s, args.seeds, rng);
  } else {
    EquilibriumSearchOptions opt;
    opt.barrier = &s.barrier;
    VectorField f;
    if (args.controller == "pds") {
      f = [&s](const Vec& x) { return pds_vector(s, x); };
    } else {
      f = effective_field(s);
    }
    eqs = find_equilibria(f, safe_region(s), args.seeds, rng, opt);
  }
  std::string lines;
  for (const auto& e : eqs) lines += to_json(e).dump() + "\n";
  write_output(args.out, lines);
  return 0;
}

// reproduce -----------------------------------------------------------------

struct ReproduceArgs {
  std::string variant = "CorrectP";
  std::string x0;
  std::string out;
  std::string traj_out;
};

int run_reproduce(const ReproduceArgs& args, const Globals& g) {
  ReproductionOptions opt;
  opt.seed = g.seed;
  if (!args.x0.empty()) opt.x0 = parse_point(args.x0, 2, "--x0");
  const ExampleVariant v = args.variant == "WrongP" ? ExampleVariant::WrongP : ExampleVariant::CorrectP;
  const ReproductionReport rep = reproduce_example(v, opt);
  write_output(args.out, to_json(rep).dump(2) + "\n");
  if (!args.traj_out.empty()) write_output(args.traj_out, trajectory_csv(rep.trajectory));
  for (const auto& c : rep.checks) {
    std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  }
  return rep.passed() ? 0 : kExitCheckFailed;
}

// plot ----------------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> traj;
  std::string out;
  std::string scenario = "builtin:paper-example";
  bool no_boundary = false;
  std::string xrange;
  std::string yrange;
  int resolution = 200;
};

int run_plot(const PlotArgs& args, const Globals& g) {
  std::vector<Trajectory> trs;
  for (const auto& p : args.traj) trs.push_back(load_trajectory_csv(p));
  for (std::size_t i = 1; i < trs.size(); ++i) {
    if (trs[i].dim() != trs[0].dim()) throw DimensionError("trajectories have different dimensions");
  }
  PlotOptions opt;
  opt.contour_resolution = args.resolution;
  opt.labels = args.traj;
  if (!args.xrange.empty() || !args.yrange.empty()) {
    if (args.xrange.empty() || args.yrange.empty()) throw ValidationError("--xrange and --yrange go together");
    const Vec xr = parse_point(args.xrange, 2, "--xrange");
    const Vec yr = parse_point(args.yrange, 2, "--yrange");
    Vec lo(2), hi(2);
    lo << xr[0], yr[0];
    hi << xr[1], yr[1];
    opt.range = Box{lo, hi};
  }
  std::optional<Scenario> s;
  if (!args.no_boundary) s = load(args.scenario, g);
  const std::string svg =
      render_svg(trs, s ? &s->barrier : nullptr, s ? std::optional<Box>(s->bounds) : std::nullopt, opt);
  write_output(args.out, svg);
  return 0;
}

// validate / contraction ----------------------------------------------------

struct ValidateArgs {
  std::string scenario;
  int samples = 1000;
  std::string out;
};

int run_validate(const ValidateArgs& args, const Globals& g) {
  const Scenario s = load(args.scenario, g);
  Rng rng(g.seed);
  const ValidationReport rep = validate_scenario(s, args.samples, rng);
  write_output(args.out, to_json(rep).dump(2) + "\n");
  return rep.ok() ? 0 : kExitCheckFailed;
}

struct ContractionArgs {
  std::string scenario;
  std::string controller = "pds";
  double a = 1.0;
  std::string x0a = "-1,2";
  std::string x0b = "1,1";
  double dt = 1e-3;
  double t_final = 30.0;
  double rho = 0.15;
  std::string out;
};

int run_contraction(const ContractionArgs& args, const Globals& g) {
  const Scenario s = load(args.scenario, g);
  const ControllerChoice c = args.controller == "cbf" ? ControllerChoice::cbf(args.a) : ControllerChoice::pds();
  const auto rep = contraction_test(s, c, parse_point(args.x0a, s.dim, "--x0a"), parse_point(args.x0b, s.dim, "--x0b"),
                                    args.dt, args.t_final, args.rho);
  write_output(args.out, to_json(rep).dump(2) + "\n");
  return rep.pass ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CBF-QP safety filters, projected dynamical systems and the inclusion bound"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--seed", globals.seed, "Seed for every randomized procedure")->capture_default_str();

  const std::vector<std::string> controllers{"nominal", "cbf", "pds"};

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Integrate a closed loop and write a trajectory CSV");
  c_sim->add_option("--scenario", sim.scenario, "Scenario JSON file or builtin:NAME")->required();
  c_sim->add_option("--controller", sim.controller)->check(CLI::IsMember(controllers))->capture_default_str();
  c_sim->add_option("--a", sim.a, "CBF parameter (overrides the scenario)");
  c_sim->add_option("--dt", sim.dt)->capture_default_str();
  c_sim->add_option("--t-final", sim.t_final)->capture_default_str();
  c_sim->add_option("--x0", sim.x0, "Initial state, comma separated");
  c_sim->add_option("--scheme", sim.scheme, "PDS scheme")
      ->check(CLI::IsMember({"projected-euler", "switched-rk4"}))
      ->capture_default_str();
  c_sim->add_option("--out", sim.out, "Output CSV (stdout when omitted)");

  BoundsArgs bnd;
  auto* c_bnd = app.add_subcommand("bounds", "Print the constants of the inclusion bound as JSON");
  c_bnd->add_option("--scenario", bnd.scenario)->required();
  c_bnd->add_option("--eps-fraction", bnd.eps_fraction, "eps as a fraction of M1, in (0, 1)")->capture_default_str();
  c_bnd->add_option("--samples", bnd.samples)->capture_default_str();
  c_bnd->add_option("--out", bnd.out);

  InclusionArgs inc;
  auto* c_inc = app.add_subcommand("check-inclusion", "Witness check of the inclusion on a grid over S");
  c_inc->add_option("--scenario", inc.scenario)->required();
  c_inc->add_option("--a", inc.a, "CBF parameter (default max(a*, scenario a))");
  c_inc->add_option("--grid", inc.grid, "Points per axis")->capture_default_str();
  c_inc->add_option("--eps-fraction", inc.eps_fraction)->capture_default_str();
  c_inc->add_option("--out", inc.out, "JSON lines output");

  SweepArgs swp;
  auto* c_swp = app.add_subcommand("sweep", "Sup distance between CBF and PDS trajectories over a list of a");
  c_swp->add_option("--scenario", swp.scenario)->required();
  c_swp->add_option("--a-list", swp.a_list)->capture_default_str();
  c_swp->add_option("--x0", swp.x0);
  c_swp->add_option("--dt", swp.dt)->capture_default_str();
  c_swp->add_option("--t-final", swp.t_final)->capture_default_str();
  c_swp->add_option("--out", swp.out, "CSV table");

  EquilibriaArgs eqa;
  auto* c_eq = app.add_subcommand("equilibria", "Locate and classify equilibria in S");
  c_eq->add_option("--scenario", eqa.scenario)->required();
  c_eq->add_option("--controller", eqa.controller)->check(CLI::IsMember(controllers))->capture_default_str();
  c_eq->add_option("--a", eqa.a);
  c_eq->add_option("--seeds", eqa.seeds)->capture_default_str();
  c_eq->add_option("--out", eqa.out);

  ReproduceArgs rep;
  auto* c_rep = app.add_subcommand("reproduce", "Run the built-in safe-stabilization example and check it");
  c_rep->add_option("--variant", rep.variant)->check(CLI::IsMember({"CorrectP", "WrongP"}))->capture_default_str();
  c_rep->add_option("--x0", rep.x0);
  c_rep->add_option("--out", rep.out, "JSON report");
  c_rep->add_option("--traj-out", rep.traj_out, "Trajectory CSV for a = 1");

  PlotArgs plt;
  auto* c_plt = app.add_subcommand("plot", "Render trajectory CSVs and the boundary of S as SVG");
  c_plt->add_option("--traj", plt.traj, "Trajectory CSV (repeatable)");
  c_plt->add_option("--out", plt.out)->required();
  c_plt->add_option("--scenario", plt.scenario, "Scenario providing the boundary")->capture_default_str();
  c_plt->add_flag("--no-boundary", plt.no_boundary);
  c_plt->add_option("--xrange", plt.xrange, "lo,hi");
  c_plt->add_option("--yrange", plt.yrange, "lo,hi");
  c_plt->add_option("--resolution", plt.resolution, "Contour grid cells per axis")->capture_default_str();

  ValidateArgs val;
  auto* c_val = app.add_subcommand("validate", "Spot-check the standing assumptions of a scenario");
  c_val->add_option("--scenario", val.scenario)->required();
  c_val->add_option("--samples", val.samples)->capture_default_str();
  c_val->add_option("--out", val.out);

  ContractionArgs con;
  auto* c_con = app.add_subcommand("contraction", "Check that two trajectories contract in the G-norm");
  c_con->add_option("--scenario", con.scenario)->required();
  c_con->add_option("--controller", con.controller)->check(CLI::IsMember({"cbf", "pds"}))->capture_default_str();
  c_con->add_option("--a", con.a)->capture_default_str();
  c_con->add_option("--x0a", con.x0a)->capture_default_str();
  c_con->add_option("--x0b", con.x0b)->capture_default_str();
  c_con->add_option("--dt", con.dt)->capture_default_str();
  c_con->add_option("--t-final", con.t_final)->capture_default_str();
  c_con->add_option("--rho", con.rho)->capture_default_str();
  c_con->add_option("--out", con.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*c_sim) return run_simulate(sim, globals);
    if (*c_bnd) return run_bounds(bnd, globals);
    if (*c_inc) return run_check_inclusion(inc, globals);
    if (*c_swp) return run_sweep(swp, globals);
    if (*c_eq) return run_equilibria(eqa, globals);
    if (*c_rep) return run_reproduce(rep, globals);
    if (*c_plt) return run_plot(plt, globals);
    if (*c_val) return run_validate(val, globals);
    if (*c_con) return run_contraction(con, globals);
  } catch (const IntegrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInvalid;
}
