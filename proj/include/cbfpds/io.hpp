#pragma once

// Scenario JSON, trajectory CSV, report JSON and SVG rendering.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cbfpds/analysis.hpp"
#include "cbfpds/bounds.hpp"
#include "cbfpds/error.hpp"
#include "cbfpds/scenario.hpp"
#include "cbfpds/sim.hpp"
#include "cbfpds/validation.hpp"

namespace cbfpds {

using Json = nlohmann::json;

namespace detail {

[[noreturn]] inline void schema_error(const std::string& what) { throw ValidationError("scenario schema: " + what); }

inline const Json& require_key(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) schema_error(where + " is missing key '" + key + "'");
  return j.at(key);
}

inline double json_number(const Json& j, const std::string& where) {
  if (!j.is_number()) schema_error(where + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(where + " must be finite");
  return v;
}

inline Vec json_vector(const Json& j, const std::string& where) {
  if (!j.is_array()) schema_error(where + " must be an array of numbers");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = json_number(j[i], where);
  return v;
}

inline Mat json_matrix(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) schema_error(where + " must be a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) schema_error(where + " rows must be nonempty arrays");
  Mat m(static_cast<int>(j.size()), static_cast<int>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) schema_error(where + " is not rectangular");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<int>(r), static_cast<int>(c)) = json_number(j[r][c], where);
  }
  return m;
}

inline Mat square_matrix(const Json& j, int dim, const std::string& where) {
  Mat m = json_matrix(j, where);
  if (m.rows() != dim || m.cols() != dim) {
    throw DimensionError(where + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  return m;
}

inline std::string json_string(const Json& j, const std::string& where) {
  if (!j.is_string()) schema_error(where + " must be a string");
  return j.get<std::string>();
}

inline std::vector<ExprAst> json_exprs(const Json& j, int dim, const Params& params, const std::string& where) {
  if (!j.is_array()) schema_error(where + " must be an array of expression strings");
  if (static_cast<int>(j.size()) != dim) throw DimensionError(where + " must have " + std::to_string(dim) + " entries");
  std::vector<ExprAst> out;
  for (const auto& e : j) out.push_back(parse_expression(json_string(e, where), dim, param_names(params)));
  return out;
}

inline Json to_json(const Vec& v) {
  Json j = Json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Json to_json(const Mat& m) {
  Json j = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

inline Json to_json(const std::vector<ExprAst>& es) {
  Json j = Json::array();
  for (const auto& e : es) j.push_back(e.to_string());
  return j;
}

}  // namespace detail

/// Builds a scenario from its JSON description. `seed` drives the gamma fit for expression
/// barriers without an explicit gamma.
inline Scenario scenario_from_json(const Json& j, std::uint64_t seed = kDefaultSeed) {
  using namespace detail;
  if (!j.is_object()) schema_error("document must be an object");
  Scenario s;
  s.name = j.contains("name") ? json_string(j.at("name"), "name") : std::string("unnamed");
  const Json& jd = require_key(j, "dim", "scenario");
  if (!jd.is_number_integer() || jd.get<int>() < 1) schema_error("dim must be a positive integer");
  s.dim = jd.get<int>();

  if (j.contains("params")) {
    const Json& jp = j.at("params");
    if (!jp.is_object()) schema_error("params must be an object");
    for (const auto& [k, v] : jp.items()) s.params[k] = json_number(v, "params." + k);
  }

  const Json& dyn = require_key(j, "dynamics", "scenario");
  const std::string dk = json_string(require_key(dyn, "kind", "dynamics"), "dynamics.kind");
  if (dk == "linear") {
    s.dynamics = DynamicsField::linear(square_matrix(require_key(dyn, "A", "dynamics"), s.dim, "dynamics.A"));
  } else if (dk == "affine") {
    Vec b = json_vector(require_key(dyn, "b", "dynamics"), "dynamics.b");
    if (b.size() != s.dim) throw DimensionError("dynamics.b has wrong length");
    s.dynamics = DynamicsField::affine(square_matrix(require_key(dyn, "A", "dynamics"), s.dim, "dynamics.A"), b);
  } else if (dk == "expr") {
    s.dynamics = DynamicsField::expr(json_exprs(require_key(dyn, "f", "dynamics"), s.dim, s.params, "dynamics.f"), s.params);
  } else {
    schema_error("dynamics.kind must be linear, affine or expr");
  }

  if (j.contains("nominal_controller")) {
    const Json& nc = j.at("nominal_controller");
    const std::string ck = json_string(require_key(nc, "kind", "nominal_controller"), "nominal_controller.kind");
    if (ck == "none") {
      s.controller = NominalController::none();
    } else if (ck == "linear") {
      s.controller = NominalController::linear(square_matrix(require_key(nc, "K", "nominal_controller"), s.dim,
                                                             "nominal_controller.K"));
    } else if (ck == "expr") {
      s.controller = NominalController::expr(
          json_exprs(require_key(nc, "u", "nominal_controller"), s.dim, s.params, "nominal_controller.u"), s.params);
    } else {
      schema_error("nominal_controller.kind must be none, linear or expr");
    }
  }

  const Json& jb = require_key(j, "barrier", "scenario");
  const std::string bk = json_string(require_key(jb, "kind", "barrier"), "barrier.kind");
  const double gtol = jb.contains("gradient_tolerance") ? json_number(jb.at("gradient_tolerance"), "barrier.gradient_tolerance")
                                                        : kDefaultGradTol;
  if (bk == "quadratic") {
    const double c = json_number(require_key(jb, "c", "barrier"), "barrier.c");
    s.barrier = BarrierFunction::quadratic(c, SpdMatrix(square_matrix(require_key(jb, "Q", "barrier"), s.dim, "barrier.Q")),
                                           gtol);
  } else if (bk == "expr") {
    ExprAst h = parse_expression(json_string(require_key(jb, "h", "barrier"), "barrier.h"), s.dim, param_names(s.params));
    std::vector<ExprAst> grad;
    if (jb.contains("grad")) grad = json_exprs(jb.at("grad"), s.dim, s.params, "barrier.grad");
    s.barrier = BarrierFunction::expression(std::move(h), std::move(grad), s.params, gtol);
  } else {
    schema_error("barrier.kind must be quadratic or expr");
  }

  s.P = SpdMatrix(square_matrix(require_key(j, "P", "scenario"), s.dim, "P"));
  if (j.contains("G") && !j.at("G").is_null()) s.G = SpdMatrix(square_matrix(j.at("G"), s.dim, "G"));
  s.a = j.contains("a") ? json_number(j.at("a"), "a") : 1.0;

  if (j.contains("bounds")) {
    const Json& jbox = j.at("bounds");
    s.bounds = Box{json_vector(require_key(jbox, "lower", "bounds"), "bounds.lower"),
                   json_vector(require_key(jbox, "upper", "bounds"), "bounds.upper")};
  } else if (const auto* q = s.barrier.quadratic_form()) {
    s.bounds = quadratic_bounding_box(q->c, q->Q);
  } else {
    schema_error("expression barriers need a bounds box");
  }
  check_consistency(s);

  const Json gamma = j.contains("gamma") ? j.at("gamma") : Json{{"kind", "auto"}};
  const std::string gk = json_string(require_key(gamma, "kind", "gamma"), "gamma.kind");
  if (gk == "auto") {
    if (const auto* q = s.barrier.quadratic_form()) {
      s.gamma = gamma_for_quadratic(q->c, q->Q);
    } else {
      Rng rng(seed);
      s.gamma = fit_gamma_envelope(s.barrier, s.bounds, 4000, rng);
    }
  } else if (gk == "linear_slope") {
    s.gamma = GammaFn::linear_slope(json_number(require_key(gamma, "slope", "gamma"), "gamma.slope"));
  } else if (gk == "table") {
    const Json& jk = require_key(gamma, "knots", "gamma");
    if (!jk.is_array()) schema_error("gamma.knots must be an array of [s, gamma(s)] pairs");
    std::vector<std::pair<double, double>> knots;
    for (const auto& p : jk) {
      if (!p.is_array() || p.size() != 2) schema_error("gamma.knots entries must be pairs");
      knots.emplace_back(json_number(p[0], "gamma.knots"), json_number(p[1], "gamma.knots"));
    }
    s.gamma = GammaFn::tabulated(std::move(knots));
  } else {
    schema_error("gamma.kind must be auto, linear_slope or table");
  }
  return s;
}

inline Json scenario_to_json(const Scenario& s) {
  using detail::to_json;
  Json j;
  j["name"] = s.name;
  j["dim"] = s.dim;
  if (!s.params.empty()) {
    Json p = Json::object();
    for (const auto& [k, v] : s.params) p[k] = v;
    j["params"] = p;
  }
  switch (s.dynamics.kind()) {
    case DynamicsField::Kind::Linear: j["dynamics"] = {{"kind", "linear"}, {"A", to_json(s.dynamics.matrix())}}; break;
    case DynamicsField::Kind::Affine:
      j["dynamics"] = {{"kind", "affine"}, {"A", to_json(s.dynamics.matrix())}, {"b", to_json(s.dynamics.offset())}};
      break;
    case DynamicsField::Kind::Expr: j["dynamics"] = {{"kind", "expr"}, {"f", to_json(s.dynamics.components())}}; break;
  }
  switch (s.controller.kind()) {
    case NominalController::Kind::None: j["nominal_controller"] = {{"kind", "none"}}; break;
    case NominalController::Kind::Linear:
      j["nominal_controller"] = {{"kind", "linear"}, {"K", to_json(s.controller.gain())}};
      break;
    case NominalController::Kind::Expr:
      j["nominal_controller"] = {{"kind", "expr"}, {"u", to_json(s.controller.components())}};
      break;
  }
  if (const auto* q = s.barrier.quadratic_form()) {
    j["barrier"] = {{"kind", "quadratic"}, {"c", q->c}, {"Q", to_json(q->Q.matrix())}};
  } else {
    const auto* e = s.barrier.expr_form();
    j["barrier"] = {{"kind", "expr"}, {"h", e->h.to_string()}};
    if (!e->grad_auto) j["barrier"]["grad"] = to_json(e->grad);
  }
  if (s.barrier.gradient_tolerance() != kDefaultGradTol) j["barrier"]["gradient_tolerance"] = s.barrier.gradient_tolerance();
  j["P"] = to_json(s.P.matrix());
  if (s.G) j["G"] = to_json(s.G->matrix());
  j["a"] = s.a;
  if (s.gamma.kind() == GammaFn::Kind::LinearSlope) {
    j["gamma"] = {{"kind", "linear_slope"}, {"slope", s.gamma.slope()}};
  } else {
    Json knots = Json::array();
    for (const auto& [x, y] : s.gamma.knots()) knots.push_back({x, y});
    j["gamma"] = {{"kind", "table"}, {"knots", knots}};
  }
  j["bounds"] = {{"lower", to_json(s.bounds.lower)}, {"upper", to_json(s.bounds.upper)}};
  return j;
}

inline Scenario parse_scenario(const std::string& text, std::uint64_t seed = kDefaultSeed) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j, seed);
}

/// Loads `builtin:NAME` or a JSON file.
inline Scenario load_scenario(const std::string& uri, std::uint64_t seed = kDefaultSeed) {
  constexpr std::string_view prefix = "builtin:";
  if (uri.rfind(prefix, 0) == 0) return builtin::by_name(uri.substr(prefix.size()));
  std::ifstream in(uri);
  if (!in) throw ValidationError("cannot open scenario file '" + uri + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), seed);
}

// Trajectory CSV ----------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
  const int n = tr.dim();
  out << 't';
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  out << ",h,active\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << format_g17(tr.times[k]);
    for (int i = 0; i < n; ++i) out << ',' << format_g17(tr.states[k][i]);
    out << ',' << format_g17(tr.h_values[k]) << ',' << (tr.active_flags[k] ? 1 : 0) << '\n';
  }
}

inline std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream ss;
  write_trajectory_csv(ss, tr);
  return ss.str();
}

inline Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trajectory CSV is empty");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const int n = static_cast<int>(cols.size()) - 3;
  bool header_ok = n >= 1 && cols.front() == "t" && cols[cols.size() - 2] == "h" && cols.back() == "active";
  for (int i = 0; header_ok && i < n; ++i) header_ok = cols[i + 1] == "x" + std::to_string(i + 1);
  if (!header_ok) throw ValidationError("trajectory CSV header must be t,x1,...,xn,h,active");

  Trajectory tr;
  tr.method = "csv";
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0') throw ValidationError("trajectory CSV row " + std::to_string(row) + ": bad number");
      vals.push_back(v);
    }
    if (vals.size() != cols.size()) throw ValidationError("trajectory CSV row " + std::to_string(row) + ": wrong field count");
    tr.times.push_back(vals[0]);
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = vals[i + 1];
    tr.states.push_back(std::move(x));
    tr.h_values.push_back(vals[n + 1]);
    tr.active_flags.push_back(vals[n + 2] != 0.0);
  }
  if (tr.size() >= 2) tr.dt = tr.times[1] - tr.times[0];
  return tr;
}

inline Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trajectory file '" + path + "'");
  return read_trajectory_csv(in);
}

// Report JSON -------------------------------------------------------------

inline Json to_json(const Provenance& p) {
  if (p.kind == Provenance::Kind::Analytic) return {{"kind", "analytic"}};
  return {{"kind", "sampled"}, {"samples", p.samples}, {"inflation", p.inflation}};
}

inline Json to_json(const GammaFn& g) {
  if (g.kind() == GammaFn::Kind::LinearSlope) return {{"kind", "linear_slope"}, {"slope", g.slope()}};
  Json knots = Json::array();
  for (const auto& [x, y] : g.knots()) knots.push_back({x, y});
  return {{"kind", "table"}, {"knots", knots}};
}

inline Json to_json(const ConstantsBundle& k) {
  return {{"eps", k.eps},
          {"M1", k.M1},
          {"M2", k.M2},
          {"M3", k.M3},
          {"L_gradh", k.L_gradh},
          {"L_f", k.L_f},
          {"max_lie", k.max_lie},
          {"a_star", k.a_star},
          {"L1", k.L1},
          {"lambda_min_P", k.lambda_min_P},
          {"lambda_max_P", k.lambda_max_P},
          {"gamma", to_json(k.gamma)},
          {"provenance",
           {{"M1_M2", to_json(k.prov_M)},
            {"L_gradh", to_json(k.prov_L_gradh)},
            {"L_f", to_json(k.prov_L_f)},
            {"max_lie", to_json(k.prov_max_lie)}}}};
}

inline Json to_json(const InclusionReport& r) {
  return {{"x", detail::to_json(r.x)},
          {"case", r.which == InclusionReport::Case::Active ? "active" : "inactive"},
          {"y", detail::to_json(r.y)},
          {"eta", detail::to_json(r.eta)},
          {"eta_coefficient", r.eta_coefficient},
          {"sigma", r.sigma},
          {"sigma1", r.sigma1},
          {"gamma_term", r.gamma_term},
          {"dist_xy", r.dist_xy},
          {"dist_field", r.dist_field},
          {"margin", r.margin},
          {"pass", r.pass}};
}

inline Json to_json(const Equilibrium& e) {
  return {{"point", detail::to_json(e.point)},
          {"residual", e.residual},
          {"classification", to_string(e.classification)},
          {"boundary", e.boundary},
          {"on_switching_surface", e.on_switching_surface},
          {"eigen_real_parts", detail::to_json(e.eigen_real_parts)}};
}

inline Json to_json(const SweepRow& r) { return {{"a", r.a}, {"sup_distance", r.sup_distance}, {"min_h", r.min_h}}; }

inline Json to_json(const ContractionReport& r) {
  return {{"rho", r.rho},
          {"tol", r.tol},
          {"initial_distance", r.distances.empty() ? 0.0 : r.distances.front()},
          {"final_distance", r.distances.empty() ? 0.0 : r.distances.back()},
          {"observed_rate", std::isfinite(r.observed_rate) ? Json(r.observed_rate) : Json("inf")},
          {"worst_excess", r.worst_excess},
          {"pass", r.pass}};
}

inline Json to_json(const ValidationReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks) {
    Json jc = {{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
    if (c.witness) jc["witness"] = detail::to_json(*c.witness);
    checks.push_back(jc);
  }
  return {{"ok", r.ok()}, {"checks", checks}};
}

inline Json to_json(const ReproductionReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  Json eqs = Json::array();
  for (const auto& e : r.equilibria) eqs.push_back(to_json(e));
  return {{"variant", r.variant == ExampleVariant::CorrectP ? "CorrectP" : "WrongP"},
          {"passed", r.passed()},
          {"final_state", detail::to_json(r.trajectory.final_state())},
          {"min_h", safety_margin(r.trajectory)},
          {"checks", checks},
          {"equilibria", eqs}};
}

// SVG ---------------------------------------------------------------------

struct PlotOptions {
  std::optional<Box> range;  // data range; derived from bounds and trajectories when empty
  int width = 640;
  int height = 640;
  int contour_resolution = 200;
  std::vector<std::string> labels;
};

namespace detail {

using Polyline = std::vector<std::pair<double, double>>;

/// Zero level set of h over the box by marching squares, chained into polylines.
inline std::vector<Polyline> zero_contour(const BarrierFunction& b, const Box& box, int res) {
  const double x0 = box.lower[0], y0 = box.lower[1];
  const double dx = (box.upper[0] - x0) / res, dy = (box.upper[1] - y0) / res;
  std::vector<double> hv((res + 1) * (res + 1));
  auto at = [&](int i, int j) -> double& { return hv[static_cast<std::size_t>(j) * (res + 1) + i]; };
  for (int j = 0; j <= res; ++j) {
    for (int i = 0; i <= res; ++i) {
      Vec p(2);
      p << x0 + i * dx, y0 + j * dy;
      double v = b.value(p);
      if (v == 0.0) v = 1e-300;  // keeps every corner strictly on one side
      at(i, j) = v;
    }
  }
  // Edge key: (i, j, 0) horizontal edge from (i,j) to (i+1,j); (i, j, 1) vertical to (i,j+1).
  using Key = std::tuple<int, int, int>;
  auto edge_point = [&](const Key& k) {
    const auto [i, j, dir] = k;
    const double ha = at(i, j);
    const double hb = dir == 0 ? at(i + 1, j) : at(i, j + 1);
    const double t = ha / (ha - hb);
    return dir == 0 ? std::pair{x0 + (i + t) * dx, y0 + j * dy} : std::pair{x0 + i * dx, y0 + (j + t) * dy};
  };
  std::map<Key, std::vector<Key>> adj;
  auto link = [&](const Key& a, const Key& c) {
    adj[a].push_back(c);
    adj[c].push_back(a);
  };
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      const Key bottom{i, j, 0}, top{i, j + 1, 0}, left{i, j, 1}, right{i + 1, j, 1};
      std::vector<Key> crossed;
      if ((at(i, j) > 0) != (at(i + 1, j) > 0)) crossed.push_back(bottom);
      if ((at(i + 1, j) > 0) != (at(i + 1, j + 1) > 0)) crossed.push_back(right);
      if ((at(i, j + 1) > 0) != (at(i + 1, j + 1) > 0)) crossed.push_back(top);
      if ((at(i, j) > 0) != (at(i, j + 1) > 0)) crossed.push_back(left);
      if (crossed.size() == 2) {
        link(crossed[0], crossed[1]);
      } else if (crossed.size() == 4) {
        // Saddle: resolve by the sign of the cell-centre average.
        const double centre = 0.25 * (at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1));
        if ((centre > 0) == (at(i, j) > 0)) {
          link(bottom, right);
          link(top, left);
        } else {
          link(bottom, left);
          link(top, right);
        }
      }
    }
  }
  std::vector<Polyline> lines;
  std::map<Key, bool> used;
  auto walk = [&](Key start) {
    Polyline pl{edge_point(start)};
    used[start] = true;
    Key prev = start, cur = start;
    bool first = true;
    while (true) {
      const auto& nb = adj[cur];
      std::optional<Key> next;
      for (const auto& n : nb) {
        if (!used[n]) {
          next = n;
          break;
        }
        if (!first && n == start && n != prev) {
          pl.push_back(edge_point(start));  // closed loop
          return pl;
        }
      }
      if (!next) return pl;
      used[*next] = true;
      pl.push_back(edge_point(*next));
      prev = cur;
      cur = *next;
      first = false;
    }
  };
  // Open chains first (start at degree-1 ends), then closed loops.
  for (const auto& [k, nb] : adj)
    if (nb.size() == 1 && !used[k]) lines.push_back(walk(k));
  for (const auto& [k, nb] : adj)
    if (!used[k]) lines.push_back(walk(k));
  return lines;
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

/// Standalone SVG of planar trajectories over the boundary of S. `barrier` may be null.
inline std::string render_svg(const std::vector<Trajectory>& trajectories, const BarrierFunction* barrier,
                              const std::optional<Box>& bounds, const PlotOptions& opt = {}) {
  for (const auto& tr : trajectories) {
    if (tr.empty()) continue;
    if (tr.dim() != 2) throw DimensionError("plot supports two-dimensional trajectories only");
  }
  if (barrier && barrier->dim() != 2) throw DimensionError("plot supports two-dimensional barriers only");

  Box range;
  if (opt.range) {
    range = *opt.range;
  } else {
    Vec lo = Vec::Constant(2, std::numeric_limits<double>::infinity());
    Vec hi = -lo;
    if (bounds) {
      lo = lo.cwiseMin(bounds->lower);
      hi = hi.cwiseMax(bounds->upper);
    }
    for (const auto& tr : trajectories)
      for (const auto& x : tr.states) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
      }
    if (!lo.allFinite()) {
      lo = Vec::Constant(2, -1.0);
      hi = Vec::Constant(2, 1.0);
    }
    const Vec pad = 0.05 * (hi - lo).cwiseMax(Vec::Constant(2, 1e-9));
    range = Box{lo - pad, hi + pad};
  }
  if (range.dim() != 2 || !((range.upper.array() > range.lower.array()).all())) {
    throw ValidationError("plot range must be a nonempty 2-D box");
  }

  const double w = opt.width, hgt = opt.height;
  auto px = [&](double x) { return detail::svg_num((x - range.lower[0]) / (range.upper[0] - range.lower[0]) * w); };
  auto py = [&](double y) { return detail::svg_num(hgt - (y - range.lower[1]) / (range.upper[1] - range.lower[1]) * hgt); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes through the origin when visible.
  if (range.lower[0] < 0 && range.upper[0] > 0) {
    out << "<line x1=\"" << px(0) << "\" y1=\"0\" x2=\"" << px(0) << "\" y2=\"" << opt.height
        << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
  }
  if (range.lower[1] < 0 && range.upper[1] > 0) {
    out << "<line x1=\"0\" y1=\"" << py(0) << "\" x2=\"" << opt.width << "\" y2=\"" << py(0)
        << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
  }
  if (barrier) {
    out << "<g id=\"boundary\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\">\n";
    for (const auto& line : detail::zero_contour(*barrier, range, opt.contour_resolution)) {
      out << "<polyline points=\"";
      for (std::size_t k = 0; k < line.size(); ++k) out << (k ? " " : "") << px(line[k].first) << ',' << py(line[k].second);
      out << "\"/>\n";
    }
    out << "</g>\n";
  }
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    const auto& tr = trajectories[t];
    if (tr.empty()) continue;
    const char* color = kColors[t % std::size(kColors)];
    out << "<g id=\"trajectory-" << t << "\"";
    if (t < opt.labels.size()) out << " data-label=\"" << opt.labels[t] << "\"";
    out << ">\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    // At most ~4000 vertices per curve keeps files small without visible loss.
    const std::size_t stride = std::max<std::size_t>(1, tr.size() / 4000);
    for (std::size_t k = 0; k < tr.size(); k += stride) {
      out << (k ? " " : "") << px(tr.states[k][0]) << ',' << py(tr.states[k][1]);
    }
    if ((tr.size() - 1) % stride != 0) out << ' ' << px(tr.states.back()[0]) << ',' << py(tr.states.back()[1]);
    out << "\"/>\n";
    out << "<circle class=\"start\" cx=\"" << px(tr.states.front()[0]) << "\" cy=\"" << py(tr.states.front()[1])
        << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    out << "<rect class=\"end\" x=\"" << detail::svg_num(std::stod(px(tr.states.back()[0])) - 4) << "\" y=\""
        << detail::svg_num(std::stod(py(tr.states.back()[1])) - 4) << "\" width=\"8\" height=\"8\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"1.5\"/>\n";
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace cbfpds
