#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace cbfpds;
using namespace cbfpds::test;

namespace {

const char* kExprScenario = R"({
  "name": "expr-disc",
  "dim": 2,
  "params": {"k": 0.5},
  "dynamics": {"kind": "expr", "f": ["k*x1 - x2", "x1 + k*x2"]},
  "nominal_controller": {"kind": "expr", "u": ["-2*x1", "-2*x2"]},
  "barrier": {"kind": "expr", "h": "1 - x1^2 - x2^2", "grad": ["-2*x1", "-2*x2"]},
  "P": [[1, 0], [0, 1]],
  "a": 2.5,
  "gamma": {"kind": "table", "knots": [[0, 0], [0.5, 0.3], [1, 1]]},
  "bounds": {"lower": [-1.5, -1.5], "upper": [1.5, 1.5]}
})";

template <class E>
void expect_schema_error(const std::string& text) {
  EXPECT_THROW(parse_scenario(text), E) << text;
}

Trajectory sample_trajectory() {
  return integrate_cbf(builtin::paper_example_wrong_p(), v2(-1, 2), 1e-2, 3.0);
}

}  // namespace

TEST(ScenarioJson, BuiltinsRoundTrip) {
  for (const char* name : {"paper-example", "paper-example-wrongP", "unit-disc"}) {
    const Scenario s = load_scenario(std::string("builtin:") + name);
    const Json j = scenario_to_json(s);
    const Scenario back = scenario_from_json(j);
    EXPECT_EQ(back, s) << name;
    EXPECT_EQ(scenario_to_json(back), j) << name;
    EXPECT_EQ(parse_scenario(j.dump()), s) << name;
  }
}

TEST(ScenarioJson, ExpressionScenarioRoundTrip) {
  const Scenario s = parse_scenario(kExprScenario);
  EXPECT_EQ(s.name, "expr-disc");
  EXPECT_EQ(s.a, 2.5);
  EXPECT_EQ(s.gamma.kind(), GammaFn::Kind::Tabulated);
  EXPECT_FALSE(s.G.has_value());
  const Vec x = v2(0.3, -0.2);
  EXPECT_LE((s.f0(x) - v2(-1.5 * 0.3 + 0.2, 0.3 - 1.5 * -0.2)).norm(), 1e-15);
  EXPECT_EQ(s.barrier.gradient(x), v2(-0.6, 0.4));

  const Json j = scenario_to_json(s);
  const Scenario back = scenario_from_json(j);
  EXPECT_EQ(scenario_to_json(back), j);
  Rng rng(81);
  for (int k = 0; k < 200; ++k) {
    const Vec y = uniform_in_box(s.bounds, rng);
    EXPECT_EQ(back.f0(y), s.f0(y));
    EXPECT_EQ(back.barrier.value(y), s.barrier.value(y));
    EXPECT_EQ(back.barrier.gradient(y), s.barrier.gradient(y));
    EXPECT_EQ(back.gamma(std::abs(y[0])), s.gamma(std::abs(y[0])));
  }
}

TEST(ScenarioJson, AutoGammaIsSeeded) {
  Json j = Json::parse(kExprScenario);
  j.erase("gamma");
  const Scenario a = scenario_from_json(j, 5);
  const Scenario b = scenario_from_json(j, 5);
  EXPECT_EQ(scenario_to_json(a), scenario_to_json(b));
  EXPECT_EQ(a.gamma.kind(), GammaFn::Kind::Tabulated);
  // The expression-barrier version of the example reproduces the quadratic scenario's fields.
  const Scenario q = builtin::paper_example();
  Json e = scenario_to_json(q);
  e["barrier"] = {{"kind", "expr"}, {"h", "9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)"}};
  const Scenario es = scenario_from_json(e);
  EXPECT_EQ(es.gamma.slope(), q.gamma.slope());
  EXPECT_LE((cbf_vector(es, v2(-2, 1.5)) - cbf_vector(q, v2(-2, 1.5))).norm(), 1e-12);
}

TEST(ScenarioJson, SchemaErrors) {
  expect_schema_error<ValidationError>("not json");
  expect_schema_error<ValidationError>("[1, 2]");
  expect_schema_error<ValidationError>(R"({"dim": 2})");
  expect_schema_error<ValidationError>(R"({"dim": 0, "dynamics": {"kind": "linear", "A": [[1]]}})");
  Json base = scenario_to_json(builtin::paper_example());
  auto with = [&](const char* ptr, Json v) {
    Json j = base;
    j[Json::json_pointer(ptr)] = std::move(v);
    return j.dump();
  };
  expect_schema_error<ValidationError>(with("/dynamics/kind", "cubic"));
  expect_schema_error<ValidationError>(with("/barrier/kind", "sphere"));
  expect_schema_error<ValidationError>(with("/gamma/kind", "magic"));
  expect_schema_error<ValidationError>(with("/gamma/slope", -1));
  expect_schema_error<ValidationError>(with("/a", -1));
  expect_schema_error<ValidationError>(with("/a", "one"));
  expect_schema_error<DimensionError>(with("/dynamics/A", Json::parse("[[1, 0, 0], [0, 1, 0], [0, 0, 1]]")));
  expect_schema_error<DimensionError>(with("/bounds/lower", Json::parse("[-1, -1, -1]")));
  expect_schema_error<NotSpdError>(with("/P", Json::parse("[[1, 2], [2, 1]]")));
  expect_schema_error<NotSpdError>(with("/barrier/Q", Json::parse("[[1, 0], [0, -1]]")));
  expect_schema_error<Error>(with("/nominal_controller", Json::parse(R"({"kind": "expr", "u": ["q*x1", "x2"]})")));
  Json no_bounds = Json::parse(kExprScenario);
  no_bounds.erase("bounds");
  expect_schema_error<ValidationError>(no_bounds.dump());
  try {
    parse_scenario(R"({"dim": 2})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("scenario schema"), std::string::npos);
  }
  EXPECT_THROW(load_scenario("/nonexistent/file.json"), ValidationError);
  EXPECT_THROW(load_scenario("builtin:nope"), ValidationError);
}

TEST(TrajectoryCsv, FormatG17) {
  EXPECT_EQ(format_g17(0.1), "0.10000000000000001");
  EXPECT_EQ(format_g17(1.0), "1");
  EXPECT_EQ(format_g17(1.0 / 3.0), "0.33333333333333331");
  EXPECT_EQ(std::stod(format_g17(-2.5e-300)), -2.5e-300);
}

TEST(TrajectoryCsv, RoundTripIsExact) {
  const Trajectory tr = sample_trajectory();
  const std::string text = trajectory_csv(tr);
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,x1,x2,h,active");
  std::istringstream in(text);
  const Trajectory back = read_trajectory_csv(in);
  ASSERT_EQ(back.size(), tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_EQ(back.times[k], tr.times[k]);
    EXPECT_EQ(back.states[k], tr.states[k]);
    EXPECT_EQ(back.h_values[k], tr.h_values[k]);
    EXPECT_EQ(back.active_flags[k], tr.active_flags[k]);
  }
  EXPECT_EQ(trajectory_csv(back), text);
}

TEST(TrajectoryCsv, Malformed) {
  auto read = [](const std::string& s) {
    std::istringstream in(s);
    return read_trajectory_csv(in);
  };
  EXPECT_THROW(read(""), ValidationError);
  EXPECT_THROW(read("t,y1,h,active\n"), ValidationError);
  EXPECT_THROW(read("t,x1,x2,h\n"), ValidationError);
  EXPECT_THROW(read("t,x1,h,active\n0,1,2\n"), ValidationError);
  EXPECT_THROW(read("t,x1,h,active\n0,1,abc,0\n"), ValidationError);
  EXPECT_EQ(read("t,x1,h,active\n0,1,2,1\n\n").size(), 1u);
  EXPECT_THROW(load_trajectory_csv("/nonexistent/traj.csv"), ValidationError);
}

TEST(Svg, DeterministicAndComplete) {
  const Scenario s = builtin::paper_example_wrong_p();
  const std::vector<Trajectory> trs{sample_trajectory(), integrate_cbf(builtin::paper_example(), v2(-1, 2), 1e-2, 3.0)};
  PlotOptions opt;
  opt.labels = {"wrong", "right"};
  const std::string a = render_svg(trs, &s.barrier, s.bounds, opt);
  const std::string b = render_svg(trs, &s.barrier, s.bounds, opt);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
  EXPECT_NE(a.find("</svg>"), std::string::npos);
  EXPECT_NE(a.find("id=\"boundary\""), std::string::npos);
  EXPECT_NE(a.find("id=\"trajectory-1\" data-label=\"right\""), std::string::npos);
}

TEST(Svg, BoundaryOnly) {
  const Scenario s = builtin::paper_example();
  const std::string svg = render_svg({}, &s.barrier, s.bounds);
  EXPECT_NE(svg.find("id=\"boundary\""), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_EQ(svg.find("trajectory-"), std::string::npos);
  // A single closed ellipse becomes one polyline.
  std::size_t count = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
  EXPECT_EQ(count, 1u);
}

TEST(Svg, DimensionErrors) {
  Trajectory three;
  three.times = {0.0};
  three.states = {Vec::Zero(3)};
  three.h_values = {1.0};
  three.active_flags = {false};
  EXPECT_THROW(render_svg({three}, nullptr, std::nullopt), DimensionError);
  const BarrierFunction ball = BarrierFunction::quadratic(1.0, SpdMatrix::identity(3));
  EXPECT_THROW(render_svg({}, &ball, std::nullopt), DimensionError);
  PlotOptions bad;
  bad.range = Box{v2(1, 1), v2(0, 2)};
  EXPECT_THROW(render_svg({sample_trajectory()}, nullptr, std::nullopt, bad), ValidationError);
}

TEST(ReportJson, Shapes) {
  const ConstantsBundle k = compute_constants(builtin::paper_example());
  const Json jk = to_json(k);
  EXPECT_NEAR(jk.at("a_star").get<double>(), k.a_star, 0.0);
  EXPECT_TRUE(jk.contains("provenance"));
  const Json jr = to_json(reproduce_example(ExampleVariant::WrongP));
  EXPECT_EQ(jr.at("variant"), "WrongP");
  EXPECT_EQ(jr.at("passed"), true);
  EXPECT_EQ(jr.at("checks").size(), 3u);
  EXPECT_EQ(to_json(SweepRow{1.0, 2.0, 3.0}).dump(), R"({"a":1.0,"min_h":3.0,"sup_distance":2.0})");
}
