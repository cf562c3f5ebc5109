#include <gtest/gtest.h>

#include "support.hpp"

using namespace cbfpds;
using namespace cbfpds::test;

TEST(EffectiveField, ExampleValues) {
  const Scenario s = builtin::paper_example();
  const VectorField f0 = effective_field(s);
  EXPECT_EQ(f0(v2(-1, 2)), v2(-7, -1));
  EXPECT_EQ(f0(v2(0, 0)), v2(0, 0));
  Rng rng(21);
  for (int k = 0; k < 50; ++k) {
    const Vec x = 3.0 * random_unit_vector(2, rng);
    EXPECT_LE((f0(x) - v2(-x[0] - 4 * x[1], x[0])).norm(), 1e-14);
  }
}

TEST(EffectiveField, NoControllerIsPlant) {
  const Scenario s = builtin::unit_disc();
  const Mat a = m2(0.5, -1, 1, 0.5);
  EXPECT_FALSE(s.controller.present());
  EXPECT_EQ(effective_field(s)(v2(0.3, -0.4)), a * v2(0.3, -0.4));
}

TEST(EffectiveField, LyapunovIdentity) {
  const Scenario s = builtin::paper_example();
  const Mat a = *effective_linear_part(s);
  EXPECT_EQ(a, example_a());
  const Mat g = example_g();
  EXPECT_LE((g * a + a.transpose() * g + Mat::Identity(2, 2)).norm(), 1e-15);
}

TEST(GammaFnTest, QuadraticSlope) {
  const GammaFn g = gamma_for_quadratic(9.0, SpdMatrix(example_q()));
  EXPECT_NEAR(g.slope(), 1.0 / std::sqrt(9.0 * q_lambda_min()), 1e-12);
  EXPECT_NEAR(g.slope(), 0.5034, 1e-4);
  EXPECT_EQ(g(0.0), 0.0);
  EXPECT_EQ(gamma_for_quadratic(1.0, SpdMatrix::identity(2)).slope(), 1.0);
  EXPECT_EQ(gamma_for_quadratic(123.0, SpdMatrix(example_q()))(0.0), 0.0);
}

TEST(GammaFnTest, InvariantViolationsRejected) {
  EXPECT_THROW(GammaFn::linear_slope(0.0), ValidationError);
  EXPECT_THROW(GammaFn::linear_slope(-1.0), ValidationError);
  EXPECT_THROW(GammaFn::tabulated({{0, 0}}), ValidationError);
  EXPECT_THROW(GammaFn::tabulated({{0, 1}, {1, 2}}), ValidationError);
  EXPECT_THROW(GammaFn::tabulated({{0, 0}, {1, 1}, {2, 1}}), ValidationError);
  EXPECT_THROW(GammaFn::tabulated({{0, 0}, {1, 1}, {1, 2}}), ValidationError);
  EXPECT_THROW(gamma_for_quadratic(0.0, SpdMatrix::identity(2)), ValidationError);
  EXPECT_THROW(GammaFn::linear_slope(1.0)(-1.0), DomainError);
}

TEST(GammaFnTest, MonotoneWithConsistentInverse) {
  const std::vector<GammaFn> gammas{GammaFn::linear_slope(0.5034),
                                    GammaFn::tabulated({{0, 0}, {0.5, 0.1}, {1, 0.9}, {4, 1.0}})};
  for (const auto& g : gammas) {
    double prev = -1.0;
    for (int k = 0; k < 100; ++k) {
      const double s = 0.06 * k;
      const double v = g(s);
      EXPECT_GT(v, prev);
      prev = v;
      EXPECT_NEAR(g(g.inverse(s)), s, 1e-9);
      EXPECT_NEAR(g.inverse(g(s)), s, 1e-9);
    }
  }
  // Linear continuation beyond the last knot keeps the table unbounded.
  const GammaFn t = GammaFn::tabulated({{0, 0}, {1, 2}});
  EXPECT_DOUBLE_EQ(t(10.0), 20.0);
}

TEST(GammaFnTest, QuadraticGammaBoundsDistanceToBoundary) {
  for (const Scenario& s : {builtin::paper_example(), builtin::unit_disc()}) {
    Rng rng(22);
    const Sampler in_s = safe_set_sampler(s);
    for (int k = 0; k < 10000; ++k) {
      const Vec x = in_s(rng);
      ASSERT_LE(distance_to_boundary(x, s.barrier), s.gamma(s.barrier.value(x)) + 1e-8) << x.transpose();
    }
  }
}

TEST(GammaFnTest, FittedEnvelopeBoundsDistance) {
  const BarrierFunction b = BarrierFunction::expression(parse_expression("1 - x1^2 - 4*x2^2 - x1^4", 2));
  const Box box{v2(-1.5, -1), v2(1.5, 1)};
  Rng rng(23);
  const GammaFn g = fit_gamma_envelope(b, box, 4000, rng);
  EXPECT_EQ(g.kind(), GammaFn::Kind::Tabulated);
  EXPECT_EQ(g(0.0), 0.0);
  Rng check(24);
  const Sampler in_s = rejection_sampler(box, [&](const Vec& x) { return b.value(x) >= 0.0; });
  int violations = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vec x = in_s(check);
    if (distance_to_boundary(x, b) > g(b.value(x)) + 1e-8) ++violations;
  }
  // The envelope is a sampled fit, so a handful of misses in fresh samples is tolerated.
  EXPECT_LE(violations, 20);
}

TEST(ScenarioTest, ConsistencyChecks) {
  Scenario s = builtin::paper_example();
  EXPECT_NO_THROW(check_consistency(s));
  EXPECT_THROW(with_a(s, -1.0), ValidationError);
  EXPECT_THROW(with_a(s, 0.0), ValidationError);
  Scenario bad = s;
  bad.a = -1.0;
  EXPECT_THROW(check_consistency(bad), ValidationError);
  bad = s;
  bad.P = SpdMatrix::identity(3);
  EXPECT_THROW(check_consistency(bad), DimensionError);
  bad = s;
  bad.dynamics = DynamicsField::linear(Mat::Identity(3, 3));
  EXPECT_THROW(check_consistency(bad), DimensionError);
  EXPECT_THROW(with_metric(s, SpdMatrix::identity(3)), DimensionError);
  EXPECT_THROW(builtin::by_name("nope"), ValidationError);
}

TEST(ScenarioTest, NonSpdBarrierMatrixRejected) {
  EXPECT_THROW(BarrierFunction::quadratic(9.0, SpdMatrix(m2(1, 2, 2, 1))), NotSpdError);
  EXPECT_THROW(BarrierFunction::quadratic(-1.0, SpdMatrix::identity(2)), ValidationError);
}

TEST(ScenarioTest, BuiltinsDiffer) {
  EXPECT_EQ(builtin::paper_example(), builtin::paper_example());
  EXPECT_FALSE(builtin::paper_example() == builtin::paper_example_wrong_p());
  EXPECT_EQ(builtin::paper_example_wrong_p().P.matrix(), m2(3, 0, 0, 1));
  EXPECT_EQ(builtin::by_name("unit-disc"), builtin::unit_disc());
}

TEST(Validate, ExampleScenarioPasses) {
  Rng rng(25);
  const ValidationReport rep = validate_scenario(builtin::paper_example(), 1000, rng);
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  EXPECT_TRUE(rep.ok());
  for (const char* name : {"consistency", "origin-in-interior", "compact", "boundary-gradient", "origin-equilibrium",
                           "strong-monotonicity", "gamma-bound"}) {
    EXPECT_NE(rep.find(name), nullptr) << name;
  }
}

TEST(Validate, FailuresCarryWitness) {
  Scenario s = builtin::unit_disc();
  // A slab is not compact; the bounding box faces meet it.
  s.barrier = BarrierFunction::expression(parse_expression("1 - x1^2", 2));
  s.bounds = Box{v2(-2, -2), v2(2, 2)};
  s.controller = NominalController::none();
  Rng rng(26);
  ValidationReport rep = validate_scenario(s, 200, rng);
  const ValidationCheck* c = rep.find("compact");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->passed);
  ASSERT_TRUE(c->witness.has_value());
  EXPECT_GE(s.barrier.value(*c->witness), 0.0);
  EXPECT_FALSE(rep.ok());

  Scenario off = builtin::paper_example();
  off.dynamics = DynamicsField::affine(Mat::Identity(2, 2), v2(0.1, 0));
  rep = validate_scenario(off, 200, rng);
  ASSERT_NE(rep.find("origin-equilibrium"), nullptr);
  EXPECT_FALSE(rep.find("origin-equilibrium")->passed);
  EXPECT_TRUE(rep.find("origin-equilibrium")->witness.has_value());
}

TEST(Validate, WrongGammaDetected) {
  Scenario s = builtin::paper_example();
  s.gamma = GammaFn::linear_slope(0.05);
  Rng rng(27);
  const ValidationReport rep = validate_scenario(s, 500, rng);
  ASSERT_NE(rep.find("gamma-bound"), nullptr);
  EXPECT_FALSE(rep.find("gamma-bound")->passed);
}

TEST(Sampling, HaltonAndGridStayInBox) {
  const Box box{v2(-1, 2), v2(3, 5)};
  for (std::uint64_t k = 0; k < 500; ++k) EXPECT_TRUE(box.contains(halton_point(k, box)));
  const auto grid = grid_points(box, 4);
  ASSERT_EQ(grid.size(), 16u);
  EXPECT_NEAR(grid[0][0], -0.5, 1e-15);
  EXPECT_NEAR(grid[0][1], 2.375, 1e-15);
  EXPECT_NEAR(grid[1][0], 0.5, 1e-15);
  const auto one = grid_points(box, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], v2(1, 3.5));
}

TEST(Sampling, ParallelMapPreservesOrderAndRethrows) {
  const auto sq = parallel_map<int>(100, [](std::size_t i) { return static_cast<int>(i * i); }, 4);
  for (std::size_t i = 0; i < sq.size(); ++i) EXPECT_EQ(sq[i], static_cast<int>(i * i));
  EXPECT_THROW(parallel_map<int>(10, [](std::size_t i) -> int {
                 if (i == 7) throw ValidationError("boom");
                 return 0;
               }, 3),
               ValidationError);
}
