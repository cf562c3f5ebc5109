#include <gtest/gtest.h>

#include "support.hpp"

using namespace cbfpds;
using namespace cbfpds::test;

namespace {

Vec on_ellipse(const Vec& x) { return x * std::sqrt(9.0 / x.dot(example_q() * x)); }

}  // namespace

TEST(TangentHalfspaceTest, UnitDisc) {
  const Scenario s = builtin::unit_disc();
  const TangentHalfspace t = tangent_halfspace(s.barrier, v2(1, 0));
  EXPECT_EQ(t.normal, v2(-2, 0));
  EXPECT_TRUE(t.contains(v2(-1, 5)));
  EXPECT_TRUE(t.contains(v2(0, 1)));
  EXPECT_FALSE(t.contains(v2(0.1, 0)));
}

TEST(TangentHalfspaceTest, ExampleBarrier) {
  const Scenario s = builtin::paper_example();
  const Vec x = v2(0, 3 / std::sqrt(2.0));
  const TangentHalfspace t = tangent_halfspace(s.barrier, x);
  EXPECT_NEAR(t.normal[0], -8.4853, 1e-4);
  EXPECT_NEAR(t.normal[1], -8.4853, 1e-4);
  EXPECT_NEAR(t.normal[0], -6.0 * std::sqrt(2.0), 1e-12);
}

TEST(TangentHalfspaceTest, InteriorRejected) {
  EXPECT_THROW(tangent_halfspace(builtin::unit_disc().barrier, v2(0.2, 0)), DomainError);
}

TEST(NormalConeTest, Examples) {
  const Scenario s = builtin::paper_example();
  EXPECT_EQ(normal_cone(s.barrier, v2(0.5, 0.5)).kind, ConeRep::Kind::Zero);
  const Vec y = on_ellipse(v2(-2.985, 2.777));
  const ConeRep c = normal_cone(s.barrier, y);
  ASSERT_EQ(c.kind, ConeRep::Kind::Ray);
  EXPECT_NEAR(c.generator[0], 6.802, 1e-2);
  EXPECT_NEAR(c.generator[1], 0.832, 1e-2);
  EXPECT_LE((c.generator + 2.0 * example_q() * y).norm(), 1e-12);

  const ConeRep d = normal_cone(builtin::unit_disc().barrier, v2(0, 1));
  ASSERT_EQ(d.kind, ConeRep::Kind::Ray);
  EXPECT_EQ(d.generator, v2(0, -2));
  EXPECT_THROW(normal_cone(s.barrier, v2(5, 5)), OutsideSafeSetError);
}

TEST(PdsField, InteriorAndTangentCases) {
  const Scenario s = builtin::paper_example();
  const PdsEvaluation in = pds_field(s, v2(-1, 2));
  EXPECT_EQ(in.location, PdsEvaluation::Location::Interior);
  EXPECT_EQ(in.output, v2(-7, -1));
  EXPECT_EQ(in.multiplier, 0.0);

  Rng rng(41);
  int tangent_cases = 0;
  for (int k = 0; k < 500; ++k) {
    const Vec y = boundary_point_along(s.barrier, Vec::Zero(2), random_unit_vector(2, rng));
    if (s.barrier.gradient(y).dot(s.f0(y)) < 0.0) continue;
    const PdsEvaluation ev = pds_field(s, y);
    EXPECT_EQ(ev.location, PdsEvaluation::Location::Boundary);
    EXPECT_EQ(ev.output, s.f0(y));
    ++tangent_cases;
  }
  EXPECT_GT(tangent_cases, 0);
}

TEST(PdsField, ProjectedValueMatchesQpOracle) {
  const Scenario s = builtin::paper_example();
  const Vec y = on_ellipse(v2(-2.985, 2.777));
  const Vec g = s.barrier.gradient(y);
  const double lie = g.dot(s.f0(y));
  EXPECT_NEAR(lie, -57.7, 0.1);
  const PdsEvaluation ev = pds_field(s, y);
  EXPECT_EQ(ev.location, PdsEvaluation::Location::Boundary);
  EXPECT_LE((ev.output - qp_oracle(s.f0(y), g, 0.0, 1.0, s.P)).norm(), 1e-10);
  EXPECT_NEAR(ev.multiplier, lie / inverse_weighted_sq_norm(s.P, g), 1e-12);
  EXPECT_LT(ev.multiplier, 0.0);
}

TEST(PdsField, BoundaryOutputIsTangent) {
  for (const Scenario& s : {builtin::paper_example(), builtin::paper_example_wrong_p(), builtin::unit_disc()}) {
    Rng rng(42);
    for (int k = 0; k < 1000; ++k) {
      const Vec y = boundary_point_along(s.barrier, Vec::Zero(2), random_unit_vector(2, rng));
      const PdsEvaluation ev = pds_field(s, y);
      EXPECT_GE(s.barrier.gradient(y).dot(ev.output), -1e-9);
      EXPECT_LE(ev.multiplier, 0.0);
    }
  }
}

TEST(PdsField, BruteForceProjectionOnGrid) {
  // 1000 x 1000 feasible candidates around f; the optimal P-distance must match to grid resolution.
  for (const Scenario& s : {builtin::paper_example(), builtin::paper_example_wrong_p()}) {
    Rng rng(43);
    for (int trial = 0; trial < 3; ++trial) {
      Vec y;
      do {
        y = boundary_point_along(s.barrier, Vec::Zero(2), random_unit_vector(2, rng));
      } while (s.barrier.gradient(y).dot(s.f0(y)) >= 0.0);
      const Vec f = s.f0(y);
      const Vec g = s.barrier.gradient(y);
      const Vec out = pds_field(s, y).output;
      const double half = 1.5 * (out - f).norm() + 1e-3;
      const int n = 1000;
      const double step = 2.0 * half / (n - 1);
      double best = std::numeric_limits<double>::infinity();
      Vec best_mu;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const Vec mu = f + v2(-half + i * step, -half + j * step);
          if (g.dot(mu) < 0.0) continue;
          const double d = weighted_norm(mu - f, s.P);
          if (d < best) {
            best = d;
            best_mu = mu;
          }
        }
      }
      const double opt = weighted_norm(out - f, s.P);
      EXPECT_LE(opt, best + 1e-12);
      // Some grid point lies within one cell diagonal of the optimum on the feasible side.
      const double lip = std::sqrt(s.P.max_eigenvalue());
      EXPECT_GE(opt, best - lip * std::sqrt(2.0) * step);
      EXPECT_GE(g.dot(best_mu), 0.0);
    }
  }
}

TEST(DiResidual, Examples) {
  const Scenario s = builtin::paper_example();
  const Vec x = v2(-1, 2);
  EXPECT_EQ(di_residual(s, x, s.f0(x)), 0.0);
  EXPECT_NEAR(di_residual(s, x, s.f0(x) + v2(1, 0)), 1.0, 1e-15);
  Rng rng(44);
  for (int k = 0; k < 1000; ++k) {
    const Vec y = boundary_point_along(s.barrier, Vec::Zero(2), random_unit_vector(2, rng));
    EXPECT_EQ(di_residual(s, y, s.f0(y)), 0.0);
    EXPECT_LE(di_residual(s, y, pds_field(s, y).output), 1e-9);
  }
  const Sampler in_s = safe_set_sampler(s);
  for (int k = 0; k < 1000; ++k) {
    const Vec z = in_s(rng);
    EXPECT_LE(di_residual(s, z, pds_field(s, z).output), 1e-9);
  }
}

TEST(DiResidual, OutwardVectorsAreFar) {
  const Scenario s = builtin::unit_disc();
  const Vec y = v2(1, 0);
  // F(y) = f(y) + t (-2, 0), t >= 0: pushing outward is not in the inclusion.
  const Vec f = s.f0(y);
  EXPECT_NEAR(di_residual(s, y, f + v2(3, 0)), 3.0, 1e-12);
  EXPECT_NEAR(di_residual(s, y, f + v2(-3, 0)), 0.0, 1e-12);
}
