#include <gtest/gtest.h>

#include "support.hpp"

using namespace cbfpds;
using namespace cbfpds::test;

namespace {

double example_m1() { return 2.0 * std::sqrt(9.0 * q_lambda_min()); }
double example_m2() { return 2.0 * std::sqrt(9.0 * q_lambda_max()); }

// max over dS of |L_f h| = |2 x^T Q A x| by dense sampling of the ellipse; the quadratic form
// is homogeneous so its maximum over S is attained on dS.
double example_max_lie_brute() {
  const Mat qa = example_q() * example_a();
  return brute_force_min(example_q(), 9.0, 200000, [&](const Vec& y) { return -std::abs(2.0 * y.dot(qa * y)); }) *
         -1.0;
}

double example_l_f() {
  Eigen::JacobiSVD<Mat> svd(example_a());
  return svd.singularValues()[0];
}

Scenario zero_dynamics() {
  Scenario s = builtin::unit_disc();
  s.dynamics = DynamicsField::linear(Mat::Zero(2, 2));
  s.controller = NominalController::none();
  return s;
}

Scenario expression_example() {
  Scenario s = builtin::paper_example();
  s.barrier = example_expr_barrier();
  return s;
}

}  // namespace

TEST(EstimateLipschitz, LinearFieldNearSpectralNorm) {
  Rng rng(51);
  const Scenario s = builtin::paper_example();
  const auto est = estimate_lipschitz(effective_field(s), safe_set_sampler(s), 5000, 1.2, rng);
  EXPECT_LE(est.raw, example_l_f() * (1 + 1e-12));
  EXPECT_GE(est.raw, 0.98 * example_l_f());
  EXPECT_DOUBLE_EQ(est.estimate, 1.2 * est.raw);
  EXPECT_EQ(est.provenance.kind, Provenance::Kind::Sampled);
  EXPECT_EQ(est.provenance.samples, 5000);
}

TEST(EstimateLipschitz, BarrierGradient) {
  Rng rng(52);
  const Scenario s = builtin::paper_example();
  const BarrierFunction* b = &s.barrier;
  const auto est =
      estimate_lipschitz([b](const Vec& x) { return b->gradient(x); }, safe_set_sampler(s), 5000, 1.0, rng);
  EXPECT_LE(est.raw, 2.0 * q_lambda_max() * (1 + 1e-12));
  EXPECT_GE(est.raw, 0.98 * 2.0 * q_lambda_max());
}

TEST(EstimateLipschitz, ConstantFieldAndErrors) {
  Rng rng(53);
  const Scenario s = builtin::unit_disc();
  const auto est = estimate_lipschitz([](const Vec&) { return v2(1, 2); }, safe_set_sampler(s), 1000, 1.2, rng);
  EXPECT_EQ(est.raw, 0.0);
  EXPECT_EQ(est.estimate, 0.0);
  EXPECT_THROW(estimate_lipschitz([](const Vec& x) { return x; }, safe_set_sampler(s), 999, 1.2, rng),
               ValidationError);
  EXPECT_THROW(estimate_lipschitz([](const Vec& x) { return x; }, [](Rng&) { return v2(1, 1); }, 1000, 1.2, rng),
               ValidationError);
}

TEST(GradNormExtremaTest, Analytic) {
  Rng rng(54);
  const auto m = boundary_extrema_gradnorm(builtin::paper_example().barrier, 1000, rng);
  EXPECT_NEAR(m.M1, example_m1(), 1e-12);
  EXPECT_NEAR(m.M2, example_m2(), 1e-12);
  EXPECT_NEAR(m.M1, 3.97292, 1e-5);
  EXPECT_NEAR(m.M2, 12.8147, 1e-4);
  EXPECT_EQ(m.provenance.kind, Provenance::Kind::Analytic);

  const auto d = boundary_extrema_gradnorm(builtin::unit_disc().barrier, 1000, rng);
  EXPECT_DOUBLE_EQ(d.M1, 2.0);
  EXPECT_DOUBLE_EQ(d.M2, 2.0);

  const double r = 1.7;
  const auto sphere = boundary_extrema_gradnorm(
      BarrierFunction::quadratic(r * r, SpdMatrix::identity(3)), 1000, rng);
  EXPECT_NEAR(sphere.M1, 2.0 * r, 1e-12);
  EXPECT_NEAR(sphere.M2, 2.0 * r, 1e-12);
}

TEST(GradNormExtremaTest, SampledBracketsTruth) {
  Rng rng(55);
  const auto m = boundary_extrema_gradnorm(example_expr_barrier(), 2000, rng, 1.2);
  EXPECT_EQ(m.provenance.kind, Provenance::Kind::Sampled);
  EXPECT_LE(m.M1, example_m1());
  EXPECT_GE(m.M1, example_m1() / 1.2 - 1e-6);
  EXPECT_GE(m.M2, example_m2());
  EXPECT_LE(m.M2, example_m2() * 1.2 + 1e-6);
  EXPECT_THROW(boundary_extrema_gradnorm(example_expr_barrier(), 999, rng), ValidationError);
}

TEST(MaxLie, AnalyticMatchesBruteForce) {
  const auto lie = max_abs_lie_derivative(builtin::paper_example());
  EXPECT_EQ(lie.provenance.kind, Provenance::Kind::Analytic);
  EXPECT_NEAR(lie.value, example_max_lie_brute(), 1e-6);
  EXPECT_NEAR(lie.value, 76.9485, 1e-3);
}

TEST(MaxLie, SampledIsUpperEstimate) {
  const auto lie = max_abs_lie_derivative(expression_example(), 10000, 1.2);
  EXPECT_EQ(lie.provenance.kind, Provenance::Kind::Sampled);
  EXPECT_GE(lie.value, example_max_lie_brute() * (1 - 1e-6));
  EXPECT_LE(lie.value, 1.2 * example_max_lie_brute() * (1 + 1e-6));
}

TEST(Constants, ExampleValues) {
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  const double m1 = example_m1(), m2 = example_m2();
  const double lg = 2.0 * q_lambda_max();
  const double slope = 1.0 / std::sqrt(9.0 * q_lambda_min());
  const double lie = example_max_lie_brute();
  EXPECT_NEAR(k.M1, m1, 1e-12);
  EXPECT_NEAR(k.M2, m2, 1e-12);
  EXPECT_NEAR(k.eps, 0.5 * m1, 1e-12);
  EXPECT_NEAR(k.eps, 1.9864, 1e-4);
  EXPECT_NEAR(k.L_gradh, lg, 1e-12);
  EXPECT_NEAR(k.L_f, example_l_f(), 1e-12);
  EXPECT_NEAR(k.L_f, 4.1306, 1e-4);
  EXPECT_NEAR(k.max_lie, lie, 1e-6);
  const double a_star = lie / ((0.5 * m1 / lg) / slope);
  EXPECT_NEAR(k.a_star, a_star, 1e-6 * a_star);
  EXPECT_NEAR(k.a_star, 177.903, 1e-3);
  EXPECT_NEAR(k.M3, m2 + 0.5 * m1, 1e-9);
  EXPECT_NEAR(k.M3, 14.8011, 1e-4);
  const double lmin = (3.25 - std::sqrt(4.0625)) / 2.0, lmax = g_lambda_max();
  const double m3 = m2 + 0.5 * m1, eps = 0.5 * m1;
  const double l1 = lmax / (lmin * eps * eps) * lg * (1.0 + m2 * lmax * (m2 + m3) / (lmin * m1 * m1));
  EXPECT_NEAR(k.L1, l1, 1e-9 * l1);
  EXPECT_NEAR(k.L1, 953.0, 0.5);
  EXPECT_TRUE(k.invariants_hold());
  EXPECT_EQ(k.prov_M.kind, Provenance::Kind::Analytic);
  EXPECT_EQ(k.prov_L_f.kind, Provenance::Kind::Analytic);
  EXPECT_EQ(k.prov_max_lie.kind, Provenance::Kind::Analytic);
}

TEST(Constants, ZeroDynamicsGivesZeroAStar) {
  const ConstantsBundle k = compute_constants(zero_dynamics());
  EXPECT_EQ(k.max_lie, 0.0);
  EXPECT_EQ(k.a_star, 0.0);
  EXPECT_EQ(k.L_f, 0.0);
  EXPECT_TRUE(k.invariants_hold());
}

TEST(Constants, EpsFractionOutOfRange) {
  const Scenario s = builtin::paper_example();
  EXPECT_THROW(compute_constants(s, 1.0), ValidationError);
  EXPECT_THROW(compute_constants(s, 0.0), ValidationError);
  EXPECT_THROW(compute_constants(s, 1.5), ValidationError);
  EXPECT_GT(compute_constants(s, 0.9).a_star, compute_constants(s, 0.1).a_star);
}

TEST(Constants, InvariantsHoldForSampledPaths) {
  const ConstantsBundle k = compute_constants(expression_example(), 0.5, 7, 4000);
  EXPECT_TRUE(k.invariants_hold());
  EXPECT_EQ(k.prov_M.kind, Provenance::Kind::Sampled);
  EXPECT_EQ(k.prov_L_gradh.kind, Provenance::Kind::Sampled);
  // Sampled M1 is deflated, so eps and a* move in the conservative direction.
  EXPECT_LE(k.M1, example_m1());
}

TEST(Sigma, ExampleValues) {
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  const Vec x = v2(-1, 2);
  const double slope = 1.0 / std::sqrt(9.0 * q_lambda_min());
  EXPECT_NEAR(sigma_gamma_term(k, 1.0, x, s), slope * 18.0, 1e-12);
  EXPECT_NEAR(sigma1(k, 1.0, x, s), (k.L_f + k.L1 * 18.0) * slope * 18.0, 1e-9);
  EXPECT_NEAR(sigma(k, 1.0, x, s), sigma1(k, 1.0, x, s), 1e-9);
  EXPECT_EQ(sigma(k, 1.0, v2(0, 0), s), 0.0);
  EXPECT_THROW(sigma(k, 0.0, x, s), ValidationError);
}

TEST(Sigma, MonotoneAndVanishing) {
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  Rng rng(56);
  const Sampler in_s = safe_set_sampler(s);
  for (int i = 0; i < 200; ++i) {
    const Vec x = in_s(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double a : {0.1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e6}) {
      const double v = sigma(k, a, x, s);
      EXPECT_LE(v, prev);
      EXPECT_GE(v, 0.0);
      prev = v;
    }
    EXPECT_LE(sigma(k, 1e6, x, s), 1e-3 * sigma(k, 1.0, x, s));
    const bool zero_lie = s.barrier.gradient(x).dot(s.f0(x)) == 0.0;
    EXPECT_EQ(sigma(k, 1.0, x, s) == 0.0, zero_lie);
  }
}

TEST(Lemmas, MarginsOnSampledActiveRegion) {
  for (const Scenario& s : {builtin::paper_example(), builtin::paper_example_wrong_p()}) {
    const ConstantsBundle k = compute_constants(s);
    for (double a : {k.a_star, 2.0 * k.a_star, 10.0 * k.a_star}) {
      Rng rng(57);
      const auto pts = sample_active_region(s, a, 400, rng);
      ASSERT_GE(pts.size(), 100u);
      for (const Vec& x : pts) {
        ASSERT_TRUE(in_active_region(s, a, x));
        EXPECT_GE(lemma1_check(s, k, a, x), -1e-9);
        const auto [lo, hi] = lemma2_check(s, k, a, x);
        EXPECT_GE(lo, -1e-9);
        EXPECT_GE(hi, -1e-9);
        EXPECT_GE(lemma3_check(s, k, a, x), -1e-9);
      }
    }
  }
}

TEST(Lemmas, Preconditions) {
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  EXPECT_THROW(lemma1_check(s, k, k.a_star, v2(-1, 2)), DomainError);
  EXPECT_THROW(lemma2_check(s, k, 0.5 * k.a_star, v2(-1, 2)), ValidationError);
  EXPECT_THROW(lemma3_check(s, k, 0.5 * k.a_star, v2(-1, 2)), ValidationError);
}

TEST(Inclusion, InactivePointIsTrivial) {
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  const InclusionReport r = check_inclusion(s, k, k.a_star, v2(-1, 2));
  EXPECT_EQ(r.which, InclusionReport::Case::Inactive);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.y, v2(-1, 2));
  EXPECT_EQ(r.eta, v2(0, 0));
}

TEST(Inclusion, BoundaryPointIsExact) {
  // On dS the witness is y = x and f_cbf = f - P^-1 eta exactly, so both distances vanish.
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  const Vec y = ellipse_point(2.4, example_q(), 9.0);
  ASSERT_LT(s.barrier.gradient(y).dot(s.f0(y)), 0.0);
  const InclusionReport r = check_inclusion(s, k, k.a_star, y);
  EXPECT_EQ(r.which, InclusionReport::Case::Active);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.dist_xy, 1e-9);
  EXPECT_LE(r.dist_field, 1e-8);
  EXPECT_LE(r.eta_coefficient, 0.0);
}

TEST(Inclusion, GridAtAStar) {
  for (const Scenario& s : {builtin::paper_example(), builtin::paper_example_wrong_p()}) {
    const ConstantsBundle k = compute_constants(s);
    int active = 0, inside = 0;
    for (const Vec& x : grid_points(s.bounds, 32)) {
      if (s.barrier.value(x) < 0.0) continue;
      ++inside;
      const InclusionReport r = check_inclusion(s, k, k.a_star, x);
      EXPECT_TRUE(r.pass) << x.transpose() << " margin " << r.margin;
      active += r.which == InclusionReport::Case::Active;
    }
    EXPECT_GT(inside, 100);
    EXPECT_GT(active, 0);
  }
}

TEST(Inclusion, Errors) {
  const Scenario s = builtin::paper_example();
  const ConstantsBundle k = compute_constants(s);
  EXPECT_THROW(check_inclusion(s, k, k.a_star, v2(5, 5)), OutsideSafeSetError);
  EXPECT_THROW(check_inclusion(s, k, k.a_star, Vec::Zero(3)), DimensionError);
}
