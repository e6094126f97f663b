#include "gradconv/gdcheck.hpp"

#include <gtest/gtest.h>

using namespace gradconv;

namespace {

ModelSpec logistic() { return make_glm(LinkKind::logistic, GeometryConfig::l2()); }

}  // namespace

TEST(GdConstants, NormBasedLogistic) {
  GdSpec gd = gd_constants(logistic(), CovarianceSummary{}, GdRegime::norm_based);
  EXPECT_NEAR(gd.mu, 5.086161269630487, 1e-12);
  EXPECT_EQ(gd.alpha, 1.0);
}

TEST(GdConstants, LowDimNeedsSpectrum) {
  CovarianceSummary cov;
  cov.lambda_min = 0.0;
  EXPECT_THROW(gd_constants(logistic(), cov, GdRegime::l2_lowdim), std::domain_error);
  cov.lambda_min = 0.2;
  GdSpec gd = gd_constants(logistic(), cov, GdRegime::l2_lowdim);
  EXPECT_EQ(gd.alpha, 2.0);
  EXPECT_THROW(gd_constants(make_relu(), cov, GdRegime::norm_based), std::invalid_argument);
  EXPECT_THROW(gd_constants(logistic(), cov, GdRegime::sparse), std::domain_error);
}

TEST(GdConstants, RegimeNamesRoundTrip) {
  for (GdRegime r : {GdRegime::norm_based, GdRegime::l2_lowdim, GdRegime::sparse})
    EXPECT_EQ(parse_regime(regime_name(r)), r);
}

TEST(Certificate, FrozenValue) {
  ModelSpec m = logistic();
  GdSpec gd = gd_constants(m, CovarianceSummary{}, GdRegime::norm_based);
  Certificate c = excess_risk_certificate(m, gd, 0.01, 1000, 10.0, 0.05);
  EXPECT_NEAR(c.total, 1.9223411175459597, 1e-12);
  EXPECT_THROW(excess_risk_certificate(m, gd, 0.01, 1000, 10.0, 1.0), std::invalid_argument);
  EXPECT_THROW(excess_risk_certificate(m, gd, 0.01, 0, 10.0, 0.05), std::invalid_argument);
}

TEST(Certificate, MonotoneInEachArgument) {
  ModelSpec m = logistic();
  GdSpec gd = gd_constants(m, CovarianceSummary{}, GdRegime::norm_based);
  double base = excess_risk_certificate(m, gd, 0.01, 1000, 10.0, 0.05).total;
  EXPECT_GT(excess_risk_certificate(m, gd, 0.02, 1000, 10.0, 0.05).total, base);
  EXPECT_GT(excess_risk_certificate(m, gd, 0.01, 1000, 20.0, 0.05).total, base);
  EXPECT_GT(excess_risk_certificate(m, gd, 0.01, 1000, 10.0, 0.01).total, base);
  EXPECT_LT(excess_risk_certificate(m, gd, 0.01, 4000, 10.0, 0.05).total, base);
}

TEST(Probes, StayInsideBall) {
  Vec w = Vec::Constant(4, 0.3);
  for (const auto& p : gd_probes(w, Ball{2, 1.0}, 100, 2)) EXPECT_LE(p.norm(), 1.0 + 1e-12);
  for (const auto& p : gd_probes(w, Ball{1, 1.2}, 100, 2)) EXPECT_LE(p.cwiseAbs().sum(), 1.2 + 1e-12);
}

TEST(VerifyGd, NoViolationsOnSmallRun) {
  ModelSpec m = logistic();
  Vec w = Vec::Constant(3, 0.4);
  GdSpec gd = gd_constants(m, CovarianceSummary{}, GdRegime::norm_based);
  GdReport rep = verify_gd(m, w, gd, 40, 20000, 7);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_EQ(static_cast<int>(rep.rows.size()), 40);
  EXPECT_EQ(rep.holds + rep.inconclusive + rep.violations, 40);
}

TEST(VerifyGd, ProbeAtTruthHasZeroExcess) {
  ModelSpec m = logistic();
  Vec w = Vec::Constant(3, 0.4);
  Dataset oracle = generate(m, w, 5000, 1);
  GdSpec gd = gd_constants(m, CovarianceSummary{}, GdRegime::norm_based);
  ProbeRow r = gd_probe(m, oracle, w, gd, w, 0);
  EXPECT_EQ(r.excess, 0.0);
  EXPECT_EQ(r.verdict, Verdict::holds);
}
