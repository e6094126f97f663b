#include "gradconv/models.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gradconv;

TEST(Link, LogisticDerivativesAtZero) {
  LinkFunction s{LinkKind::logistic};
  EXPECT_DOUBLE_EQ(s.eval(0.0), 0.5);
  EXPECT_DOUBLE_EQ(s.d1(0.0), 0.25);
  EXPECT_DOUBLE_EQ(s.d2(0.0), 0.0);
  EXPECT_DOUBLE_EQ(s.d3(0.0), -0.125);
  EXPECT_NEAR(s.d1(1.0), 0.19661193324148185, 1e-16);
  EXPECT_NEAR(s.eval(-800.0), 0.0, 1e-300);
}

TEST(Link, ProbitReferenceValues) {
  LinkFunction p{LinkKind::probit};
  EXPECT_NEAR(p.eval(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(p.d1(0.5), 0.35206532676429947, 1e-15);
}

TEST(Link, DerivativeChainMatchesFiniteDifferences) {
  for (LinkKind k : {LinkKind::logistic, LinkKind::probit}) {
    LinkFunction f{k};
    for (double s = -3.0; s <= 3.0; s += 0.37) {
      const double h = 1e-5;
      EXPECT_NEAR(f.d1(s), (f.eval(s + h) - f.eval(s - h)) / (2 * h), 1e-9);
      EXPECT_NEAR(f.d2(s), (f.d1(s + h) - f.d1(s - h)) / (2 * h), 1e-9);
      EXPECT_NEAR(f.d3(s), (f.d2(s + h) - f.d2(s - h)) / (2 * h), 1e-9);
    }
  }
}

TEST(Tukey, ReferenceValuesAndSaturation) {
  RobustRho r;
  EXPECT_NEAR(r.eval(1.0), 0.4775661000571406, 1e-15);
  EXPECT_NEAR(r.eval(5.0), 3.658204166666666, 1e-14);
  EXPECT_DOUBLE_EQ(r.d1(6.0), 0.0);
  EXPECT_DOUBLE_EQ(r.d2(0.0), 1.0);
  for (double t = -4.6; t <= 4.6; t += 0.23) {
    const double h = 1e-5;
    EXPECT_NEAR(r.d1(t), (r.eval(t + h) - r.eval(t - h)) / (2 * h), 1e-8);
    EXPECT_NEAR(r.d2(t), (r.d1(t + h) - r.d1(t - h)) / (2 * h), 1e-8);
    EXPECT_NEAR(r.d3(t), (r.d2(t + h) - r.d2(t - h)) / (2 * h), 1e-8);
  }
}

TEST(Constants, LogisticUnitBalls) {
  ModelSpec m = make_glm(LinkKind::logistic, GeometryConfig::l2());
  EXPECT_NEAR(m.constants.c_lower, 0.19661193324148185, 1e-12);
  EXPECT_DOUBLE_EQ(m.constants.C_upper, 1.0);
  EXPECT_DOUBLE_EQ(m.constants.grad_range_G, 2.0);
  EXPECT_DOUBLE_EQ(m.constants.loss_smoothness_H, 6.0);
  EXPECT_DOUBLE_EQ(m.constants.interval_S.lo, -1.0);
}

TEST(Constants, RobustCurvatureMatchesQuadrature) {
  ModelSpec m = make_robust(RobustRho{}, GeometryConfig::l2(), UniformNoise{0.3});
  // E[(rho'(0.01 + z) - rho'(-0.01 + z)) / 0.02], z ~ U[-0.3, 0.3], by quadrature.
  EXPECT_NEAR(m.constants.c_lower, 0.9918070182786525, 4 * m.constants.c_lower_stderr + 1e-12);
  EXPECT_GT(m.constants.c_lower_stderr, 0.0);
  EXPECT_DOUBLE_EQ(m.Y_bound, 1.3);
}

TEST(Constants, DegenerateAndInvalidModels) {
  EXPECT_THROW(make_robust(RobustRho{}, GeometryConfig::l2(), UniformNoise{0.3}, 1.0), std::invalid_argument);
  EXPECT_THROW(make_robust(RobustRho{}, GeometryConfig::make(Exponent::finite(2.0), -1.0, 1.0, 1)),
               std::invalid_argument);
}

TEST(Loss, GradientAndHessianMatchFiniteDifferences) {
  std::vector<ModelSpec> models = {make_glm(LinkKind::logistic, GeometryConfig::l2()),
                                   make_glm(LinkKind::probit, GeometryConfig::l2()),
                                   make_robust(RobustRho{}, GeometryConfig::l2())};
  Rng rng = Rng::stream(5, "loss");
  for (const auto& m : models) {
    for (int k = 0; k < 100; ++k) {
      Vec w(4), x(4);
      for (int i = 0; i < 4; ++i) w[i] = 0.4 * rng.normal(), x[i] = 0.4 * rng.normal();
      double y = m.family == Family::glm ? double(rng.bernoulli(0.5)) : rng.uniform(-1.0, 1.0);
      Vec g = grad(m, w, x, y);
      Vec gf = oracle::fd_gradient([&](const Vec& v) { return loss(m, v, x, y); }, w);
      EXPECT_LE((g - gf).norm(), 1e-8 * std::max(1.0, g.norm()));
      Mat H = hessian(m, w, x, y);
      Mat Hf = oracle::fd_jacobian([&](const Vec& v) { return grad(m, v, x, y); }, w);
      EXPECT_LE((H - Hf).norm(), 1e-7 * std::max(1.0, H.norm()));
    }
  }
}

TEST(Loss, ReluSubgradientConvention) {
  ModelSpec m = make_relu();
  Vec w = Vec::Zero(2), x = Vec::Ones(2);
  EXPECT_DOUBLE_EQ(loss(m, w, x, 1.0), 0.0);
  // Boundary <w, x> = 0 takes the active branch.
  EXPECT_DOUBLE_EQ(grad(m, w, x, -1.0)[0], 1.0);
  EXPECT_THROW(hessian(m, w, x, 1.0), std::invalid_argument);
}

TEST(Loss, DimensionMismatchRejected) {
  ModelSpec m = make_glm(LinkKind::logistic, GeometryConfig::l2());
  EXPECT_THROW(loss(m, Vec::Zero(2), Vec::Zero(3), 1.0), std::invalid_argument);
}
