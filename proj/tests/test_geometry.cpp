#include "gradconv/geometry.hpp"
#include "gradconv/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gradconv;

TEST(Exponent, DualPairs) {
  EXPECT_DOUBLE_EQ(Exponent::finite(2.0).dual().value(), 2.0);
  EXPECT_DOUBLE_EQ(Exponent::finite(3.0).dual().value(), 1.5);
  EXPECT_TRUE(Exponent::finite(1.0).dual().is_infinite());
  EXPECT_DOUBLE_EQ(Exponent::infinity().dual().value(), 1.0);
  EXPECT_THROW(Exponent::finite(0.5), std::invalid_argument);
}

TEST(Norm, KnownValues) {
  Vec v(2);
  v << 3.0, -4.0;
  EXPECT_DOUBLE_EQ(norm(v, 2.0), 5.0);
  EXPECT_DOUBLE_EQ(norm(v, 1.0), 7.0);
  EXPECT_DOUBLE_EQ(norm(v, Exponent::infinity()), 4.0);
  EXPECT_NEAR(norm(v, 3.0), 4.497941445275415, 1e-14);
  EXPECT_THROW(norm(v, 0.5), std::invalid_argument);
  EXPECT_DOUBLE_EQ(norm(Vec::Zero(3), 3.0), 0.0);
}

TEST(Norm, HolderDualityOnRandomVectors) {
  Rng rng = Rng::stream(7, "holder");
  for (int k = 0; k < 200; ++k) {
    Vec a(6), b(6);
    for (int i = 0; i < 6; ++i) a[i] = rng.normal(), b[i] = rng.normal();
    for (double p : {2.0, 3.0, 5.0}) {
      Exponent e = Exponent::finite(p);
      EXPECT_LE(std::abs(a.dot(b)), norm(a, e) * norm(b, e.dual()) * (1 + 1e-12));
    }
  }
}

TEST(Smoothness, BetaIsPMinusOne) {
  EXPECT_DOUBLE_EQ(smoothness_constant(Exponent::finite(2.0), 10), 1.0);
  EXPECT_DOUBLE_EQ(smoothness_constant(Exponent::finite(4.0), 10), 3.0);
  EXPECT_DOUBLE_EQ(proxy_exponent(3), 2.0);
  EXPECT_NEAR(smoothness_constant(Exponent::infinity(), 1000), std::log(1000.0) - 1.0, 1e-12);
  EXPECT_THROW(smoothness_constant(Exponent::finite(1.5), 3), std::invalid_argument);
}

TEST(Projection, L2KnownValue) {
  Vec v(2);
  v << 3.0, 4.0;
  Vec p = project(v, Ball{2, 1.0});
  EXPECT_NEAR(p[0], 0.6, 1e-15);
  EXPECT_NEAR(p[1], 0.8, 1e-15);
}

TEST(Projection, L1MatchesReference) {
  Vec v(4);
  v << 0.8, -0.6, 0.1, 2.0;
  Vec p = project(v, Ball{1, 1.5});
  EXPECT_NEAR(p[0], 0.15, 1e-12);
  EXPECT_NEAR(p[1], 0.0, 1e-12);
  EXPECT_NEAR(p[2], 0.0, 1e-12);
  EXPECT_NEAR(p[3], 1.35, 1e-12);
}

TEST(Projection, L1SatisfiesKktOnRandomInputs) {
  Rng rng = Rng::stream(11, "l1");
  for (int k = 0; k < 500; ++k) {
    Vec v(1 + rng.index(8));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 3.0 * rng.normal();
    double r = rng.uniform(0.1, 2.0);
    Vec p = project(v, Ball{1, r});
    EXPECT_TRUE(oracle::l1_projection_kkt(v, p, r)) << "case " << k;
  }
}

TEST(Projection, IdempotentAndNonExpansive) {
  Rng rng = Rng::stream(3, "proj");
  for (int exponent : {1, 2}) {
    Ball ball{exponent, 0.7};
    for (int k = 0; k < 200; ++k) {
      Vec a(5), b(5);
      for (int i = 0; i < 5; ++i) a[i] = 2 * rng.normal(), b[i] = 2 * rng.normal();
      Vec pa = project(a, ball), pb = project(b, ball);
      EXPECT_LE((project(pa, ball) - pa).norm(), 1e-12);
      EXPECT_LE((pa - pb).norm(), (a - b).norm() + 1e-12);
    }
  }
  EXPECT_THROW(project(Vec::Ones(2), Ball{3, 1.0}), std::invalid_argument);
}

TEST(GeometryConfig, WeightBallFollowsDualExponent) {
  auto g = GeometryConfig::make(Exponent::infinity(), 1.0, 2.0, 50);
  EXPECT_EQ(g.weight_ball().exponent, 1);
  EXPECT_DOUBLE_EQ(g.weight_ball().radius, 2.0);
  EXPECT_NEAR(g.beta, std::log(50.0) - 1.0, 1e-12);
  EXPECT_THROW(GeometryConfig::make(Exponent::finite(1.5), 1, 1, 3), std::invalid_argument);
  EXPECT_THROW(GeometryConfig::make(Exponent::finite(3.0), 1, 1, 3).weight_ball(), std::invalid_argument);
}
